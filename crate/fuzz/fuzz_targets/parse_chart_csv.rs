#![no_main]

use libfuzzer_sys::fuzz_target;
use race_dde_cli::chart;

fuzz_target!(|data: &str| {
    let _ = chart::trajectory_chart(data);
    let _ = chart::ladder_chart(data);
    let _ = chart::hopf_chart(data);
    let _ = chart::series_chart(data);
    let _ = chart::coefficient_chart(data);
    let _ = chart::sweep_chart(data);
});
