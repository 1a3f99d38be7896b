#![no_main]

use libfuzzer_sys::fuzz_target;
use race_dde_cli::args::{parse_list, parse_point, parse_range, parse_window};

fuzz_target!(|data: &str| {
    let _ = parse_list(data);
    if let Ok([lo, hi]) = parse_window(data) {
        assert!(lo < hi);
    }
    if let Ok(range) = parse_range(data) {
        let points = range.points();
        assert_eq!(points.len(), range.count);
        assert_eq!(points[points.len() - 1], range.hi);
    }
    let _ = parse_point(data);
});
