#![no_main]

use libfuzzer_sys::fuzz_target;
use race_dde::model::{CoefficientSignal, HistoryFunction, HistoryKind};

fuzz_target!(|data: &str| {
    if let Ok(signal) = serde_json::from_str::<CoefficientSignal>(data) {
        for t in [0.0, 0.5, 1.0, 1e3] {
            let _ = signal.eval(t);
        }
    }
    if let Ok(kind) = serde_json::from_str::<HistoryKind>(data) {
        if let Ok(history) = HistoryFunction::new(1.0, kind) {
            for theta in [-1.0, -0.5, 0.0] {
                let _ = history.eval(theta);
            }
        }
    }
});
