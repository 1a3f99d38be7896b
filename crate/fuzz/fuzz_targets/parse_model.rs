#![no_main]

use libfuzzer_sys::fuzz_target;
use race_dde::io::{model_to_json, parse_model};

fuzz_target!(|data: &str| {
    if let Ok(model) = parse_model(data) {
        // accepted models must survive a write/read cycle unchanged
        let text = model_to_json(&model);
        let again = parse_model(&text).expect("serialized model parses");
        assert_eq!(model_to_json(&again), text);
    }
});
