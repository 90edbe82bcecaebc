#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::metrics::{parse_prediction_line, parse_predictions};

fuzz_target!(|data: &[u8]| {
    let _ = parse_predictions(data);
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_prediction_line(text);
    }
});
