#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::metrics::EvalReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = EvalReport::from_json(text) {
        assert!((0.0..=1.0).contains(&r.eer));
        let _ = EvalReport::from_json(&r.to_json()).unwrap();
    }
});
