#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::tagger::TaggerConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = TaggerConfig::from_toml(text) {
        let _ = cfg.validate();
    }
});
