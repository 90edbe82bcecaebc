#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::generator::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = GeneratorConfig::from_toml(text) {
        let _ = cfg.validate();
    }
});
