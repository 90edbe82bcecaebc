#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::corpus::BioTag;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tag) = text.parse::<BioTag>() {
        assert_eq!(tag.to_string().parse::<BioTag>().unwrap(), tag);
    }
});
