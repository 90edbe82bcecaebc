#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::corpus::{parse_corpus_str, parse_record, write_corpus};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(u) = parse_record(text) {
        if u.validate().is_ok() {
            let mut buf = Vec::new();
            write_corpus(&mut buf, std::slice::from_ref(&u)).unwrap();
            let back = parse_corpus_str(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back[0], u);
        }
    }
    let _ = parse_corpus_str(text);
});
