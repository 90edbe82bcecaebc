#![no_main]

use libfuzzer_sys::fuzz_target;
use pausetag::encoder::EncoderModel;
use pausetag::numcore::{Checkpoint, DType};
use pausetag::tagger::TaggerModel;

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = Checkpoint::decode(data) else { return };
    let again = Checkpoint::decode(&ckpt.encode(DType::F64)).unwrap();
    assert_eq!(again.meta, ckpt.meta);
    let _ = EncoderModel::from_checkpoint(&ckpt);
    let _ = TaggerModel::from_checkpoint(&ckpt);
});
