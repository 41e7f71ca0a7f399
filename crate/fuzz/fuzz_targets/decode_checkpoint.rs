#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_chanest::models::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok((header, model)) = decode_checkpoint(data) {
        let again = encode_checkpoint(&model, header.seed, header.geometry.as_ref()).expect("re-encodes");
        let (_, back) = decode_checkpoint(&again).expect("re-encoded checkpoint decodes");
        assert_eq!(back, model);
    }
});
