#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_chanest::channel_sim::{decode_split, encode_split};

fuzz_target!(|data: &[u8]| {
    if let Ok((header, samples)) = decode_split(data) {
        let again = encode_split(&header, &samples).expect("decoded split re-encodes");
        assert_eq!(decode_split(&again).expect("re-encoded split decodes"), (header, samples));
    }
});
