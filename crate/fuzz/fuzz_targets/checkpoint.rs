#![no_main]
use libfuzzer_sys::fuzz_target;
use nerfpp::field::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        let bytes = encode(&ckpt);
        assert!(decode(&bytes).is_ok());
    }
});
