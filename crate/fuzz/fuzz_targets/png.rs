#![no_main]
use libfuzzer_sys::fuzz_target;
use nerfpp::image::{decode_png, Image};

fuzz_target!(|data: &[u8]| {
    if let Ok(rgb) = decode_png(data) {
        let img = Image::from_rgb8(&rgb);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
