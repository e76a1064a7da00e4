#![no_main]
use libfuzzer_sys::fuzz_target;
use nerfpp::image::Image;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = Image::decode_raw(data) {
        assert_eq!(img.data.len(), 3 * img.width * img.height);
    }
});
