#![no_main]
use libfuzzer_sys::fuzz_target;
use nerfpp::scene::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(manifest) = parse_manifest(text) {
        // Anything accepted must survive a write/read cycle.
        let again = serde_json::to_string(&manifest).unwrap();
        assert_eq!(parse_manifest(&again).unwrap(), manifest);
    }
});
