#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = morphrom::pipeline::RunConfig::from_json(text) {
            let _ = c.hash();
            let _ = c.phases();
        }
    }
});
