#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = morphrom::pipeline::dataset::parse_manifest(data) {
        let _ = m.accepted().count();
    }
});
