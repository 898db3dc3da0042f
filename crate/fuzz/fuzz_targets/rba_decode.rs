#![no_main]
use libfuzzer_sys::fuzz_target;
use morphrom::pipeline::rba::Array;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = Array::decode(data) {
        assert_eq!(a.encode(), data);
    }
});
