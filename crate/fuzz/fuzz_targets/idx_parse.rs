#![no_main]

use libfuzzer_sys::fuzz_target;
use seboost::data::idx;

fuzz_target!(|data: &[u8]| {
    if let Ok(tensor) = idx::parse(data) {
        let bytes = tensor.to_bytes();
        assert_eq!(bytes, data);
        assert_eq!(idx::parse(&bytes).as_ref(), Ok(&tensor));
    }
});
