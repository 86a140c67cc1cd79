#![no_main]

use fedcorr::compressors::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(update) = decode(data) {
        assert_eq!(encode(&update), data);
    }
});
