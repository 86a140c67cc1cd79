#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = fedcorr::ingest::parse_idx(data) {
        let bytes = fedcorr::ingest::write_idx(&t).unwrap();
        assert_eq!(fedcorr::ingest::parse_idx(&bytes).unwrap(), t);
    }
});
