#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let dim = data.first().map(|&b| usize::from(b % 64) + 1);
    let _ = fedcorr::ingest::parse_libsvm(data, None);
    if let Ok(ds) = fedcorr::ingest::parse_libsvm(data, dim) {
        let mut out = Vec::new();
        fedcorr::ingest::write_libsvm(&ds, &mut out).unwrap();
        assert_eq!(fedcorr::ingest::parse_libsvm(out.as_slice(), dim).unwrap(), ds);
    }
});
