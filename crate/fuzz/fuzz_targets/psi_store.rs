#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = c3::psi::PsiBucketStore::decode(data) {
        assert_eq!(store.encode(), data);
        let _ = store.bucket(0);
    }
});
