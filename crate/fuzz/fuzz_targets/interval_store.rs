#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = c3::bucketize::IntervalStore::decode(data) {
        assert_eq!(store.encode(), data);
        // Stabbing any valid bucket must not panic.
        let probe = store.num_buckets() / 2;
        let _ = store.bucket_contents(probe);
        assert!(store.bucket_contents(store.num_buckets()).is_err());
    }
});
