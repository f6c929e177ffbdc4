#![no_main]

use libfuzzer_sys::fuzz_target;

use c3::kv::KeyValueStore;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = c3::kv::FileTable::decode(data) {
        // Scans over a decoded table are ordered and prefix-consistent.
        let mut last: Option<Vec<u8>> = None;
        for (k, _) in table.scan_prefix(b"") {
            if let Some(prev) = &last {
                assert!(prev.as_slice() < k);
            }
            last = Some(k.to_vec());
        }
        let _ = table.get(b"A");
        let _ = table.scan_prefix(b"ZZ").count();
    }
});
