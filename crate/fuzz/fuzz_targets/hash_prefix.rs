#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(prefix) = c3::hashes::HashPrefix::parse(text) {
        assert_eq!(prefix.len(), text.len());
        assert_eq!(prefix.bits() as usize, 4 * text.len());
        let again = c3::hashes::HashPrefix::parse(prefix.as_str()).unwrap();
        assert_eq!(prefix, again);
    }
});
