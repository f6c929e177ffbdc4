#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(hash) = c3::pipeline::parse_digest_line(line) {
        // A parsed digest is canonical: uppercase hex of a known width,
        // and reparsing it is the identity.
        assert!(hash.as_str().bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b)));
        let again = c3::pipeline::parse_digest_line(hash.as_str()).unwrap();
        assert_eq!(hash, again);
    }
});
