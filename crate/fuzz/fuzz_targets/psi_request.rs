#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Some((x, _bucket)) = c3::server::parse_psi_body(data) {
        // Whatever parses as a request body must go through strict
        // element validation without panicking.
        let _ = c3::psi::decode_element(&x);
    }
});
