#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(est) = c3::estimator::HybridEstimator::decode(data) {
        // Anything that decodes re-encodes to the same bytes and gives
        // finite, nonnegative estimates.
        assert_eq!(est.encode(), data);
        let p = est.estimate("password1");
        assert!(p.is_finite() && p >= 0.0);
    }
});
