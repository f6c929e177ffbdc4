#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(world) = c3::simlab::SyntheticWorld::from_json(data) {
        // Accepted worlds are proper distributions and survive a
        // round trip.
        let total: f64 = (0..world.users().len())
            .flat_map(|u| (0..world.passwords().len()).map(move |w| (u, w)))
            .map(|(u, w)| world.p(u, w))
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
        let again = c3::simlab::SyntheticWorld::from_json(world.to_json().as_bytes()).unwrap();
        assert_eq!(world, again);
    }
});
