//! Regression pass over the checked-in fuzz corpus seeds: every seed is
//! fed through the same entry point its fuzz target exercises, so the
//! corpus and the decoders stay in sync even where `cargo fuzz` is not
//! available.

use std::path::PathBuf;

use c3::kv::KeyValueStore;

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target)
}

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = corpus_dir(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("missing corpus dir {}: {e}", dir.display()))
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().to_string_lossy().to_string(),
                std::fs::read(entry.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "corpus {target} has no seeds");
    out
}

#[test]
fn digest_line_seeds() {
    for (name, bytes) in seeds("digest_line") {
        if let Ok(line) = std::str::from_utf8(&bytes) {
            if let Ok(hash) = c3::pipeline::parse_digest_line(line.trim_end()) {
                assert_eq!(
                    c3::pipeline::parse_digest_line(hash.as_str()).unwrap(),
                    hash,
                    "{name}"
                );
            }
        }
    }
}

#[test]
fn hash_prefix_seeds() {
    for (name, bytes) in seeds("hash_prefix") {
        if let Ok(text) = std::str::from_utf8(&bytes) {
            if let Ok(prefix) = c3::hashes::HashPrefix::parse(text) {
                assert_eq!(prefix.len(), text.len(), "{name}");
            }
        }
    }
}

#[test]
fn estimator_artifact_seeds_decode_and_roundtrip() {
    let mut decoded = 0;
    for (name, bytes) in seeds("estimator_artifact") {
        if let Ok(est) = c3::estimator::HybridEstimator::decode(&bytes) {
            assert_eq!(est.encode(), bytes, "{name}");
            assert!(est.estimate("password1") >= 0.0);
            decoded += 1;
        }
    }
    assert!(decoded >= 1, "no valid estimator seed decoded");
}

#[test]
fn interval_store_seeds_decode_and_roundtrip() {
    let mut decoded = 0;
    for (name, bytes) in seeds("interval_store") {
        if let Ok(store) = c3::bucketize::IntervalStore::decode(&bytes) {
            assert_eq!(store.encode(), bytes, "{name}");
            let _ = store.bucket_contents(0).unwrap();
            decoded += 1;
        }
    }
    assert!(decoded >= 1, "no valid interval-store seed decoded");
}

#[test]
fn psi_store_seeds_decode_and_roundtrip() {
    let mut decoded = 0;
    for (name, bytes) in seeds("psi_store") {
        if let Ok(store) = c3::psi::PsiBucketStore::decode(&bytes) {
            assert_eq!(store.encode(), bytes, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 1, "no valid psi-store seed decoded");
}

#[test]
fn kv_table_seeds_decode() {
    let mut decoded = 0;
    for (name, bytes) in seeds("kv_table") {
        if let Ok(table) = c3::kv::FileTable::decode(&bytes) {
            assert!(table.len() > 0, "{name}");
            let mut last: Option<Vec<u8>> = None;
            for (k, _) in table.scan_prefix(b"") {
                if let Some(prev) = &last {
                    assert!(prev.as_slice() < k, "{name}: unordered scan");
                }
                last = Some(k.to_vec());
            }
            decoded += 1;
        }
    }
    assert!(decoded >= 1, "no valid kv seed decoded");
}

#[test]
fn psi_request_seeds_parse() {
    let mut parsed = 0;
    for (name, bytes) in seeds("psi_request") {
        if let Some((x, _)) = c3::server::parse_psi_body(&bytes) {
            let _ = c3::psi::decode_element(&x);
            parsed += 1;
        } else {
            panic!("psi_request seed {name} should parse as a form body");
        }
    }
    assert!(parsed >= 1);
}

#[test]
fn world_file_seeds_decode_and_roundtrip() {
    let mut decoded = 0;
    for (name, bytes) in seeds("world_file") {
        if let Ok(world) = c3::simlab::SyntheticWorld::from_json(&bytes) {
            let again =
                c3::simlab::SyntheticWorld::from_json(world.to_json().as_bytes()).unwrap();
            assert_eq!(world, again, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 1, "no valid world seed decoded");
}
