//! The sharded FSB interval store.
//!
//! One interval per unique leaked password, split across `r` shards over
//! contiguous bucket ranges; intervals spanning shard boundaries are
//! duplicated into every shard they touch. Stabbing a bucket id returns
//! the salted digests of exactly the passwords whose range covers it.

use std::collections::BTreeSet;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::interval_tree::IntervalTree;
use super::{fsb_interval, BucketId, FsbParams};
use crate::wire::Cursor;

const MAGIC: &[u8; 8] = b"C3FSBST1";
/// Target intervals per shard when the caller does not pick r.
pub const DEFAULT_SHARD_TARGET: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bucket id {b} out of range for {num_buckets} buckets")]
    BucketOutOfRange { b: BucketId, num_buckets: u64 },
    #[error("not an interval-store file (bad magic)")]
    BadMagic,
    #[error("store file is truncated or corrupt: {0}")]
    Corrupt(&'static str),
    #[error("store checksum mismatch")]
    ChecksumMismatch,
}

#[derive(Debug, Clone, PartialEq)]
struct StoredPassword {
    digest: [u8; 32],
    start: BucketId,
    gamma: u64,
}

#[derive(Debug)]
struct Shard {
    lo: BucketId,
    hi: BucketId,
    segments: Vec<(u64, u64, u32)>,
    tree: IntervalTree,
    members: usize,
}

/// Immutable stabbing-query store over password bucket ranges.
pub struct IntervalStore {
    num_buckets: u64,
    q_bar: u64,
    p_qbar: f64,
    salt: Vec<u8>,
    estimator_digest: [u8; 32],
    shard_width: u64,
    passwords: Vec<StoredPassword>,
    shards: Vec<Shard>,
}

impl IntervalStore {
    /// Build from the unique passwords of a leak corpus. `shards` is the
    /// requested shard count r; shard ranges have width ceil(|B|/r) so
    /// the last shard always reaches |B|-1.
    pub fn build<'a, I>(
        passwords: I,
        params: &FsbParams<'_>,
        shards: usize,
        estimator_digest: [u8; 32],
    ) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut stored = Vec::new();
        for w in passwords {
            let interval = fsb_interval(w, params);
            stored.push(StoredPassword {
                digest: super::fsb_salted_digest(w, params.salt),
                start: interval.start,
                gamma: interval.gamma,
            });
        }
        if stored.is_empty() {
            return Err(StoreError::EmptyDataset);
        }

        let shard_width = shard_width(params.num_buckets, shards.max(1) as u64);
        let mut store = IntervalStore {
            num_buckets: params.num_buckets,
            q_bar: params.q_bar,
            p_qbar: params.p_qbar,
            salt: params.salt.to_vec(),
            estimator_digest,
            shard_width,
            passwords: stored,
            shards: Vec::new(),
        };
        store.rebuild_shards();
        Ok(store)
    }

    fn rebuild_shards(&mut self) {
        let shard_count = self.num_buckets.div_ceil(self.shard_width);
        let mut per_shard: Vec<Vec<(u64, u64, u32)>> = vec![Vec::new(); shard_count as usize];
        for (id, pw) in self.passwords.iter().enumerate() {
            let interval = super::BucketInterval {
                start: pw.start,
                gamma: pw.gamma,
                num_buckets: self.num_buckets,
            };
            for (lo, hi) in interval.segments() {
                let first = lo / self.shard_width;
                let last = hi / self.shard_width;
                for s in first..=last {
                    per_shard[s as usize].push((lo, hi, id as u32));
                }
            }
        }
        self.shards = per_shard
            .into_iter()
            .enumerate()
            .map(|(i, segments)| {
                let members = segments
                    .iter()
                    .map(|&(_, _, id)| id)
                    .collect::<BTreeSet<_>>()
                    .len();
                Shard {
                    lo: i as u64 * self.shard_width,
                    hi: ((i as u64 + 1) * self.shard_width - 1).min(self.num_buckets - 1),
                    tree: IntervalTree::build(segments.clone()),
                    segments,
                    members,
                }
            })
            .collect();
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }

    pub fn q_bar(&self) -> u64 {
        self.q_bar
    }

    pub fn p_qbar(&self) -> f64 {
        self.p_qbar
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }

    pub fn estimator_digest(&self) -> [u8; 32] {
        self.estimator_digest
    }

    pub fn password_count(&self) -> usize {
        self.passwords.len()
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    /// Distinct passwords present in each shard, for load inspection.
    pub fn shard_members(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.members).collect()
    }

    /// The salted digests (uppercase hex) of every stored password whose
    /// bucket range covers `b`.
    pub fn bucket_contents(&self, b: BucketId) -> Result<BTreeSet<String>, StoreError> {
        if b >= self.num_buckets {
            return Err(StoreError::BucketOutOfRange {
                b,
                num_buckets: self.num_buckets,
            });
        }
        let shard = &self.shards[(b / self.shard_width) as usize];
        debug_assert!(b >= shard.lo && b <= shard.hi);
        Ok(shard
            .tree
            .stab(b)
            .into_iter()
            .map(|id| hex::encode_upper(self.passwords[id as usize].digest))
            .collect())
    }

    /// Serialize to the versioned on-disk layout (see docs/formats.md).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.num_buckets.to_le_bytes());
        out.extend_from_slice(&self.q_bar.to_le_bytes());
        out.extend_from_slice(&self.p_qbar.to_le_bytes());
        out.push(self.salt.len() as u8);
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.estimator_digest);
        out.extend_from_slice(&self.shard_width.to_le_bytes());

        out.extend_from_slice(&(self.passwords.len() as u32).to_le_bytes());
        for pw in &self.passwords {
            out.extend_from_slice(&pw.digest);
            out.extend_from_slice(&pw.start.to_le_bytes());
            out.extend_from_slice(&pw.gamma.to_le_bytes());
        }

        out.extend_from_slice(&(self.shards.len() as u32).to_le_bytes());
        for shard in &self.shards {
            out.extend_from_slice(&shard.lo.to_le_bytes());
            out.extend_from_slice(&shard.hi.to_le_bytes());
            out.extend_from_slice(&(shard.segments.len() as u32).to_le_bytes());
            for &(lo, hi, id) in &shard.segments {
                out.extend_from_slice(&lo.to_le_bytes());
                out.extend_from_slice(&hi.to_le_bytes());
                out.extend_from_slice(&id.to_le_bytes());
            }
        }

        let digest: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&digest);
        out
    }

    /// Decode and validate a store image; shard trees are rebuilt from
    /// the serialized per-shard segment lists.
    pub fn decode(bytes: &[u8]) -> Result<Self, StoreError> {
        let truncated = || StoreError::Corrupt("unexpected end of input");
        if bytes.len() < MAGIC.len() + 32 {
            return Err(StoreError::Corrupt("too short"));
        }
        let body_end = bytes.len() - 32;
        let digest: [u8; 32] = Sha256::digest(&bytes[..body_end]).into();
        if digest != bytes[body_end..] {
            return Err(StoreError::ChecksumMismatch);
        }

        let mut c = Cursor::new(&bytes[..body_end]);
        if c.read_slice(MAGIC.len()).ok_or_else(truncated)? != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let num_buckets = c.read_u64().ok_or_else(truncated)?;
        if num_buckets == 0 {
            return Err(StoreError::Corrupt("zero buckets"));
        }
        let q_bar = c.read_u64().ok_or_else(truncated)?;
        let p_qbar = c.read_f64().ok_or_else(truncated)?;
        if p_qbar.is_nan() || p_qbar <= 0.0 || !p_qbar.is_finite() {
            return Err(StoreError::Corrupt("bad anchor probability"));
        }
        let salt_len = c.read_u8().ok_or_else(truncated)? as usize;
        let salt = c.read_slice(salt_len).ok_or_else(truncated)?.to_vec();
        let estimator_digest: [u8; 32] = c.read_array().ok_or_else(truncated)?;
        let shard_width = c.read_u64().ok_or_else(truncated)?;
        if shard_width == 0 {
            return Err(StoreError::Corrupt("zero shard width"));
        }

        let pw_count = c.read_u32().ok_or_else(truncated)? as usize;
        let mut passwords = Vec::new();
        for _ in 0..pw_count {
            let digest: [u8; 32] = c.read_array().ok_or_else(truncated)?;
            let start = c.read_u64().ok_or_else(truncated)?;
            let gamma = c.read_u64().ok_or_else(truncated)?;
            if start >= num_buckets || gamma == 0 || gamma > num_buckets {
                return Err(StoreError::Corrupt("interval out of range"));
            }
            passwords.push(StoredPassword {
                digest,
                start,
                gamma,
            });
        }
        if passwords.is_empty() {
            return Err(StoreError::Corrupt("no passwords"));
        }

        let shard_count = c.read_u32().ok_or_else(truncated)? as usize;
        if shard_count as u64 != num_buckets.div_ceil(shard_width) {
            return Err(StoreError::Corrupt("shard count mismatch"));
        }
        let mut shards = Vec::new();
        for i in 0..shard_count {
            let lo = c.read_u64().ok_or_else(truncated)?;
            let hi = c.read_u64().ok_or_else(truncated)?;
            if lo != i as u64 * shard_width
                || hi != ((i as u64 + 1) * shard_width - 1).min(num_buckets - 1)
            {
                return Err(StoreError::Corrupt("shard range mismatch"));
            }
            let seg_count = c.read_u32().ok_or_else(truncated)? as usize;
            let mut segments = Vec::new();
            for _ in 0..seg_count {
                let s_lo = c.read_u64().ok_or_else(truncated)?;
                let s_hi = c.read_u64().ok_or_else(truncated)?;
                let id = c.read_u32().ok_or_else(truncated)?;
                if s_lo > s_hi || s_hi >= num_buckets || id as usize >= passwords.len() {
                    return Err(StoreError::Corrupt("segment out of range"));
                }
                if s_lo > hi || s_hi < lo {
                    return Err(StoreError::Corrupt("segment outside its shard"));
                }
                segments.push((s_lo, s_hi, id));
            }
            let members = segments
                .iter()
                .map(|&(_, _, id)| id)
                .collect::<BTreeSet<_>>()
                .len();
            shards.push(Shard {
                lo,
                hi,
                tree: IntervalTree::build(segments.clone()),
                segments,
                members,
            });
        }
        if !c.at_end() {
            return Err(StoreError::Corrupt("trailing bytes"));
        }

        Ok(IntervalStore {
            num_buckets,
            q_bar,
            p_qbar,
            salt,
            estimator_digest,
            shard_width,
            passwords,
            shards,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Requested shard count -> actual width; also the default-r helper.
fn shard_width(num_buckets: u64, r: u64) -> u64 {
    num_buckets.div_ceil(r).max(1)
}

pub fn default_shard_count(password_count: usize) -> usize {
    password_count.div_ceil(DEFAULT_SHARD_TARGET).max(1)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::TableDist;
    use super::super::{naive_bucket_contents, FsbParams};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn toy_params(dist: &TableDist) -> FsbParams<'_> {
        FsbParams {
            num_buckets: 64,
            q_bar: 1,
            p_qbar: 0.2,
            salt: b"store-salt",
            dist,
        }
    }

    #[test]
    fn head_password_reaches_every_shard_and_bucket() {
        let dist = TableDist::new(&[("head", 0.2)]);
        let params = toy_params(&dist);
        let store = IntervalStore::build(["head"], &params, 4, [0; 32]).unwrap();
        assert_eq!(store.shard_count(), 4);
        assert!(store.shard_members().iter().all(|&m| m == 1));
        let digest = hex::encode_upper(super::super::fsb_salted_digest("head", b"store-salt"));
        for b in 0..64 {
            let contents = store.bucket_contents(b).unwrap();
            assert_eq!(contents.len(), 1);
            assert!(contents.contains(&digest));
        }
    }

    #[test]
    fn per_shard_membership_matches_hand_count() {
        // Two passwords with known intervals: compute expected shard
        // membership directly from the segments.
        let dist = TableDist::new(&[("a", 0.05), ("b", 0.1)]);
        let params = toy_params(&dist); // widths: a -> 16, b -> 32
        let store = IntervalStore::build(["a", "b"], &params, 4, [0; 32]).unwrap();

        let width = 16u64; // 64 buckets / 4 shards
        let mut expect = vec![std::collections::BTreeSet::new(); 4];
        for (id, w) in ["a", "b"].iter().enumerate() {
            let iv = fsb_interval(w, &params);
            for (lo, hi) in iv.segments() {
                for s in (lo / width)..=(hi / width) {
                    expect[s as usize].insert(id);
                }
            }
        }
        let want: Vec<usize> = expect.iter().map(|s| s.len()).collect();
        assert_eq!(store.shard_members(), want);
    }

    #[test]
    fn store_matches_naive_oracle_including_wraps() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let mut entries = Vec::new();
        for i in 0..300 {
            // Mix of probabilities so gammas span 1..=|B| and wraps occur.
            let p = match i % 4 {
                0 => 0.2,
                1 => rng.random_range(0.01..0.19),
                2 => rng.random_range(0.001..0.01),
                _ => rng.random_range(0.0..0.001),
            };
            entries.push((format!("pw{i}"), p));
        }
        let refs: Vec<(&str, f64)> = entries.iter().map(|(w, p)| (w.as_str(), *p)).collect();
        let dist = TableDist::new(&refs);
        let params = toy_params(&dist);
        let words: Vec<&str> = entries.iter().map(|(w, _)| w.as_str()).collect();
        let store = IntervalStore::build(words.iter().copied(), &params, 5, [9; 32]).unwrap();

        let mut saw_wrap = false;
        for w in &words {
            saw_wrap |= fsb_interval(w, &params).wraps();
        }
        assert!(saw_wrap, "test corpus should exercise wrap-around");

        for b in 0..64 {
            let got = store.bucket_contents(b).unwrap();
            let want = naive_bucket_contents(words.iter().copied(), &params, b).unwrap();
            assert_eq!(got, want, "bucket {b}");
        }
        assert!(store.bucket_contents(64).is_err());
    }

    #[test]
    fn boundary_spanning_interval_is_in_both_shards() {
        let dist = TableDist::new(&[("span", 0.05)]); // gamma 16
        let params = toy_params(&dist);
        let store = IntervalStore::build(["span"], &params, 4, [0; 32]).unwrap();
        let iv = fsb_interval("span", &params);
        let width = 16u64;
        let mut touched = std::collections::BTreeSet::new();
        for (lo, hi) in iv.segments() {
            for s in (lo / width)..=(hi / width) {
                touched.insert(s as usize);
            }
        }
        let members = store.shard_members();
        for (i, m) in members.iter().enumerate() {
            assert_eq!(*m, touched.contains(&i) as usize, "shard {i}");
        }
    }

    #[test]
    fn encode_decode_roundtrip_is_byte_identical() {
        let dist = TableDist::new(&[("a", 0.2), ("b", 0.07), ("c", 0.001)]);
        let params = toy_params(&dist);
        let store = IntervalStore::build(["a", "b", "c"], &params, 3, [3; 32]).unwrap();
        let bytes = store.encode();
        let decoded = IntervalStore::decode(&bytes).unwrap();
        assert_eq!(decoded.encode(), bytes);
        assert_eq!(decoded.password_count(), 3);
        assert_eq!(decoded.q_bar(), 1);
        for b in 0..64 {
            assert_eq!(
                decoded.bucket_contents(b).unwrap(),
                store.bucket_contents(b).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_store_is_rejected() {
        let dist = TableDist::new(&[("a", 0.2)]);
        let params = toy_params(&dist);
        let store = IntervalStore::build(["a"], &params, 2, [0; 32]).unwrap();
        let mut bytes = store.encode();
        let n = bytes.len();
        bytes[n / 2] ^= 0xAA;
        assert!(IntervalStore::decode(&bytes).is_err());
        assert!(IntervalStore::decode(&bytes[..n - 40]).is_err());
        assert!(IntervalStore::decode(b"short").is_err());
    }

    #[test]
    fn default_shard_count_targets_four_million() {
        assert_eq!(default_shard_count(100), 1);
        assert_eq!(default_shard_count(4_000_000), 1);
        assert_eq!(default_shard_count(4_000_001), 2);
        assert_eq!(default_shard_count(128 * 4_000_000), 128);
    }
}
