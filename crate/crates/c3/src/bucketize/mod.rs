//! Bucketization schemes: which bucket(s) a credential lands in.
//!
//! Three schemes with very different leakage profiles share this module:
//! hash-prefix bucketization (HPB) keyed on the credential, identifier
//! bucketization (IDB) keyed on the username alone, and
//! frequency-smoothing bucketization (FSB), which replicates a password
//! into a number of buckets proportional to its estimated probability so
//! the conditional distribution inside any bucket flattens out.

mod interval_tree;
mod store;

pub use store::{default_shard_count, IntervalStore, StoreError};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::HybridEstimator;
use crate::hashes::{digest_prefix_bits, HashAlgorithm};

pub type BucketId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum BucketError {
    #[error("prefix bits {bits} out of range 1..={max}")]
    BadBits { bits: u32, max: u32 },
    #[error("bucket id {b} out of range for {num_buckets} buckets")]
    BucketOutOfRange { b: BucketId, num_buckets: u64 },
    #[error("q-bar {q_bar} exceeds the estimator head ({head})")]
    QBarBeyondHead { q_bar: u64, head: usize },
    #[error("the q-bar-th password has nonpositive estimated probability")]
    NonPositiveAnchor,
    #[error("dataset is empty or in the wrong mode: {0}")]
    Dataset(String),
}

/// Hash-prefix bucketization parameters: first `bits` bits of an
/// (optionally salted) digest.
#[derive(Debug, Clone)]
pub struct HpbParams {
    pub bits: u32,
    pub algorithm: HashAlgorithm,
    pub salt: Option<Vec<u8>>,
}

impl HpbParams {
    pub fn new(bits: u32, algorithm: HashAlgorithm) -> Result<Self, BucketError> {
        Self::with_salt(bits, algorithm, None)
    }

    pub fn with_salt(
        bits: u32,
        algorithm: HashAlgorithm,
        salt: Option<Vec<u8>>,
    ) -> Result<Self, BucketError> {
        if bits == 0 || bits > algorithm.bits().min(64) {
            return Err(BucketError::BadBits {
                bits,
                max: algorithm.bits().min(64),
            });
        }
        Ok(HpbParams {
            bits,
            algorithm,
            salt,
        })
    }

    pub fn num_buckets(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX // 2^64 overflows; callers treat this as "full width"
        } else {
            1u64 << self.bits
        }
    }
}

/// Bucket of a serialized credential: for password-only checking the
/// preimage is the password, for pair checking it is `u || w`.
pub fn hpb_bucket(credential: &[u8], params: &HpbParams) -> BucketId {
    let hash = match &params.salt {
        Some(salt) => crate::hashes::hash_password_salted(credential, salt, params.algorithm),
        None => crate::hashes::hash_password(credential, params.algorithm),
    };
    digest_prefix_bits(hash.as_str(), params.bits)
}

/// Identifier-based bucket: the username alone decides, so the bucket id
/// carries no password information at all.
pub fn idb_bucket(username: &str, params: &HpbParams) -> BucketId {
    hpb_bucket(username.to_lowercase().as_bytes(), params)
}

/// Anything that can score a password with a probability. Implemented by
/// the trained estimator and, in the simulation lab, by exact synthetic
/// distributions.
pub trait DistEstimate {
    fn prob_of(&self, password: &str) -> f64;
}

impl DistEstimate for HybridEstimator {
    fn prob_of(&self, password: &str) -> f64 {
        self.estimate(password)
    }
}

/// Frequency-smoothing bucketization parameters.
///
/// `p_qbar` anchors the replication rule: the `q_bar` most likely
/// passwords land in every bucket, and a tail password of probability p
/// lands in ceil(|B|·p / p_qbar) consecutive buckets starting at its
/// hash position.
pub struct FsbParams<'a> {
    pub num_buckets: u64,
    pub q_bar: u64,
    pub p_qbar: f64,
    pub salt: &'a [u8],
    pub dist: &'a dyn DistEstimate,
}

impl<'a> FsbParams<'a> {
    /// Derive parameters from a trained estimator; the anchor is the
    /// probability of the q-bar-th head entry.
    pub fn from_estimator(
        estimator: &'a HybridEstimator,
        num_buckets: u64,
        q_bar: u64,
        salt: &'a [u8],
    ) -> Result<Self, BucketError> {
        assert!(num_buckets >= 1);
        assert!(q_bar >= 1);
        let p_qbar = estimator
            .histogram()
            .prob_at_rank(q_bar as usize)
            .ok_or(BucketError::QBarBeyondHead {
                q_bar,
                head: estimator.head_len(),
            })?;
        if p_qbar.is_nan() || p_qbar <= 0.0 {
            return Err(BucketError::NonPositiveAnchor);
        }
        Ok(FsbParams {
            num_buckets,
            q_bar,
            p_qbar,
            salt,
            dist: estimator,
        })
    }
}

/// A password's bucket range: `gamma` consecutive buckets starting at
/// `start`, wrapping modulo `num_buckets`. The covered set has size
/// exactly `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketInterval {
    pub start: BucketId,
    pub gamma: u64,
    pub num_buckets: u64,
}

impl BucketInterval {
    pub fn wraps(&self) -> bool {
        self.start + self.gamma > self.num_buckets
    }

    pub fn covers(&self, b: BucketId) -> bool {
        if b >= self.num_buckets {
            return false;
        }
        if self.wraps() {
            b >= self.start || b < (self.start + self.gamma) - self.num_buckets
        } else {
            b >= self.start && b < self.start + self.gamma
        }
    }

    /// The covered range as one or two inclusive linear segments.
    pub fn segments(&self) -> Vec<(BucketId, BucketId)> {
        if self.wraps() {
            vec![
                (self.start, self.num_buckets - 1),
                (0, self.start + self.gamma - 1 - self.num_buckets),
            ]
        } else {
            vec![(self.start, self.start + self.gamma - 1)]
        }
    }

    /// Enumerate covered bucket ids in selection order (start, start+1,
    /// ... mod |B|). Only sensible for small bucket spaces.
    pub fn iter_covered(&self) -> impl Iterator<Item = BucketId> + '_ {
        (0..self.gamma).map(move |j| (self.start + j) % self.num_buckets)
    }
}

/// The bucket-position hash f: W -> Z_|B|, a salted SHA-256. Powers of
/// two take the leading bits of the digest; other sizes reduce the
/// 64-bit prefix modulo |B|.
pub fn fsb_position(input: &[u8], salt: &[u8], num_buckets: u64) -> BucketId {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(input);
    let digest: [u8; 32] = h.finalize().into();
    let head = u64::from_be_bytes(digest[..8].try_into().unwrap());
    if num_buckets.is_power_of_two() {
        let bits = num_buckets.trailing_zeros();
        if bits == 0 {
            0
        } else {
            head >> (64 - bits)
        }
    } else {
        head % num_buckets
    }
}

/// Salted digest of a password as stored and served by the FSB server
/// (the server never returns plaintext).
pub fn fsb_salted_digest(password: &str, salt: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    h.finalize().into()
}

/// Replication count: ceil(|B|·p / p_qbar), capped at |B| and floored at
/// 1 so every password is assigned somewhere even under an estimator
/// that gives it zero mass.
pub fn fsb_gamma(prob: f64, p_qbar: f64, num_buckets: u64) -> u64 {
    let ratio = num_buckets as f64 * prob / p_qbar;
    if !ratio.is_finite() {
        return 1;
    }
    (ratio.ceil() as u64).clamp(1, num_buckets)
}

/// The bucket range assigned to `password`.
pub fn fsb_interval(password: &str, params: &FsbParams<'_>) -> BucketInterval {
    let gamma = fsb_gamma(params.dist.prob_of(password), params.p_qbar, params.num_buckets);
    BucketInterval {
        start: fsb_position(password.as_bytes(), params.salt, params.num_buckets),
        gamma,
        num_buckets: params.num_buckets,
    }
}

/// How the client chooses within the covered range: fresh randomness per
/// query, or a stable choice keyed by a local cookie so repeat queries
/// for one password always hit the same bucket.
pub enum PickMode<'a> {
    Random { seed: u64 },
    Derandomized { cookie: &'a [u8] },
}

pub fn pick_bucket(password: &str, params: &FsbParams<'_>, mode: PickMode<'_>) -> BucketId {
    let interval = fsb_interval(password, params);
    match mode {
        PickMode::Random { seed } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            pick_bucket_random(&interval, &mut rng)
        }
        PickMode::Derandomized { cookie } => {
            pick_bucket_derandomized(password, &interval, params.salt, cookie)
        }
    }
}

pub fn pick_bucket_random<R: rand::Rng>(interval: &BucketInterval, rng: &mut R) -> BucketId {
    let j = rng.random_range(0..interval.gamma);
    (interval.start + j) % interval.num_buckets
}

/// j = f(w || c) mod gamma; stable for a fixed (password, cookie).
pub fn pick_bucket_derandomized(
    password: &str,
    interval: &BucketInterval,
    salt: &[u8],
    cookie: &[u8],
) -> BucketId {
    let mut input = Vec::with_capacity(password.len() + cookie.len());
    input.extend_from_slice(password.as_bytes());
    input.extend_from_slice(cookie);
    let j = fsb_position(&input, salt, interval.num_buckets) % interval.gamma;
    (interval.start + j) % interval.num_buckets
}

/// Reference O(N) bucket-contents scan; the oracle the interval store is
/// checked against.
pub fn naive_bucket_contents(
    passwords: impl IntoIterator<Item = impl AsRef<str>>,
    params: &FsbParams<'_>,
    b: BucketId,
) -> Result<std::collections::BTreeSet<String>, BucketError> {
    if b >= params.num_buckets {
        return Err(BucketError::BucketOutOfRange {
            b,
            num_buckets: params.num_buckets,
        });
    }
    let mut out = std::collections::BTreeSet::new();
    for w in passwords {
        let w = w.as_ref();
        if fsb_interval(w, params).covers(b) {
            out.insert(hex::encode_upper(fsb_salted_digest(w, params.salt)));
        }
    }
    Ok(out)
}

/// Balls-and-bins bandwidth bound for a partitioning scheme: max bucket
/// load is below 2·N/2^l with high probability.
pub fn bw_bound_hpb(n: u64, bits: u32) -> f64 {
    2.0 * n as f64 / 2f64.powi(bits as i32)
}

/// FSB bound: replication adds |B|·q_bar head copies and at most
/// |B|/p_qbar + N tail copies, giving 2·(q_bar + 1/p_qbar + N/|B|).
pub fn bw_bound_fsb(q_bar: u64, p_qbar: f64, n: u64, num_buckets: u64) -> f64 {
    2.0 * (q_bar as f64 + 1.0 / p_qbar + n as f64 / num_buckets as f64)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::DistEstimate;
    use std::collections::HashMap;

    /// Hand-set distribution for toy traces.
    pub struct TableDist(pub HashMap<String, f64>);

    impl TableDist {
        pub fn new(entries: &[(&str, f64)]) -> Self {
            TableDist(
                entries
                    .iter()
                    .map(|(w, p)| (w.to_string(), *p))
                    .collect(),
            )
        }
    }

    impl DistEstimate for TableDist {
        fn prob_of(&self, password: &str) -> f64 {
            *self.0.get(password).unwrap_or(&0.0)
        }
    }
}
