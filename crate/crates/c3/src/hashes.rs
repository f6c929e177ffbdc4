//! Credential digests and hash-prefix arithmetic.
//!
//! Everything downstream (range queries, bucketization, the k-anonymity
//! pipeline) works on fixed-width uppercase hex digests and their
//! length-`L` truncations, so the canonical forms live here.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashError {
    #[error("unknown hash algorithm tag `{0}`")]
    UnknownAlgorithm(String),
    #[error("digest has length {got}, expected {expected} hex characters")]
    BadLength { got: usize, expected: usize },
    #[error("digest contains non-hex character `{0}`")]
    BadCharacter(char),
    #[error("no known algorithm produces a {0}-character digest")]
    AmbiguousLength(usize),
    #[error("algorithm mismatch: {0} vs {1}")]
    AlgorithmMismatch(HashAlgorithm, HashAlgorithm),
    #[error("truncation length {len} out of range for {digest_len}-character digest")]
    TruncationOutOfRange { len: usize, digest_len: usize },
}

/// Digest algorithm tag. Sha1 matches the 40-char corpora distributed by
/// breach-checking services; Sha256 is used by the salted bucketization
/// schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HashAlgorithm {
    Sha1,
    Sha256,
}

impl HashAlgorithm {
    /// Digest width in hex characters.
    pub fn hex_len(self) -> usize {
        match self {
            HashAlgorithm::Sha1 => 40,
            HashAlgorithm::Sha256 => 64,
        }
    }

    /// Digest width in bits.
    pub fn bits(self) -> u32 {
        (self.hex_len() * 4) as u32
    }

    pub fn from_hex_len(len: usize) -> Result<Self, HashError> {
        match len {
            40 => Ok(HashAlgorithm::Sha1),
            64 => Ok(HashAlgorithm::Sha256),
            other => Err(HashError::AmbiguousLength(other)),
        }
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HashAlgorithm::Sha1 => write!(f, "sha1"),
            HashAlgorithm::Sha256 => write!(f, "sha256"),
        }
    }
}

impl FromStr for HashAlgorithm {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, HashError> {
        match s.to_ascii_lowercase().as_str() {
            "sha1" | "sha-1" => Ok(HashAlgorithm::Sha1),
            "sha256" | "sha-256" => Ok(HashAlgorithm::Sha256),
            other => Err(HashError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// A full password digest in canonical form: uppercase hex, width fixed by
/// the algorithm. Ordering is plain lexicographic byte order on the hex
/// string, which is the sort order the prefix-length scan relies on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PasswordHash {
    digest: Box<str>,
    algorithm: HashAlgorithm,
}

impl PasswordHash {
    /// Parse a digest, accepting either hex case and normalizing to
    /// uppercase. The algorithm is inferred from the length.
    pub fn parse(s: &str) -> Result<Self, HashError> {
        let algorithm = HashAlgorithm::from_hex_len(s.len())?;
        Self::parse_with(s, algorithm)
    }

    pub fn parse_with(s: &str, algorithm: HashAlgorithm) -> Result<Self, HashError> {
        if s.len() != algorithm.hex_len() {
            return Err(HashError::BadLength {
                got: s.len(),
                expected: algorithm.hex_len(),
            });
        }
        let mut digest = String::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0'..='9' | 'A'..='F' => digest.push(c),
                'a'..='f' => digest.push(c.to_ascii_uppercase()),
                other => return Err(HashError::BadCharacter(other)),
            }
        }
        Ok(PasswordHash {
            digest: digest.into_boxed_str(),
            algorithm,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.digest
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn hex_len(&self) -> usize {
        self.digest.len()
    }

    /// Leading `len` characters as a prefix.
    pub fn truncate(&self, len: usize) -> Result<HashPrefix, HashError> {
        if len > self.digest.len() {
            return Err(HashError::TruncationOutOfRange {
                len,
                digest_len: self.digest.len(),
            });
        }
        Ok(HashPrefix {
            text: self.digest[..len].to_string(),
        })
    }

    /// Characters after the first `len`, as served by suffix-mode range
    /// responses.
    pub fn suffix(&self, len: usize) -> Result<&str, HashError> {
        if len > self.digest.len() {
            return Err(HashError::TruncationOutOfRange {
                len,
                digest_len: self.digest.len(),
            });
        }
        Ok(&self.digest[len..])
    }

    pub fn starts_with(&self, prefix: &HashPrefix) -> bool {
        self.digest.starts_with(prefix.as_str())
    }
}

impl fmt::Display for PasswordHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest)
    }
}

impl PartialOrd for PasswordHash {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PasswordHash {
    fn cmp(&self, other: &Self) -> Ordering {
        self.digest
            .cmp(&other.digest)
            .then(self.algorithm.cmp(&other.algorithm))
    }
}

/// A length-`L` leading substring of a digest; `L` hex characters carry
/// `4·L` bits. The empty prefix (`L = 0`) is valid and matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashPrefix {
    text: String,
}

impl HashPrefix {
    /// Parse a prefix, accepting either hex case.
    pub fn parse(s: &str) -> Result<Self, HashError> {
        let mut text = String::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0'..='9' | 'A'..='F' => text.push(c),
                'a'..='f' => text.push(c.to_ascii_uppercase()),
                other => return Err(HashError::BadCharacter(other)),
            }
        }
        Ok(HashPrefix { text })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn bits(&self) -> u32 {
        (self.text.len() * 4) as u32
    }

    /// The prefix value as an integer, e.g. "A94A8" -> 0xA94A8. Defined for
    /// prefixes of up to 16 hex characters.
    pub fn value(&self) -> Option<u64> {
        if self.text.is_empty() {
            return Some(0);
        }
        u64::from_str_radix(&self.text, 16).ok()
    }
}

impl fmt::Display for HashPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Hash a plaintext under the named algorithm. No salting in Sha1 mode:
/// the corpus values are already public, and salting would defeat
/// searchability.
pub fn hash_password(plaintext: &[u8], algorithm: HashAlgorithm) -> PasswordHash {
    let digest = match algorithm {
        HashAlgorithm::Sha1 => hex::encode_upper(Sha1::digest(plaintext)),
        HashAlgorithm::Sha256 => hex::encode_upper(Sha256::digest(plaintext)),
    };
    PasswordHash {
        digest: digest.into_boxed_str(),
        algorithm,
    }
}

/// Salted variant used by the frequency-smoothing scheme: digest of
/// `salt || plaintext`.
pub fn hash_password_salted(
    plaintext: &[u8],
    salt: &[u8],
    algorithm: HashAlgorithm,
) -> PasswordHash {
    let digest = match algorithm {
        HashAlgorithm::Sha1 => {
            let mut h = Sha1::new();
            h.update(salt);
            h.update(plaintext);
            hex::encode_upper(h.finalize())
        }
        HashAlgorithm::Sha256 => {
            let mut h = Sha256::new();
            h.update(salt);
            h.update(plaintext);
            hex::encode_upper(h.finalize())
        }
    };
    PasswordHash {
        digest: digest.into_boxed_str(),
        algorithm,
    }
}

/// Length of the longest common leading substring of two digests, in hex
/// characters. Errors if the digests come from different algorithms.
pub fn similar_prefix(a: &PasswordHash, b: &PasswordHash) -> Result<usize, HashError> {
    if a.algorithm != b.algorithm {
        return Err(HashError::AlgorithmMismatch(a.algorithm, b.algorithm));
    }
    Ok(common_prefix_len(a.as_str(), b.as_str()))
}

pub(crate) fn common_prefix_len(a: &str, b: &str) -> usize {
    a.bytes()
        .zip(b.bytes())
        .take_while(|(x, y)| x == y)
        .count()
}

/// First `bits` bits of a digest, big-endian, as a bucket identifier.
/// `bits` must be in 1..=64.
pub fn digest_prefix_bits(digest_hex: &str, bits: u32) -> u64 {
    debug_assert!((1..=64).contains(&bits));
    let nibbles = bits.div_ceil(4) as usize;
    let head = u64::from_str_radix(&digest_hex[..nibbles], 16).expect("digest is valid hex");
    let excess = (nibbles as u32) * 4 - bits;
    head >> excess
}
