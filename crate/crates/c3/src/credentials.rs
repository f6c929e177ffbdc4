//! Credentials and leak datasets.
//!
//! Corpus normalization happens once at ingest: usernames are case-folded,
//! passwords must be ASCII and at most 30 characters. Entries are
//! de-duplicated but keep their multiplicities, which the distribution
//! estimator needs.

use std::collections::BTreeMap;
use std::io::BufRead;

use thiserror::Error;

pub const MAX_PASSWORD_LEN: usize = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CredentialError {
    #[error("password rejected by cleaning filter (ASCII only, at most {MAX_PASSWORD_LEN} chars)")]
    DirtyPassword,
    #[error("line {line}: {msg}")]
    BadLine { line: usize, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset mode mismatch: expected {expected}")]
    ModeMismatch { expected: &'static str },
    #[error("io: {0}")]
    Io(String),
}

/// Cleaning filter: ASCII only, at most 30 characters. Returns the
/// password unchanged when it passes.
pub fn clean_password(password: &str) -> Result<&str, CredentialError> {
    if password.len() > MAX_PASSWORD_LEN || !password.is_ascii() {
        return Err(CredentialError::DirtyPassword);
    }
    Ok(password)
}

/// A username-password pair. The username is case-folded on construction;
/// the password must pass the cleaning filter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Credential {
    username: String,
    password: String,
}

impl Credential {
    pub fn new(username: &str, password: &str) -> Result<Self, CredentialError> {
        clean_password(password)?;
        Ok(Credential {
            username: username.to_lowercase(),
            password: password.to_string(),
        })
    }

    pub fn username(&self) -> &str {
        &self.username
    }

    pub fn password(&self) -> &str {
        &self.password
    }

    /// Canonical byte serialization used as a hash preimage: `u || w`.
    pub fn joined(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.username.len() + self.password.len());
        out.extend_from_slice(self.username.as_bytes());
        out.extend_from_slice(self.password.as_bytes());
        out
    }
}

/// De-duplicated leak corpus with per-entry multiplicities.
///
/// `n()` counts unique entries; multiplicities only feed the histogram
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum LeakDataset {
    /// Password-only corpus.
    Passwords(BTreeMap<String, u64>),
    /// Username-password corpus.
    Pairs(BTreeMap<Credential, u64>),
}

impl LeakDataset {
    pub fn from_passwords<I: IntoIterator<Item = String>>(
        passwords: I,
    ) -> Result<Self, CredentialError> {
        let mut map = BTreeMap::new();
        for p in passwords {
            clean_password(&p)?;
            *map.entry(p).or_insert(0) += 1;
        }
        if map.is_empty() {
            return Err(CredentialError::EmptyDataset);
        }
        Ok(LeakDataset::Passwords(map))
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(
        pairs: I,
    ) -> Result<Self, CredentialError> {
        let mut map = BTreeMap::new();
        for (u, w) in pairs {
            let cred = Credential::new(&u, &w)?;
            *map.entry(cred).or_insert(0) += 1;
        }
        if map.is_empty() {
            return Err(CredentialError::EmptyDataset);
        }
        Ok(LeakDataset::Pairs(map))
    }

    /// Parse a password-per-line corpus. Lines failing the cleaning filter
    /// are skipped and counted; an all-skipped corpus is an error.
    pub fn read_passwords<R: BufRead>(reader: R) -> Result<(Self, u64), CredentialError> {
        let mut map = BTreeMap::new();
        let mut skipped = 0u64;
        for line in reader.lines() {
            let line = line.map_err(|e| CredentialError::Io(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            if clean_password(&line).is_err() {
                skipped += 1;
                continue;
            }
            *map.entry(line).or_insert(0) += 1;
        }
        if map.is_empty() {
            return Err(CredentialError::EmptyDataset);
        }
        Ok((LeakDataset::Passwords(map), skipped))
    }

    /// Parse a `username<TAB>password` corpus; same skip semantics.
    pub fn read_pairs<R: BufRead>(reader: R) -> Result<(Self, u64), CredentialError> {
        let mut map = BTreeMap::new();
        let mut skipped = 0u64;
        for line in reader.lines() {
            let line = line.map_err(|e| CredentialError::Io(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let Some((u, w)) = line.split_once('\t') else {
                skipped += 1;
                continue;
            };
            match Credential::new(u, w) {
                Ok(cred) => *map.entry(cred).or_insert(0) += 1,
                Err(_) => skipped += 1,
            }
        }
        if map.is_empty() {
            return Err(CredentialError::EmptyDataset);
        }
        Ok((LeakDataset::Pairs(map), skipped))
    }

    /// Unique entry count.
    pub fn n(&self) -> usize {
        match self {
            LeakDataset::Passwords(m) => m.len(),
            LeakDataset::Pairs(m) => m.len(),
        }
    }

    /// Total occurrences across the raw corpus.
    pub fn total_count(&self) -> u64 {
        match self {
            LeakDataset::Passwords(m) => m.values().sum(),
            LeakDataset::Pairs(m) => m.values().sum(),
        }
    }

    pub fn passwords(&self) -> Result<&BTreeMap<String, u64>, CredentialError> {
        match self {
            LeakDataset::Passwords(m) => Ok(m),
            _ => Err(CredentialError::ModeMismatch {
                expected: "password-only",
            }),
        }
    }

    pub fn pairs(&self) -> Result<&BTreeMap<Credential, u64>, CredentialError> {
        match self {
            LeakDataset::Pairs(m) => Ok(m),
            _ => Err(CredentialError::ModeMismatch {
                expected: "username-password",
            }),
        }
    }

    /// Password histogram regardless of mode: for pair corpora, counts are
    /// aggregated over usernames.
    pub fn password_counts(&self) -> BTreeMap<String, u64> {
        match self {
            LeakDataset::Passwords(m) => m.clone(),
            LeakDataset::Pairs(m) => {
                let mut out = BTreeMap::new();
                for (cred, count) in m {
                    *out.entry(cred.password().to_string()).or_insert(0) += count;
                }
                out
            }
        }
    }
}
