//! The password-distribution estimate shared by server, client, and
//! attacker: a histogram over the most frequent corpus passwords, with a
//! normalized 3-gram model covering the tail.

pub mod ngram;

use std::collections::HashMap;

use rand::SeedableRng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::credentials::LeakDataset;
use crate::wire::Cursor;
pub use ngram::NGramModel;

/// Default head size at full scale; desk-scale runs configure it down.
pub const DEFAULT_HEAD_SIZE: usize = 1_000_000;
/// Default additive smoothing for the trigram tail.
pub const DEFAULT_SMOOTHING: f64 = 0.01;

const MAGIC: &[u8; 6] = b"C3ESTM";
const VERSION: u16 = 1;
const MAX_HEAD_PASSWORD_LEN: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("head size t must be at least 1")]
    BadHeadSize,
    #[error("top-{q} requested but only the {t}-entry head is enumerable")]
    HeadExhausted { q: usize, t: usize },
    #[error("artifact is not an estimator file (bad magic)")]
    BadMagic,
    #[error("unsupported artifact version {0}")]
    BadVersion(u16),
    #[error("artifact is truncated or corrupt: {0}")]
    Corrupt(&'static str),
    #[error("artifact content digest mismatch")]
    DigestMismatch,
}

/// Top-`t` passwords by corpus frequency with their empirical
/// probabilities, descending; ties break by count then lexicographic
/// password order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramModel {
    entries: Vec<(String, f64)>,
    index: HashMap<String, usize>,
    head_mass: f64,
}

impl HistogramModel {
    pub fn train(dataset: &LeakDataset, t: usize) -> Result<Self, EstimatorError> {
        if t == 0 {
            return Err(EstimatorError::BadHeadSize);
        }
        let counts = dataset.password_counts();
        if counts.is_empty() {
            return Err(EstimatorError::EmptyDataset);
        }
        let total: u64 = counts.values().sum();
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)));
        ranked.truncate(t);

        let entries: Vec<(String, f64)> = ranked
            .into_iter()
            .map(|(p, c)| (p, c as f64 / total as f64))
            .collect();
        Ok(Self::from_entries(entries))
    }

    fn from_entries(entries: Vec<(String, f64)>) -> Self {
        let head_mass = entries.iter().map(|(_, p)| p).sum();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), i))
            .collect();
        HistogramModel {
            entries,
            index,
            head_mass,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_mass(&self) -> f64 {
        self.head_mass
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn prob(&self, password: &str) -> Option<f64> {
        self.index.get(password).map(|&i| self.entries[i].1)
    }

    /// Probability of the `rank`-th most likely password (1-based).
    pub fn prob_at_rank(&self, rank: usize) -> Option<f64> {
        self.entries.get(rank.checked_sub(1)?).map(|(_, p)| *p)
    }
}

/// The combined estimate: exact head probabilities, scaled trigram tail.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridEstimator {
    histogram: HistogramModel,
    ngram: NGramModel,
    tail_scale: f64,
}

impl HybridEstimator {
    /// Train both parts from the same corpus and derive the tail
    /// normalization so total mass stays 1 when both parts are proper.
    pub fn train(dataset: &LeakDataset, t: usize, smoothing: f64) -> Result<Self, EstimatorError> {
        let histogram = HistogramModel::train(dataset, t)?;
        let counts = dataset.password_counts();
        let ngram = NGramModel::train(
            counts.iter().map(|(p, c)| (p.as_str(), *c)),
            smoothing,
        )
        .ok_or(EstimatorError::EmptyDataset)?;

        let head_ngram_mass: f64 = histogram
            .entries()
            .iter()
            .map(|(p, _)| ngram.prob(p))
            .sum();
        let tail_scale = tail_scale(histogram.head_mass(), head_ngram_mass);
        Ok(HybridEstimator {
            histogram,
            ngram,
            tail_scale,
        })
    }

    pub fn histogram(&self) -> &HistogramModel {
        &self.histogram
    }

    pub fn ngram(&self) -> &NGramModel {
        &self.ngram
    }

    pub fn tail_scale(&self) -> f64 {
        self.tail_scale
    }

    pub fn head_len(&self) -> usize {
        self.histogram.len()
    }

    /// The estimated probability of `password`: exact histogram value in
    /// the head, scaled trigram value otherwise.
    pub fn estimate(&self, password: &str) -> f64 {
        match self.histogram.prob(password) {
            Some(p) => p,
            None => self.tail_scale * self.ngram.prob(password),
        }
    }

    /// `count` i.i.d. draws from the trigram tail model, deterministic
    /// under `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<String> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        (0..count).map(|_| self.ngram.sample_one(&mut rng)).collect()
    }

    /// The `q` most probable passwords. Only the histogram head is
    /// enumerable without an explicit domain.
    pub fn top_q(&self, q: usize) -> Result<Vec<String>, EstimatorError> {
        if q > self.histogram.len() {
            return Err(EstimatorError::HeadExhausted {
                q,
                t: self.histogram.len(),
            });
        }
        Ok(self.histogram.entries()[..q]
            .iter()
            .map(|(p, _)| p.clone())
            .collect())
    }

    /// Top `q` over an explicit enumeration domain; estimate descending,
    /// ties lexicographic.
    pub fn top_q_within<'a, I>(&self, domain: I, q: usize) -> Vec<String>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut scored: Vec<(&str, f64)> =
            domain.into_iter().map(|w| (w, self.estimate(w))).collect();
        scored.sort_by(|(wa, pa), (wb, pb)| {
            pb.partial_cmp(pa).unwrap().then_with(|| wa.cmp(wb))
        });
        scored.truncate(q);
        scored.into_iter().map(|(w, _)| w.to_string()).collect()
    }

    /// Content digest: SHA-256 over the serialized artifact with the
    /// digest field zeroed.
    pub fn digest(&self) -> [u8; 32] {
        let mut bytes = self.encode_with_digest([0u8; 32]);
        let digest: [u8; 32] = Sha256::digest(&bytes).into();
        bytes.clear();
        digest
    }

    /// Serialize to the versioned artifact format (see docs/formats.md).
    pub fn encode(&self) -> Vec<u8> {
        let mut body = self.encode_with_digest([0u8; 32]);
        let digest: [u8; 32] = Sha256::digest(&body).into();
        body[DIGEST_OFFSET..DIGEST_OFFSET + 32].copy_from_slice(&digest);
        body
    }

    fn encode_with_digest(&self, digest: [u8; 32]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.histogram.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.ngram.smoothing().to_le_bytes());
        out.extend_from_slice(&self.tail_scale.to_le_bytes());
        out.push(ngram::ALPHABET_LEN as u8);
        out.extend((0x20..=0x7Eu8).collect::<Vec<u8>>());
        debug_assert_eq!(out.len(), DIGEST_OFFSET);
        out.extend_from_slice(&digest);

        let hist = self.histogram.entries();
        out.extend_from_slice(&(hist.len() as u64).to_le_bytes());
        for (pw, prob) in hist {
            out.extend_from_slice(&(pw.len() as u16).to_le_bytes());
            out.extend_from_slice(pw.as_bytes());
            out.extend_from_slice(&prob.to_le_bytes());
        }

        let entries: Vec<(u32, u8, u64)> = self.ngram.nonzero_counts().collect();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (ctx, next, count) in entries {
            out.extend_from_slice(&ctx.to_le_bytes());
            out.push(next);
            out.extend_from_slice(&count.to_le_bytes());
        }
        out
    }

    /// Decode and fully validate an artifact, including its content
    /// digest.
    pub fn decode(bytes: &[u8]) -> Result<Self, EstimatorError> {
        let truncated = || EstimatorError::Corrupt("unexpected end of input");
        let mut c = Cursor::new(bytes);
        if c.read_slice(MAGIC.len()).ok_or_else(truncated)? != MAGIC {
            return Err(EstimatorError::BadMagic);
        }
        let version = c.read_u16().ok_or_else(truncated)?;
        if version != VERSION {
            return Err(EstimatorError::BadVersion(version));
        }
        let t = c.read_u64().ok_or_else(truncated)? as usize;
        let smoothing = c.read_f64().ok_or_else(truncated)?;
        if smoothing.is_nan() || smoothing < 0.0 || !smoothing.is_finite() {
            return Err(EstimatorError::Corrupt("bad smoothing"));
        }
        let tail_scale = c.read_f64().ok_or_else(truncated)?;
        if tail_scale.is_nan() || tail_scale < 0.0 || !tail_scale.is_finite() {
            return Err(EstimatorError::Corrupt("bad tail scale"));
        }
        let alpha_len = c.read_u8().ok_or_else(truncated)? as usize;
        if alpha_len != ngram::ALPHABET_LEN {
            return Err(EstimatorError::Corrupt("unexpected alphabet length"));
        }
        let alphabet = c.read_slice(alpha_len).ok_or_else(truncated)?;
        if alphabet != (0x20..=0x7Eu8).collect::<Vec<u8>>() {
            return Err(EstimatorError::Corrupt("unexpected alphabet"));
        }
        let stored_digest: [u8; 32] = c.read_array().ok_or_else(truncated)?;

        let hist_len = c.read_u64().ok_or_else(truncated)? as usize;
        if hist_len != t {
            return Err(EstimatorError::Corrupt("head size mismatch"));
        }
        let mut entries = Vec::new();
        let mut prev_prob = f64::INFINITY;
        for _ in 0..hist_len {
            let len = c.read_u16().ok_or_else(truncated)? as usize;
            if len > MAX_HEAD_PASSWORD_LEN {
                return Err(EstimatorError::Corrupt("head password too long"));
            }
            let pw = std::str::from_utf8(c.read_slice(len).ok_or_else(truncated)?)
                .map_err(|_| EstimatorError::Corrupt("head password is not utf-8"))?
                .to_string();
            let prob = c.read_f64().ok_or_else(truncated)?;
            if prob.is_nan() || prob <= 0.0 || prob > 1.0 {
                return Err(EstimatorError::Corrupt("head probability out of range"));
            }
            if prob > prev_prob {
                return Err(EstimatorError::Corrupt("head probabilities not descending"));
            }
            prev_prob = prob;
            entries.push((pw, prob));
        }

        let ngram_len = c.read_u32().ok_or_else(truncated)? as usize;
        let mut parts = Vec::new();
        let mut prev_key = None;
        for _ in 0..ngram_len {
            let ctx = c.read_u32().ok_or_else(truncated)?;
            let next = c.read_u8().ok_or_else(truncated)?;
            let count = c.read_u64().ok_or_else(truncated)?;
            let key = (ctx, next);
            if prev_key.is_some_and(|k| k >= key) {
                return Err(EstimatorError::Corrupt("ngram entries not ascending"));
            }
            prev_key = Some(key);
            parts.push((ctx, next, count));
        }
        if !c.at_end() {
            return Err(EstimatorError::Corrupt("trailing bytes"));
        }

        let histogram = HistogramModel::from_entries(entries);
        if histogram.index.len() != histogram.entries.len() {
            return Err(EstimatorError::Corrupt("duplicate head password"));
        }
        let ngram = NGramModel::from_parts(smoothing, parts)
            .ok_or(EstimatorError::Corrupt("invalid ngram table"))?;

        let est = HybridEstimator {
            histogram,
            ngram,
            tail_scale,
        };
        let mut recomputed = est.encode_with_digest([0u8; 32]);
        let digest: [u8; 32] = Sha256::digest(&recomputed).into();
        recomputed.clear();
        if digest != stored_digest {
            return Err(EstimatorError::DigestMismatch);
        }
        Ok(est)
    }
}

const DIGEST_OFFSET: usize = 6 + 2 + 8 + 8 + 8 + 1 + ngram::ALPHABET_LEN;

fn tail_scale(head_mass: f64, head_ngram_mass: f64) -> f64 {
    let num = 1.0 - head_mass;
    let den = 1.0 - head_ngram_mass;
    if num <= 0.0 || den <= 0.0 {
        // Head covers the whole corpus: no tail mass to distribute.
        return 0.0;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(counts: &[(&str, u64)]) -> LeakDataset {
        LeakDataset::from_passwords(counts.iter().flat_map(|(p, c)| {
            std::iter::repeat_n(p.to_string(), *c as usize)
        }))
        .unwrap()
    }

    #[test]
    fn histogram_ratios() {
        let ds = dataset(&[("a", 3), ("b", 1)]);
        let h = HistogramModel::train(&ds, 2).unwrap();
        assert_eq!(h.entries(), &[("a".to_string(), 0.75), ("b".to_string(), 0.25)]);
        assert_eq!(h.prob_at_rank(1), Some(0.75));
        assert_eq!(h.prob_at_rank(2), Some(0.25));
    }

    #[test]
    fn histogram_t_larger_than_vocabulary() {
        let ds = dataset(&[("a", 2), ("b", 1)]);
        let h = HistogramModel::train(&ds, 100).unwrap();
        assert_eq!(h.len(), 2);
        assert!((h.head_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_matches_naive_counting_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let raw: Vec<String> = (0..2000)
            .map(|_| format!("pw{}", rng.random_range(0..50u32)))
            .collect();
        let ds = LeakDataset::from_passwords(raw.iter().cloned()).unwrap();
        let h = HistogramModel::train(&ds, 10).unwrap();

        // Naive oracle: count with a plain map, rank, take 10.
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for p in &raw {
            *counts.entry(p).or_insert(0) += 1;
        }
        let total: u64 = counts.values().sum();
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)));
        for (i, (pw, c)) in ranked.into_iter().take(10).enumerate() {
            assert_eq!(h.entries()[i].0, pw);
            assert!((h.entries()[i].1 - c as f64 / total as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn histogram_tie_break_is_deterministic() {
        let ds = dataset(&[("zz", 2), ("aa", 2), ("mm", 2)]);
        let h = HistogramModel::train(&ds, 2).unwrap();
        assert_eq!(h.entries()[0].0, "aa");
        assert_eq!(h.entries()[1].0, "mm");
    }

    #[test]
    fn estimate_head_verbatim_and_tail_scaled() {
        let ds = dataset(&[("password", 6), ("letmein", 3), ("dragon", 1)]);
        let e = HybridEstimator::train(&ds, 2, 0.01).unwrap();
        assert_eq!(e.estimate("password"), 0.6);
        assert_eq!(e.estimate("letmein"), 0.3);
        let tail = e.estimate("dragon");
        assert!(tail > 0.0);
        assert!((tail - e.tail_scale() * e.ngram().prob("dragon")).abs() < 1e-18);
        // Unseen over the alphabet stays strictly positive.
        assert!(e.estimate("zebra!") > 0.0);
    }

    #[test]
    fn closed_universe_mass_identity() {
        // All strings of length <= 2 over {a, b}.
        let universe: Vec<String> = {
            let mut u = vec![String::new()];
            for a in ["a", "b"] {
                u.push(a.to_string());
                for b in ["a", "b"] {
                    u.push(format!("{a}{b}"));
                }
            }
            u
        };
        let ds = dataset(&[("aa", 5), ("ab", 3), ("b", 2)]);
        let e = HybridEstimator::train(&ds, 2, 0.05).unwrap();

        let total: f64 = universe.iter().map(|w| e.estimate(w)).sum();
        let head_mass = e.histogram().head_mass();
        let head_ngram: f64 = e
            .histogram()
            .entries()
            .iter()
            .map(|(p, _)| e.ngram().prob(p))
            .sum();
        let tail_ngram: f64 = universe
            .iter()
            .filter(|w| e.histogram().prob(w).is_none())
            .map(|w| e.ngram().prob(w))
            .sum();
        // Exhaustive-enumeration identity restricted to the universe.
        let expect = head_mass + e.tail_scale() * tail_ngram;
        assert!((total - expect).abs() < 1e-9, "{total} vs {expect}");
        assert!((e.tail_scale() - (1.0 - head_mass) / (1.0 - head_ngram)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_full_head_has_zero_tail_scale() {
        let ds = dataset(&[("a", 2), ("b", 1)]);
        let e = HybridEstimator::train(&ds, 10, 0.01).unwrap();
        assert_eq!(e.tail_scale(), 0.0);
        assert_eq!(e.estimate("zzz"), 0.0);
    }

    #[test]
    fn sample_determinism_and_point_corpus() {
        let ds = dataset(&[("aa", 1)]);
        let e = HybridEstimator::train(&ds, 1, 0.0).unwrap();
        let s1 = e.sample(20, 99);
        let s2 = e.sample(20, 99);
        assert_eq!(s1, s2);
        assert!(s1.iter().all(|w| w == "aa"));
    }

    #[test]
    fn top_q_head_prefixes() {
        let ds = dataset(&[("a", 5), ("b", 3), ("c", 2)]);
        let e = HybridEstimator::train(&ds, 3, 0.01).unwrap();
        assert_eq!(e.top_q(1).unwrap(), vec!["a"]);
        assert_eq!(e.top_q(3).unwrap(), vec!["a", "b", "c"]);
        assert!(matches!(
            e.top_q(4),
            Err(EstimatorError::HeadExhausted { q: 4, t: 3 })
        ));
    }

    #[test]
    fn top_q_within_matches_exhaustive_sort() {
        let ds = dataset(&[("aa", 5), ("ab", 3), ("ba", 2), ("bb", 1)]);
        let e = HybridEstimator::train(&ds, 2, 0.02).unwrap();
        let universe = ["aa", "ab", "ba", "bb", "a", "b", ""];
        let got = e.top_q_within(universe.iter().copied(), 4);

        let mut scored: Vec<(&str, f64)> =
            universe.iter().map(|w| (*w, e.estimate(w))).collect();
        scored.sort_by(|(wa, pa), (wb, pb)| pb.partial_cmp(pa).unwrap().then(wa.cmp(wb)));
        let want: Vec<String> = scored[..4].iter().map(|(w, _)| w.to_string()).collect();
        assert_eq!(got, want);

        // Prefix-monotone under the fixed tie-break.
        for q in 1..universe.len() {
            let a = e.top_q_within(universe.iter().copied(), q);
            let b = e.top_q_within(universe.iter().copied(), q + 1);
            assert_eq!(&b[..q], &a[..]);
        }
    }

    #[test]
    fn artifact_roundtrip_and_digest() {
        let ds = dataset(&[("password", 7), ("letmein", 2), ("dragon", 1)]);
        let e = HybridEstimator::train(&ds, 2, 0.01).unwrap();
        let bytes = e.encode();
        let d = HybridEstimator::decode(&bytes).unwrap();
        assert_eq!(e, d);
        assert_eq!(e.digest(), d.digest());

        // Stable across re-encoding.
        assert_eq!(bytes, d.encode());
    }

    #[test]
    fn artifact_tamper_is_detected() {
        let ds = dataset(&[("password", 7), ("letmein", 2)]);
        let e = HybridEstimator::train(&ds, 1, 0.01).unwrap();
        let mut bytes = e.encode();
        let n = bytes.len();
        bytes[n - 3] ^= 1;
        assert!(HybridEstimator::decode(&bytes).is_err());

        assert_eq!(
            HybridEstimator::decode(b"garbage").unwrap_err(),
            EstimatorError::BadMagic
        );
        assert!(HybridEstimator::decode(&e.encode()[..40]).is_err());
    }
}
