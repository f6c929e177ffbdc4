//! Exact guessing-game advantages and the theorem checks built on them.
//!
//! Everything here enumerates the finite world, so values are exact up
//! to floating-point summation; the Monte-Carlo games in `games` are
//! cross-checked against these numbers.

use std::collections::HashMap;

use super::world::{SyntheticWorld, WorldMarginal};
use super::SimError;
use crate::bucketize::{
    fsb_interval, hpb_bucket, idb_bucket, BucketId, BucketInterval, FsbParams, HpbParams,
};

/// Largest bucket space the exact enumerations will walk.
const MAX_ENUM_BUCKETS: u64 = 1 << 16;
/// Exact-computation state-space cap; larger worlds are Monte-Carlo
/// territory.
pub const MAX_EXACT_STATES: u64 = 1_000_000;

/// A bucketization scheme applied to world credentials. Wraps the real
/// bucketizing functions so the theorems are checked against the same
/// code paths production uses.
pub enum SimBucketizer<'a> {
    /// Password-keyed hash-prefix partition (the classic range-query
    /// C3 service shape).
    Hpb(HpbParams),
    /// Username-keyed partition.
    Idb(HpbParams),
    /// Frequency-smoothing replication.
    Fsb(FsbParams<'a>),
}

impl SimBucketizer<'_> {
    pub fn num_buckets(&self) -> u64 {
        match self {
            SimBucketizer::Hpb(p) | SimBucketizer::Idb(p) => p.num_buckets(),
            SimBucketizer::Fsb(p) => p.num_buckets,
        }
    }

    /// The covered bucket set beta((u, w)) as an interval (singleton for
    /// the partitioning schemes).
    pub fn covered(&self, username: &str, password: &str) -> BucketInterval {
        match self {
            SimBucketizer::Hpb(p) => BucketInterval {
                start: hpb_bucket(password.as_bytes(), p),
                gamma: 1,
                num_buckets: p.num_buckets(),
            },
            SimBucketizer::Idb(p) => BucketInterval {
                start: idb_bucket(username, p),
                gamma: 1,
                num_buckets: p.num_buckets(),
            },
            SimBucketizer::Fsb(p) => fsb_interval(password, p),
        }
    }

    pub fn beta_size(&self, username: &str, password: &str) -> u64 {
        self.covered(username, password).gamma
    }
}

/// Baseline advantage: the attacker knows the username only, so per user
/// the optimum is the q highest joint masses.
pub fn adv_guess(world: &SyntheticWorld, q: usize) -> f64 {
    let nw = world.passwords().len();
    let mut total = 0.0;
    for u in 0..world.users().len() {
        let mut masses: Vec<f64> = (0..nw).map(|w| world.p(u, w)).collect();
        masses.sort_by(|a, b| b.partial_cmp(a).unwrap());
        total += masses.iter().take(q).sum::<f64>();
    }
    total
}

/// Bucket-informed advantage: per (user, bucket) the optimum is the q
/// best values of p(u,w)/|beta((u,w))| among passwords mapped to that
/// bucket.
pub fn adv_bucket(
    world: &SyntheticWorld,
    bucketizer: &SimBucketizer<'_>,
    q: usize,
) -> Result<f64, SimError> {
    if bucketizer.num_buckets() > MAX_ENUM_BUCKETS {
        return Err(SimError::TooLargeForExact(bucketizer.num_buckets()));
    }
    let states = (world.users().len() * world.passwords().len()) as u64;
    if states > MAX_EXACT_STATES {
        return Err(SimError::TooLargeForExact(states));
    }

    let mut total = 0.0;
    for u in 0..world.users().len() {
        let username = &world.users()[u];
        let mut per_bucket: HashMap<BucketId, Vec<f64>> = HashMap::new();
        for w in 0..world.passwords().len() {
            let mass = world.p(u, w);
            if mass == 0.0 {
                continue;
            }
            let interval = bucketizer.covered(username, &world.passwords()[w]);
            let weight = mass / interval.gamma as f64;
            for b in interval.iter_covered() {
                per_bucket.entry(b).or_default().push(weight);
            }
        }
        for weights in per_bucket.values_mut() {
            weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
            total += weights.iter().take(q).sum::<f64>();
        }
    }
    Ok(total)
}

/// Delta: how much the bucket identifier helps the optimal attacker.
pub fn security_loss(
    world: &SyntheticWorld,
    bucketizer: &SimBucketizer<'_>,
    q: usize,
) -> Result<f64, SimError> {
    Ok(adv_bucket(world, bucketizer, q)? - adv_guess(world, q))
}

/// One inequality (or equality) verdict inside a theorem report.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl BoundCheck {
    fn le(name: &'static str, lhs: f64, rhs: f64, tol: f64) -> Self {
        BoundCheck {
            name,
            lhs,
            rhs,
            ok: lhs <= rhs + tol,
        }
    }

    fn eq(name: &'static str, lhs: f64, rhs: f64, tol: f64) -> Self {
        BoundCheck {
            name,
            lhs,
            rhs,
            ok: (lhs - rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TheoremReport {
    pub scheme: &'static str,
    pub q: usize,
    pub q_bar: Option<usize>,
    pub adv_guess: f64,
    pub adv_bucket: f64,
    pub delta: f64,
    pub checks: Vec<BoundCheck>,
    /// World dump; filled in when a check fails so the counterexample is
    /// reproducible.
    pub counterexample: Option<String>,
}

impl TheoremReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

pub const EQ_TOLERANCE: f64 = 1e-12;

/// Partition upper bound: a bucket identifier from an l-bit prefix of
/// the credential is worth at most a q*|B| budget inflation.
pub fn check_hpb_bound(
    world: &SyntheticWorld,
    params: &HpbParams,
    q: usize,
) -> Result<TheoremReport, SimError> {
    if !world.is_independent() {
        return Err(SimError::NonIndependentWorld);
    }
    let bucketizer = SimBucketizer::Hpb(params.clone());
    let bucket_adv = adv_bucket(world, &bucketizer, q)?;
    let base = adv_guess(world, q);
    let inflated_q = (q as u64).saturating_mul(params.num_buckets());
    let inflated = adv_guess(world, inflated_q.min(world.passwords().len() as u64) as usize);
    let mut report = TheoremReport {
        scheme: "hpb",
        q,
        q_bar: None,
        adv_guess: base,
        adv_bucket: bucket_adv,
        delta: bucket_adv - base,
        checks: vec![BoundCheck::le(
            "adv_bucket <= adv_guess(q*|B|)",
            bucket_adv,
            inflated,
            EQ_TOLERANCE,
        )],
        counterexample: None,
    };
    attach_counterexample(&mut report, world);
    Ok(report)
}

/// Identifier bucketization leaks nothing about the password: equality
/// with the baseline, for any joint distribution.
pub fn check_idb_equality(
    world: &SyntheticWorld,
    params: &HpbParams,
    q: usize,
) -> Result<TheoremReport, SimError> {
    let bucketizer = SimBucketizer::Idb(params.clone());
    let bucket_adv = adv_bucket(world, &bucketizer, q)?;
    let base = adv_guess(world, q);
    let mut report = TheoremReport {
        scheme: "idb",
        q,
        q_bar: None,
        adv_guess: base,
        adv_bucket: bucket_adv,
        delta: bucket_adv - base,
        checks: vec![BoundCheck::eq(
            "adv_bucket == adv_guess",
            bucket_adv,
            base,
            EQ_TOLERANCE,
        )],
        counterexample: None,
    };
    attach_counterexample(&mut report, world);
    Ok(report)
}

/// Frequency-smoothing with the exact marginal as estimator:
/// zero loss while q <= q_bar, and for q > q_bar the proven sandwich
/// (lambda_q + lambda_qbar)/2 <= adv_bucket <= lambda_qbar +
/// (q - q_bar) * p(w_qbar). Those are the two theorem inequalities with
/// each side's delta unfolded against its own baseline: the lower bound
/// says adv_bucket - lambda_qbar >= (lambda_q - lambda_qbar)/2 and the
/// upper says adv_bucket - lambda_q <= (q - q_bar) * p(w_qbar) -
/// (lambda_q - lambda_qbar).
pub fn check_fsb_theorem(
    world: &SyntheticWorld,
    num_buckets: u64,
    salt: &[u8],
    q: usize,
    q_bar: usize,
) -> Result<TheoremReport, SimError> {
    if !world.is_independent() {
        return Err(SimError::NonIndependentWorld);
    }
    if q_bar == 0 || q_bar > world.passwords().len() {
        return Err(SimError::BadWorld(format!(
            "q_bar {q_bar} out of range for {} passwords",
            world.passwords().len()
        )));
    }
    let marginal = WorldMarginal::new(world);
    let p_qbar = marginal.prob_at_rank(q_bar).expect("q_bar in range");
    if p_qbar.is_nan() || p_qbar <= 0.0 {
        return Err(SimError::BadWorld("w_qbar has zero marginal".into()));
    }
    let params = FsbParams {
        num_buckets,
        q_bar: q_bar as u64,
        p_qbar,
        salt,
        dist: &marginal,
    };
    let bucketizer = SimBucketizer::Fsb(params);
    let bucket_adv = adv_bucket(world, &bucketizer, q)?;
    let base = adv_guess(world, q);

    let lambda_q = world.lambda(q);
    let lambda_qbar = world.lambda(q_bar);
    let checks = if q <= q_bar {
        vec![BoundCheck::eq(
            "delta == 0 for q <= q_bar",
            bucket_adv,
            base,
            EQ_TOLERANCE,
        )]
    } else {
        vec![
            BoundCheck::le(
                "(lambda_q + lambda_qbar)/2 <= adv_bucket",
                (lambda_q + lambda_qbar) / 2.0,
                bucket_adv,
                EQ_TOLERANCE,
            ),
            BoundCheck::le(
                "adv_bucket <= lambda_qbar + (q - q_bar) * p(w_qbar)",
                bucket_adv,
                lambda_qbar + (q - q_bar) as f64 * p_qbar,
                EQ_TOLERANCE,
            ),
        ]
    };
    let mut report = TheoremReport {
        scheme: "fsb",
        q,
        q_bar: Some(q_bar),
        adv_guess: base,
        adv_bucket: bucket_adv,
        delta: bucket_adv - base,
        checks,
        counterexample: None,
    };
    attach_counterexample(&mut report, world);
    Ok(report)
}

fn attach_counterexample(report: &mut TheoremReport, world: &SyntheticWorld) {
    if !report.all_ok() {
        let failing: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{}: lhs={} rhs={}", c.name, c.lhs, c.rhs))
            .collect();
        report.counterexample = Some(format!(
            "scheme={} q={} q_bar={:?}\nviolated: {}\nworld: {}",
            report.scheme,
            report.q,
            report.q_bar,
            failing.join("; "),
            world.to_json(),
        ));
    }
}
