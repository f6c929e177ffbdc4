//! Synthetic credential worlds: small finite user/password universes
//! with an explicit joint distribution, so guessing advantages can be
//! computed exactly by enumeration rather than estimated.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::bucketize::DistEstimate;

/// A finite credential universe. `leaked` marks the pairs the C3 server
/// knows; a user is compromised exactly when one of their pairs is
/// leaked.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    users: Vec<String>,
    passwords: Vec<String>,
    joint: Joint,
    leaked: BTreeSet<(usize, usize)>,
    password_index: HashMap<String, usize>,
    user_index: HashMap<String, usize>,
    password_marginal: Vec<f64>,
    user_marginal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Joint {
    Independent {
        user_probs: Vec<f64>,
        password_probs: Vec<f64>,
    },
    Explicit(Vec<f64>), // row-major users x passwords
}

const PROB_TOLERANCE: f64 = 1e-9;

/// On-disk representation (JSON).
#[derive(Debug, Serialize, Deserialize)]
pub struct WorldFile {
    pub users: Vec<String>,
    pub passwords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub leaked_pairs: Vec<(usize, usize)>,
}

impl SyntheticWorld {
    pub fn independent(
        users: Vec<String>,
        passwords: Vec<String>,
        user_probs: Vec<f64>,
        password_probs: Vec<f64>,
        leaked: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SimError> {
        if users.len() != user_probs.len() || passwords.len() != password_probs.len() {
            return Err(SimError::BadWorld("probability vector length mismatch".into()));
        }
        check_distribution(&user_probs, "user")?;
        check_distribution(&password_probs, "password")?;
        Self::assemble(
            users,
            passwords,
            Joint::Independent {
                user_probs,
                password_probs,
            },
            leaked,
        )
    }

    pub fn explicit(
        users: Vec<String>,
        passwords: Vec<String>,
        joint_rows: Vec<Vec<f64>>,
        leaked: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SimError> {
        if joint_rows.len() != users.len()
            || joint_rows.iter().any(|r| r.len() != passwords.len())
        {
            return Err(SimError::BadWorld("joint matrix shape mismatch".into()));
        }
        let flat: Vec<f64> = joint_rows.into_iter().flatten().collect();
        check_distribution(&flat, "joint")?;
        Self::assemble(users, passwords, Joint::Explicit(flat), leaked)
    }

    fn assemble(
        users: Vec<String>,
        passwords: Vec<String>,
        joint: Joint,
        leaked: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SimError> {
        if users.is_empty() || passwords.is_empty() {
            return Err(SimError::BadWorld("empty user or password universe".into()));
        }
        let user_index: HashMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let password_index: HashMap<String, usize> = passwords
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        if user_index.len() != users.len() || password_index.len() != passwords.len() {
            return Err(SimError::BadWorld("duplicate user or password name".into()));
        }

        let mut world = SyntheticWorld {
            users,
            passwords,
            joint,
            leaked: BTreeSet::new(),
            password_index,
            user_index,
            password_marginal: Vec::new(),
            user_marginal: Vec::new(),
        };
        for (u, w) in leaked {
            if u >= world.users.len() || w >= world.passwords.len() {
                return Err(SimError::BadWorld(format!(
                    "leaked pair ({u},{w}) out of range"
                )));
            }
            world.leaked.insert((u, w));
        }
        world.password_marginal = (0..world.passwords.len())
            .map(|w| (0..world.users.len()).map(|u| world.p(u, w)).sum())
            .collect();
        world.user_marginal = (0..world.users.len())
            .map(|u| (0..world.passwords.len()).map(|w| world.p(u, w)).sum())
            .collect();
        Ok(world)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SimError> {
        let file: WorldFile =
            serde_json::from_slice(bytes).map_err(|e| SimError::BadWorld(e.to_string()))?;
        match (file.user_probs, file.password_probs, file.joint) {
            (Some(up), Some(wp), None) => {
                Self::independent(file.users, file.passwords, up, wp, file.leaked_pairs)
            }
            (None, None, Some(joint)) => {
                Self::explicit(file.users, file.passwords, joint, file.leaked_pairs)
            }
            _ => Err(SimError::BadWorld(
                "world file needs either user_probs+password_probs or joint".into(),
            )),
        }
    }

    pub fn to_json(&self) -> String {
        let file = match &self.joint {
            Joint::Independent {
                user_probs,
                password_probs,
            } => WorldFile {
                users: self.users.clone(),
                passwords: self.passwords.clone(),
                user_probs: Some(user_probs.clone()),
                password_probs: Some(password_probs.clone()),
                joint: None,
                leaked_pairs: self.leaked.iter().copied().collect(),
            },
            Joint::Explicit(flat) => WorldFile {
                users: self.users.clone(),
                passwords: self.passwords.clone(),
                user_probs: None,
                password_probs: None,
                joint: Some(
                    flat.chunks(self.passwords.len())
                        .map(|r| r.to_vec())
                        .collect(),
                ),
                leaked_pairs: self.leaked.iter().copied().collect(),
            },
        };
        serde_json::to_string_pretty(&file).expect("world serializes")
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn passwords(&self) -> &[String] {
        &self.passwords
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.joint, Joint::Independent { .. })
    }

    /// Joint probability by index.
    pub fn p(&self, user: usize, password: usize) -> f64 {
        match &self.joint {
            Joint::Independent {
                user_probs,
                password_probs,
            } => user_probs[user] * password_probs[password],
            Joint::Explicit(flat) => flat[user * self.passwords.len() + password],
        }
    }

    pub fn password_marginal(&self, password: usize) -> f64 {
        self.password_marginal[password]
    }

    pub fn user_marginal(&self, user: usize) -> f64 {
        self.user_marginal[user]
    }

    pub fn password_id(&self, password: &str) -> Option<usize> {
        self.password_index.get(password).copied()
    }

    pub fn user_id(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn leaked_pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.leaked
    }

    /// Password-only projection of the leak.
    pub fn leaked_password_ids(&self) -> BTreeSet<usize> {
        self.leaked.iter().map(|&(_, w)| w).collect()
    }

    pub fn is_compromised(&self, user: usize) -> bool {
        self.leaked
            .range((user, 0)..=(user, usize::MAX))
            .next()
            .is_some()
    }

    /// Leaked passwords of one user in descending marginal order, the
    /// default targeted-guess source for compromised users.
    pub fn user_leaked_passwords(&self, user: usize) -> Vec<String> {
        let mut ws: Vec<usize> = self
            .leaked
            .range((user, 0)..=(user, usize::MAX))
            .map(|&(_, w)| w)
            .collect();
        ws.sort_by(|&a, &b| {
            self.password_marginal[b]
                .partial_cmp(&self.password_marginal[a])
                .unwrap()
                .then_with(|| self.passwords[a].cmp(&self.passwords[b]))
        });
        ws.into_iter().map(|w| self.passwords[w].clone()).collect()
    }

    /// Passwords ranked by marginal probability, descending, ties broken
    /// lexicographically. Defines w_q for every scheme parameterized on
    /// "the q-th most likely password".
    pub fn ranked_passwords(&self) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self
            .password_marginal
            .iter()
            .copied()
            .enumerate()
            .collect();
        ranked.sort_by(|(wa, pa), (wb, pb)| {
            pb.partial_cmp(pa)
                .unwrap()
                .then_with(|| self.passwords[*wa].cmp(&self.passwords[*wb]))
        });
        ranked
    }

    /// lambda_q: total probability mass of the q most likely passwords.
    pub fn lambda(&self, q: usize) -> f64 {
        self.ranked_passwords()
            .iter()
            .take(q)
            .map(|(_, p)| p)
            .sum()
    }

    /// Draw one (user, password) pair from the joint distribution.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let mut u: f64 = rng.random();
        let nw = self.passwords.len();
        for user in 0..self.users.len() {
            for password in 0..nw {
                let p = self.p(user, password);
                if u < p {
                    return (user, password);
                }
                u -= p;
            }
        }
        (self.users.len() - 1, nw - 1) // fp slack lands on the last cell
    }
}

fn check_distribution(probs: &[f64], what: &str) -> Result<(), SimError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SimError::BadWorld(format!(
            "{what} probabilities must be finite and nonnegative"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(SimError::BadWorld(format!(
            "{what} probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Exact world marginal as a probability source: the "perfect estimator"
/// hypothesis of the frequency-smoothing analysis.
pub struct WorldMarginal<'w> {
    world: &'w SyntheticWorld,
}

impl<'w> WorldMarginal<'w> {
    pub fn new(world: &'w SyntheticWorld) -> Self {
        WorldMarginal { world }
    }

    /// Marginal probability of the rank-th most likely password
    /// (1-based).
    pub fn prob_at_rank(&self, rank: usize) -> Option<f64> {
        self.world
            .ranked_passwords()
            .get(rank.checked_sub(1)?)
            .map(|(_, p)| *p)
    }
}

impl DistEstimate for WorldMarginal<'_> {
    fn prob_of(&self, password: &str) -> f64 {
        self.world
            .password_id(password)
            .map(|w| self.world.password_marginal(w))
            .unwrap_or(0.0)
    }
}

/// Shape of randomly generated worlds.
#[derive(Debug, Clone)]
pub struct RandomWorldSpec {
    pub users: (usize, usize),
    pub passwords: (usize, usize),
    /// Exponent applied to uniform draws before normalization; larger
    /// means a heavier head.
    pub skew: f64,
    /// Probability that each (user, password) pair is leaked.
    pub leak_fraction: f64,
    pub independent: bool,
}

impl Default for RandomWorldSpec {
    fn default() -> Self {
        RandomWorldSpec {
            users: (4, 8),
            passwords: (10, 24),
            skew: 3.0,
            leak_fraction: 0.15,
            independent: true,
        }
    }
}

pub fn random_world(seed: u64, spec: &RandomWorldSpec) -> SyntheticWorld {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let nu = rng.random_range(spec.users.0..=spec.users.1);
    let nw = rng.random_range(spec.passwords.0..=spec.passwords.1);
    let users: Vec<String> = (0..nu).map(|i| format!("user{i:02}@example.com")).collect();
    // Mixed lengths so policy filters have something to cut.
    let passwords: Vec<String> = (0..nw)
        .map(|i| {
            if i % 3 == 0 {
                format!("password{i:02}")
            } else {
                format!("pw{i:02}")
            }
        })
        .collect();

    let skewed = |rng: &mut rand_chacha::ChaCha12Rng, n: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n)
            .map(|_| rng.random::<f64>().powf(spec.skew) + 1e-6)
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    };

    let leaked: Vec<(usize, usize)> = (0..nu)
        .flat_map(|u| (0..nw).map(move |w| (u, w)))
        .filter(|_| rng.random::<f64>() < spec.leak_fraction)
        .collect();

    if spec.independent {
        let up = skewed(&mut rng, nu);
        let wp = skewed(&mut rng, nw);
        SyntheticWorld::independent(users, passwords, up, wp, leaked)
            .expect("generated world is valid")
    } else {
        let flat = skewed(&mut rng, nu * nw);
        let rows: Vec<Vec<f64>> = flat.chunks(nw).map(|r| r.to_vec()).collect();
        SyntheticWorld::explicit(users, passwords, rows, leaked)
            .expect("generated world is valid")
    }
}

/// A site password policy: length floor plus a banned list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PasswordPolicy {
    pub min_length: usize,
    #[serde(default)]
    pub banned: BTreeSet<String>,
}

impl PasswordPolicy {
    pub fn admits(&self, password: &str) -> bool {
        password.len() >= self.min_length && !self.banned.contains(password)
    }
}

/// Restrict test sampling to policy-conforming passwords, renormalized.
/// Server-side artifacts stay keyed to the original world; only the
/// sampling universe shrinks.
pub fn policy_filter(
    world: &SyntheticWorld,
    policy: &PasswordPolicy,
) -> Result<SyntheticWorld, SimError> {
    let keep: Vec<usize> = (0..world.passwords.len())
        .filter(|&w| policy.admits(&world.passwords[w]))
        .collect();
    if keep.is_empty() {
        return Err(SimError::EmptyPolicy);
    }
    let new_index: HashMap<usize, usize> = keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let passwords: Vec<String> = keep.iter().map(|&w| world.passwords[w].clone()).collect();
    let leaked: Vec<(usize, usize)> = world
        .leaked
        .iter()
        .filter_map(|&(u, w)| new_index.get(&w).map(|&nw| (u, nw)))
        .collect();

    match &world.joint {
        Joint::Independent {
            user_probs,
            password_probs,
        } => {
            let kept_mass: f64 = keep.iter().map(|&w| password_probs[w]).sum();
            let wp: Vec<f64> = keep.iter().map(|&w| password_probs[w] / kept_mass).collect();
            SyntheticWorld::independent(
                world.users.clone(),
                passwords,
                user_probs.clone(),
                wp,
                leaked,
            )
        }
        Joint::Explicit(_) => {
            let mut rows: Vec<Vec<f64>> = (0..world.users.len())
                .map(|u| keep.iter().map(|&w| world.p(u, w)).collect())
                .collect();
            let total: f64 = rows.iter().flatten().sum();
            if total <= 0.0 {
                return Err(SimError::EmptyPolicy);
            }
            for row in &mut rows {
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
            SyntheticWorld::explicit(world.users.clone(), passwords, rows, leaked)
        }
    }
}
