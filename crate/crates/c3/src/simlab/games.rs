//! Monte-Carlo versions of the guessing games.
//!
//! One trial: draw a credential from the world, (for the bucket game)
//! draw a bucket uniformly from its covered set, ask the attacker for q
//! guesses, score a hit if the real password is among them.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::advantage::SimBucketizer;
use super::world::SyntheticWorld;
use crate::bucketize::{pick_bucket_random, BucketId};

/// A guessing strategy. `bucket` is `None` in the plain game.
pub trait Attacker {
    fn guesses(&self, username: &str, bucket: Option<BucketId>, q: usize) -> Vec<String>;
}

pub enum Game<'a> {
    Guess,
    BucketGuess(&'a SimBucketizer<'a>),
}

/// Estimated success probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOutcome {
    pub rate: f64,
    pub sigma: f64,
    pub trials: usize,
}

impl GameOutcome {
    /// |rate - reference| measured in standard errors.
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        if self.sigma == 0.0 {
            if (self.rate - reference).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.rate - reference).abs() / self.sigma
        }
    }
}

pub fn run_game(
    world: &SyntheticWorld,
    game: Game<'_>,
    attacker: &dyn Attacker,
    q: usize,
    trials: usize,
    seed: u64,
) -> GameOutcome {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let (u, w) = world.sample_pair(&mut rng);
        let username = &world.users()[u];
        let password = &world.passwords()[w];
        let guesses = match &game {
            Game::Guess => attacker.guesses(username, None, q),
            Game::BucketGuess(bucketizer) => {
                let interval = bucketizer.covered(username, password);
                let bucket = pick_bucket_random(&interval, &mut rng);
                attacker.guesses(username, Some(bucket), q)
            }
        };
        if guesses.iter().any(|g| g == password) {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    GameOutcome {
        rate,
        sigma: (rate * (1.0 - rate) / trials as f64).sqrt(),
        trials,
    }
}

/// The exact maximizer for both games: orders candidates by the same
/// weights the closed-form advantages use, so the Monte-Carlo rate
/// converges to them.
pub struct OptimalAttacker<'a> {
    world: &'a SyntheticWorld,
    bucketizer: Option<&'a SimBucketizer<'a>>,
}

impl<'a> OptimalAttacker<'a> {
    pub fn new(world: &'a SyntheticWorld, bucketizer: Option<&'a SimBucketizer<'a>>) -> Self {
        OptimalAttacker { world, bucketizer }
    }
}

impl Attacker for OptimalAttacker<'_> {
    fn guesses(&self, username: &str, bucket: Option<BucketId>, q: usize) -> Vec<String> {
        let Some(u) = self.world.user_id(username) else {
            return Vec::new();
        };
        let mut scored: Vec<(usize, f64)> = Vec::new();
        for w in 0..self.world.passwords().len() {
            let mass = self.world.p(u, w);
            if mass == 0.0 {
                continue;
            }
            match (bucket, self.bucketizer) {
                (Some(b), Some(bucketizer)) => {
                    let interval =
                        bucketizer.covered(username, &self.world.passwords()[w]);
                    if interval.covers(b) {
                        scored.push((w, mass / interval.gamma as f64));
                    }
                }
                _ => scored.push((w, mass)),
            }
        }
        scored.sort_by(|(wa, pa), (wb, pb)| {
            pb.partial_cmp(pa).unwrap().then_with(|| {
                self.world.passwords()[*wa].cmp(&self.world.passwords()[*wb])
            })
        });
        scored
            .into_iter()
            .take(q)
            .map(|(w, _)| self.world.passwords()[w].clone())
            .collect()
    }
}
