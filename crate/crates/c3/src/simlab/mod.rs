//! The security-evaluation lab: exact guessing-game advantages on small
//! synthetic worlds, Monte-Carlo cross-checks, theorem verification for
//! the three bucketization schemes, list-based attack strategies, the
//! password-policy experiment, and the correlated-query attack.

mod advantage;
mod attack;
mod correlated;
mod games;
mod world;

pub use advantage::{
    adv_bucket, adv_guess, check_fsb_theorem, check_hpb_bound, check_idb_equality, security_loss,
    BoundCheck, SimBucketizer, TheoremReport, EQ_TOLERANCE, MAX_EXACT_STATES,
};
pub use attack::AttackerModel;
pub use correlated::{correlated_attack, tweak_neighbors, CorrelatedModel};
pub use games::{run_game, Attacker, Game, GameOutcome, OptimalAttacker};
pub use world::{
    policy_filter, random_world, PasswordPolicy, RandomWorldSpec, SyntheticWorld, WorldFile,
    WorldMarginal,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    BadWorld(String),
    #[error("theorem hypotheses require an independent user/password joint")]
    NonIndependentWorld,
    #[error("state space {0} too large for exact computation")]
    TooLargeForExact(u64),
    #[error("password policy admits no passwords")]
    EmptyPolicy,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
