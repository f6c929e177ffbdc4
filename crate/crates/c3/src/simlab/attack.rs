//! The candidate-list attack strategy: a global weight-ordered guess
//! list built from the breach corpus and the estimator tail, filtered
//! per query to the observed bucket, with targeted guesses first for
//! users the attacker has seen before.

use std::collections::{BTreeMap, HashSet};

use super::advantage::SimBucketizer;
use super::games::Attacker;
use crate::bucketize::{BucketId, DistEstimate};

/// A guessing-attack configuration.
pub struct AttackerModel<'a> {
    /// De-duplicated candidate pool: leaked passwords first (frequency
    /// order), then sampled tail passwords.
    candidates: Vec<String>,
    /// Weight source; candidate order within a bucket is
    /// prob(w) / |beta((u,w))| descending.
    dist: &'a dyn DistEstimate,
    /// Per-username targeted guesses for compromised users, guessed
    /// first whenever they fall in the observed bucket.
    targeted: BTreeMap<String, Vec<String>>,
    bucketizer: Option<&'a SimBucketizer<'a>>,
}

impl<'a> AttackerModel<'a> {
    pub fn new(
        leaked_by_frequency: Vec<String>,
        sampled_tail: Vec<String>,
        dist: &'a dyn DistEstimate,
        bucketizer: Option<&'a SimBucketizer<'a>>,
    ) -> Self {
        let mut seen = HashSet::new();
        let mut candidates = Vec::new();
        for w in leaked_by_frequency.into_iter().chain(sampled_tail) {
            if seen.insert(w.clone()) {
                candidates.push(w);
            }
        }
        AttackerModel {
            candidates,
            dist,
            targeted: BTreeMap::new(),
            bucketizer,
        }
    }

    /// Install targeted first guesses for a (compromised) username. The
    /// source is pluggable; the default used by the lab is the user's
    /// own leaked passwords, frequency-ordered.
    pub fn set_targeted(&mut self, username: &str, guesses: Vec<String>) {
        self.targeted.insert(username.to_string(), guesses);
    }

    /// The default targeted source: every compromised user's own leaked
    /// passwords, most frequent first.
    pub fn target_compromised_users(&mut self, world: &super::world::SyntheticWorld) {
        for (u, username) in world.users().iter().enumerate() {
            if world.is_compromised(u) {
                self.set_targeted(username, world.user_leaked_passwords(u));
            }
        }
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    /// Ordered guesses for one (user, bucket) observation: targeted
    /// guesses from the bucket first, then pool candidates in the bucket
    /// by weight descending (tie: lexicographic).
    pub fn attack_candidates(
        &self,
        username: &str,
        bucket: Option<BucketId>,
        q: usize,
    ) -> Vec<String> {
        let in_bucket = |w: &str| -> Option<u64> {
            match (bucket, self.bucketizer) {
                (Some(b), Some(bucketizer)) => {
                    let interval = bucketizer.covered(username, w);
                    interval.covers(b).then_some(interval.gamma)
                }
                _ => Some(1),
            }
        };

        let mut out: Vec<String> = Vec::new();
        let mut used: HashSet<&str> = HashSet::new();
        if let Some(targeted) = self.targeted.get(username) {
            for w in targeted {
                if out.len() >= q {
                    break;
                }
                if in_bucket(w).is_some() && used.insert(w) {
                    out.push(w.clone());
                }
            }
        }

        let mut scored: Vec<(&str, f64)> = self
            .candidates
            .iter()
            .filter(|w| !used.contains(w.as_str()))
            .filter_map(|w| {
                in_bucket(w).map(|gamma| (w.as_str(), self.dist.prob_of(w) / gamma as f64))
            })
            .collect();
        scored.sort_by(|(wa, pa), (wb, pb)| pb.partial_cmp(pa).unwrap().then_with(|| wa.cmp(wb)));
        for (w, _) in scored {
            if out.len() >= q {
                break;
            }
            out.push(w.to_string());
        }
        out
    }
}

impl Attacker for AttackerModel<'_> {
    fn guesses(&self, username: &str, bucket: Option<BucketId>, q: usize) -> Vec<String> {
        self.attack_candidates(username, bucket, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bucketize::{FsbParams, HpbParams};
    use crate::hashes::HashAlgorithm;
    use crate::simlab::world::{random_world, RandomWorldSpec, WorldMarginal};

    #[test]
    fn pool_is_deduplicated_in_order() {
        struct Unit;
        impl DistEstimate for Unit {
            fn prob_of(&self, _: &str) -> f64 {
                1.0
            }
        }
        let model = AttackerModel::new(
            vec!["a".into(), "b".into()],
            vec!["b".into(), "c".into(), "a".into()],
            &Unit,
            None,
        );
        assert_eq!(model.candidates(), &["a", "b", "c"]);
    }

    #[test]
    fn fsb_head_passwords_appear_in_every_buckets_list() {
        let w = random_world(2, &RandomWorldSpec::default());
        let marginal = WorldMarginal::new(&w);
        let p_qbar = marginal.prob_at_rank(2).unwrap();
        let params = FsbParams {
            num_buckets: 8,
            q_bar: 2,
            p_qbar,
            salt: b"s",
            dist: &marginal,
        };
        let bucketizer = SimBucketizer::Fsb(params);
        let ranked = w.ranked_passwords();
        let head: Vec<String> = ranked
            .iter()
            .take(2)
            .map(|(i, _)| w.passwords()[*i].clone())
            .collect();
        let model = AttackerModel::new(
            w.passwords().to_vec(),
            Vec::new(),
            &marginal,
            Some(&bucketizer),
        );
        for b in 0..8 {
            let guesses = model.attack_candidates("user00@example.com", Some(b), 64);
            for h in &head {
                assert!(guesses.contains(h), "bucket {b} missing head {h}");
            }
        }
    }

    #[test]
    fn hpb_list_is_the_bucket_filtered_top_q() {
        let w = random_world(4, &RandomWorldSpec::default());
        let marginal = WorldMarginal::new(&w);
        let params = HpbParams::with_salt(3, HashAlgorithm::Sha256, Some(vec![1])).unwrap();
        let bucketizer = SimBucketizer::Hpb(params.clone());
        let model = AttackerModel::new(
            w.passwords().to_vec(),
            Vec::new(),
            &marginal,
            Some(&bucketizer),
        );
        let u = "user00@example.com";
        for b in 0..8 {
            let got = model.attack_candidates(u, Some(b), 3);
            let mut want: Vec<(String, f64)> = w
                .passwords()
                .iter()
                .filter(|pw| crate::bucketize::hpb_bucket(pw.as_bytes(), &params) == b)
                .map(|pw| (pw.clone(), marginal.prob_of(pw)))
                .collect();
            want.sort_by(|(wa, pa), (wb, pb)| pb.partial_cmp(pa).unwrap().then(wa.cmp(wb)));
            let want: Vec<String> = want.into_iter().take(3).map(|(w, _)| w).collect();
            assert_eq!(got, want, "bucket {b}");
        }
    }

    #[test]
    fn targeted_guesses_lead_when_in_bucket() {
        let w = random_world(6, &RandomWorldSpec::default());
        let marginal = WorldMarginal::new(&w);
        let mut model =
            AttackerModel::new(w.passwords().to_vec(), Vec::new(), &marginal, None);
        let u = "user00@example.com";
        let tail = w.ranked_passwords().last().unwrap().0;
        let tail_pw = w.passwords()[tail].clone();
        model.set_targeted(u, vec![tail_pw.clone()]);
        let guesses = model.attack_candidates(u, None, 3);
        assert_eq!(guesses[0], tail_pw);
        // And it is not repeated later in the list.
        assert_eq!(guesses.iter().filter(|g| **g == tail_pw).count(), 1);
    }

    #[test]
    fn default_targets_are_the_users_leaked_passwords() {
        let w = random_world(8, &RandomWorldSpec::default());
        let marginal = WorldMarginal::new(&w);
        let mut model = AttackerModel::new(w.passwords().to_vec(), Vec::new(), &marginal, None);
        model.target_compromised_users(&w);
        let compromised = (0..w.users().len()).find(|&u| w.is_compromised(u));
        let Some(u) = compromised else {
            return; // world happens to have no leak; nothing to check
        };
        let username = &w.users()[u];
        let own = w.user_leaked_passwords(u);
        let guesses = model.attack_candidates(username, None, own.len());
        assert_eq!(guesses, own);
    }

    #[test]
    fn weights_match_hand_computation_on_a_toy_world() {
        // Three passwords, gamma 4/2/1 out of 4 buckets; weight order
        // within a bucket containing all three is p/gamma.
        use std::collections::HashMap;
        struct Table(HashMap<String, f64>);
        impl DistEstimate for Table {
            fn prob_of(&self, w: &str) -> f64 {
                *self.0.get(w).unwrap_or(&0.0)
            }
        }
        let dist = Table(
            [("big", 0.4), ("mid", 0.2), ("small", 0.08)]
                .into_iter()
                .map(|(w, p)| (w.to_string(), p))
                .collect(),
        );
        let params = FsbParams {
            num_buckets: 4,
            q_bar: 1,
            p_qbar: 0.4,
            salt: b"s",
            dist: &dist,
        };
        // gammas: big 4, mid 2, small 1; weights: 0.1, 0.1, 0.08.
        // Tie between big and mid breaks lexicographically.
        let bucketizer = SimBucketizer::Fsb(params);
        let model = AttackerModel::new(
            vec!["big".into(), "mid".into(), "small".into()],
            Vec::new(),
            &dist,
            Some(&bucketizer),
        );
        // Find a bucket where all three land.
        let all_covered = (0..4).find(|&b| {
            ["big", "mid", "small"]
                .iter()
                .all(|w| bucketizer.covered("u", w).covers(b))
        });
        if let Some(b) = all_covered {
            let guesses = model.attack_candidates("u", Some(b), 3);
            assert_eq!(guesses, vec!["big", "mid", "small"]);
        }
        // Unfiltered order uses raw probabilities.
        let guesses = model.attack_candidates("u", None, 3);
        assert_eq!(guesses, vec!["big", "mid", "small"]);
    }
}
