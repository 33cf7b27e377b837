//! Committee selection: plain greedy maximization, the representationally
//! constrained two-phase greedy, a brute-force oracle, and the derivation
//! of the constraint level from top-k singleton quality.

use crate::preferences::{CandidateId, Group, GroupPartition, Profile};
use crate::scoring::{RuleError, RuleSpec};
use itertools::Itertools;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("infeasible constraint: need {need} candidates from {group}, only {have} available")]
    Infeasible {
        need: usize,
        have: usize,
        group: &'static str,
    },
    #[error("committee size {k} exceeds the {available} available candidates")]
    NotEnoughCandidates { k: usize, available: usize },
    #[error("brute force over C({m},{k}) subsets exceeds the guard of {guard}")]
    BruteForceGuard { m: usize, k: usize, guard: u64 },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// A selected size-k committee, with the order greedy added members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committee {
    members: Vec<CandidateId>,
    order_added: Vec<CandidateId>,
}

impl Committee {
    fn new(mut members: Vec<CandidateId>, order_added: Vec<CandidateId>) -> Self {
        members.sort_unstable();
        Committee {
            members,
            order_added,
        }
    }

    /// Members in ascending candidate order.
    pub fn members(&self) -> &[CandidateId] {
        &self.members
    }

    /// Members in the order greedy inserted them (empty base first phases
    /// come before later phases).
    pub fn order_added(&self) -> &[CandidateId] {
        &self.order_added
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, c: CandidateId) -> bool {
        self.members.binary_search(&c).is_ok()
    }

    pub fn count_in(&self, g: &GroupPartition, group: Group) -> usize {
        self.members
            .iter()
            .filter(|c| g.group_of(**c) == Ok(group))
            .count()
    }
}

/// Greedy maximization against a marginal oracle.
///
/// Starting from `base`, repeatedly adds the ground candidate with the
/// largest marginal until the committee reaches size k. Ties go to the
/// smallest candidate index, so the result is deterministic.
pub fn greedy<F>(
    mut marginal: F,
    ground: &[CandidateId],
    k: usize,
    base: &[CandidateId],
) -> Result<Committee, SelectionError>
where
    F: FnMut(&[CandidateId], CandidateId) -> Result<f64, RuleError>,
{
    let mut current: Vec<CandidateId> = base.to_vec();
    let mut ground: Vec<CandidateId> = ground
        .iter()
        .copied()
        .filter(|c| !current.contains(c))
        .collect();
    ground.sort_unstable();
    ground.dedup();
    if current.len() + ground.len() < k {
        return Err(SelectionError::NotEnoughCandidates {
            k,
            available: current.len() + ground.len(),
        });
    }
    let mut order_added = Vec::new();
    while current.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for (slot, c) in ground.iter().enumerate() {
            let value = marginal(&current, *c)?;
            // Strict improvement only: the ascending scan keeps the
            // smallest index on ties.
            if best.is_none_or(|(best_value, _)| value > best_value) {
                best = Some((value, slot));
            }
        }
        let (_, slot) = best.expect("ground checked non-empty");
        let chosen = ground.remove(slot);
        current.push(chosen);
        order_added.push(chosen);
    }
    Ok(Committee::new(current, order_added))
}

/// Two-phase constrained greedy: fill ℓ seats from the disadvantaged group
/// first, then complete the committee from the advantaged group, always
/// maximizing the biased profile marginal.
pub fn constrained_greedy(
    profile_biased: &Profile,
    rule: &RuleSpec,
    k: usize,
    ell: usize,
    g: &GroupPartition,
) -> Result<Committee, SelectionError> {
    let disadvantaged = g.disadvantaged();
    let advantaged = g.advantaged();
    if ell > k || disadvantaged.len() < ell {
        return Err(SelectionError::Infeasible {
            need: ell,
            have: disadvantaged.len(),
            group: "G2",
        });
    }
    if advantaged.len() < k - ell {
        return Err(SelectionError::Infeasible {
            need: k - ell,
            have: advantaged.len(),
            group: "G1",
        });
    }
    let oracle = |s: &[CandidateId], c: CandidateId| rule.profile_marginal(s, c, profile_biased);
    let phase_two = greedy(oracle, &disadvantaged, ell, &[])?;
    let mut order_added = phase_two.order_added().to_vec();
    let phase_one = greedy(oracle, &advantaged, k, phase_two.members())?;
    order_added.extend_from_slice(phase_one.order_added());
    Ok(Committee::new(phase_one.members().to_vec(), order_added))
}

const BRUTE_FORCE_GUARD: u64 = 10_000_000;

/// Number of size-k subsets, saturating once it exceeds the guard.
pub fn subset_count(m: usize, k: usize) -> u64 {
    if k > m {
        return 0;
    }
    let mut result: u64 = 1;
    for i in 0..k.min(m - k) {
        result = result.saturating_mul((m - i) as u64) / (i as u64 + 1);
        if result > BRUTE_FORCE_GUARD.saturating_mul(64) {
            return u64::MAX;
        }
    }
    result
}

/// Exhaustive optimum over size-k committees, optionally restricted to
/// those with at least `min_disadvantaged` members of the disadvantaged
/// group. Score ties go to the lexicographically smallest member set.
pub fn brute_force_best(
    profile: &Profile,
    rule: &RuleSpec,
    k: usize,
    min_disadvantaged: Option<usize>,
    g: Option<&GroupPartition>,
) -> Result<(Committee, f64), SelectionError> {
    let m = profile.m();
    if k > m {
        return Err(SelectionError::NotEnoughCandidates { k, available: m });
    }
    if subset_count(m, k) > BRUTE_FORCE_GUARD {
        return Err(SelectionError::BruteForceGuard {
            m,
            k,
            guard: BRUTE_FORCE_GUARD,
        });
    }
    let mut best: Option<(f64, Vec<CandidateId>)> = None;
    for subset in (0..m).map(CandidateId).combinations(k) {
        if let (Some(min), Some(g)) = (min_disadvantaged, g) {
            let count = subset.iter().filter(|c| g.is_disadvantaged(**c)).count();
            if count < min {
                continue;
            }
        }
        let score = rule.profile_score(&subset, profile)?;
        let better = match &best {
            None => true,
            Some((best_score, best_set)) => {
                score > *best_score || (score == *best_score && subset < *best_set)
            }
        };
        if better {
            best = Some((score, subset));
        }
    }
    let (score, members) = best.ok_or(SelectionError::Infeasible {
        need: min_disadvantaged.unwrap_or(0),
        have: g.map_or(0, |g| g.disadvantaged_count()),
        group: "G2",
    })?;
    Ok((Committee::new(members.clone(), members), score))
}

/// Top-k candidates by the supplied singleton means (ties to the smallest
/// index) and the induced constraint level ℓ = |top-k ∩ G2|.
pub fn ell_from_top_k(
    latent_singleton_means: &[f64],
    k: usize,
    g: &GroupPartition,
) -> (Vec<CandidateId>, usize) {
    let mut by_mean: Vec<usize> = (0..latent_singleton_means.len()).collect();
    by_mean.sort_by(|&a, &b| {
        latent_singleton_means[b]
            .partial_cmp(&latent_singleton_means[a])
            .expect("means are finite")
            .then(a.cmp(&b))
    });
    let top: Vec<CandidateId> = by_mean.into_iter().take(k).map(CandidateId).collect();
    let ell = top.iter().filter(|c| g.is_disadvantaged(**c)).count();
    (top, ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::PreferenceList;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn list(order: &[usize]) -> PreferenceList {
        PreferenceList::from_indices(order).unwrap()
    }

    fn ids(indices: &[usize]) -> Vec<CandidateId> {
        indices.iter().map(|&i| CandidateId(i)).collect()
    }

    fn g2(m: usize, disadvantaged: &[usize]) -> GroupPartition {
        GroupPartition::from_disadvantaged(m, disadvantaged).unwrap()
    }

    fn random_profile(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Profile {
        let lists = (0..n)
            .map(|_| {
                let mut order: Vec<CandidateId> = (0..m).map(CandidateId).collect();
                order.shuffle(rng);
                PreferenceList::new(order).unwrap()
            })
            .collect();
        Profile::new(lists).unwrap()
    }

    #[test]
    fn greedy_breaks_ties_by_smallest_index() {
        // Borda, voters (a,b,c) and (b,a,c): a and b both score 3.
        let profile = Profile::new(vec![list(&[0, 1, 2]), list(&[1, 0, 2])]).unwrap();
        let rule = RuleSpec::borda(3);
        let committee = greedy(
            |s, c| rule.profile_marginal(s, c, &profile),
            &ids(&[0, 1, 2]),
            1,
            &[],
        )
        .unwrap();
        assert_eq!(committee.members(), ids(&[0]).as_slice());
    }

    #[test]
    fn greedy_returns_everything_when_k_covers_the_ground() {
        let committee = greedy(
            |_, _| Ok(0.0),
            &ids(&[2, 0, 1]),
            3,
            &[],
        )
        .unwrap();
        assert_eq!(committee.members(), ids(&[0, 1, 2]).as_slice());
        assert!(matches!(
            greedy(|_, _| Ok(0.0), &ids(&[0]), 3, &[]),
            Err(SelectionError::NotEnoughCandidates { .. })
        ));
    }

    #[test]
    fn greedy_is_idempotent_in_its_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let profile = random_profile(&mut rng, 8, 10);
        let rule = RuleSpec::l1_cc(8);
        let ground = ids(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let first = greedy(
            |s, c| rule.profile_marginal(s, c, &profile),
            &ground,
            4,
            &[],
        )
        .unwrap();
        let again = greedy(
            |s, c| rule.profile_marginal(s, c, &profile),
            &ground,
            4,
            first.members(),
        )
        .unwrap();
        assert_eq!(first.members(), again.members());
        assert!(again.order_added().is_empty());
    }

    #[test]
    fn greedy_matches_top_k_for_modular_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.gen_range(3..=10);
            let n = rng.gen_range(1..=12);
            let k = rng.gen_range(1..=m.min(4));
            let profile = random_profile(&mut rng, m, n);
            let rule = RuleSpec::borda(m);
            let committee = greedy(
                |s, c| rule.profile_marginal(s, c, &profile),
                &(0..m).map(CandidateId).collect::<Vec<_>>(),
                k,
                &[],
            )
            .unwrap();
            let means = crate::scoring::singleton_means(&rule, &profile).unwrap();
            let (top, _) = ell_from_top_k(&means, k, &g2(m, &[]));
            let mut top_sorted = top;
            top_sorted.sort_unstable();
            assert_eq!(committee.members(), top_sorted.as_slice());
        }
    }

    #[test]
    fn constrained_greedy_trace_example() {
        // Borda m=3, voters (a,b,c),(b,a,c), G2={c}, k=2, l=1.
        let profile = Profile::new(vec![list(&[0, 1, 2]), list(&[1, 0, 2])]).unwrap();
        let rule = RuleSpec::borda(3);
        let g = g2(3, &[2]);
        let committee = constrained_greedy(&profile, &rule, 2, 1, &g).unwrap();
        assert_eq!(committee.members(), ids(&[0, 2]).as_slice());
        assert_eq!(committee.order_added(), ids(&[2, 0]).as_slice());
    }

    #[test]
    fn constrained_greedy_with_zero_ell_and_empty_g2_is_plain_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let profile = random_profile(&mut rng, 6, 8);
        let rule = RuleSpec::borda(6);
        let g = g2(6, &[]);
        let constrained = constrained_greedy(&profile, &rule, 3, 0, &g).unwrap();
        let plain = greedy(
            |s, c| rule.profile_marginal(s, c, &profile),
            &(0..6).map(CandidateId).collect::<Vec<_>>(),
            3,
            &[],
        )
        .unwrap();
        assert_eq!(constrained.members(), plain.members());
    }

    #[test]
    fn constrained_greedy_rejects_infeasible_ell() {
        let profile = Profile::new(vec![list(&[0, 1, 2])]).unwrap();
        let rule = RuleSpec::borda(3);
        assert!(matches!(
            constrained_greedy(&profile, &rule, 2, 2, &g2(3, &[0])),
            Err(SelectionError::Infeasible { .. })
        ));
        // |G1| < k - ell.
        assert!(matches!(
            constrained_greedy(&profile, &rule, 3, 0, &g2(3, &[0, 1])),
            Err(SelectionError::Infeasible { .. })
        ));
    }

    #[test]
    fn constrained_greedy_satisfies_the_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = rng.gen_range(4..=9);
            let profile = random_profile(&mut rng, m, 6);
            let disadvantaged: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            let g = g2(m, &disadvantaged);
            let k = rng.gen_range(1..=m.min(4));
            let max_ell = k.min(g.disadvantaged_count());
            let min_ell = k.saturating_sub(g.advantaged_count());
            if min_ell > max_ell {
                continue;
            }
            let ell = rng.gen_range(min_ell..=max_ell);
            let rule = RuleSpec::l1_cc(m);
            let committee = constrained_greedy(&profile, &rule, k, ell, &g).unwrap();
            assert_eq!(committee.len(), k);
            assert!(committee.count_in(&g, Group::Disadvantaged) >= ell);
        }
    }

    #[test]
    fn brute_force_examples() {
        let profile = Profile::new(vec![list(&[2, 0, 1, 3])]).unwrap();
        let rule = RuleSpec::borda(4);
        // k = m returns everything.
        let (all, _) = brute_force_best(&profile, &rule, 4, None, None).unwrap();
        assert_eq!(all.members(), ids(&[0, 1, 2, 3]).as_slice());
        // Single voter, k = 2: the voter's top two.
        let (top2, score) = brute_force_best(&profile, &rule, 2, None, None).unwrap();
        assert_eq!(top2.members(), ids(&[0, 2]).as_slice());
        assert_eq!(score, 5.0);
    }

    #[test]
    fn brute_force_guard_rejects_large_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let profile = random_profile(&mut rng, 40, 1);
        let rule = RuleSpec::borda(40);
        assert!(matches!(
            brute_force_best(&profile, &rule, 15, None, None),
            Err(SelectionError::BruteForceGuard { .. })
        ));
    }

    #[test]
    fn constrained_greedy_is_exact_for_modular_rules() {
        // With ell = |top-k ∩ G2|, the level the selection pipeline uses,
        // the two-phase greedy is exactly optimal over K(ell) for modular
        // rules.
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..200 {
            let m = rng.gen_range(4..=10);
            let n = rng.gen_range(1..=10);
            let k = rng.gen_range(1..=m.min(4));
            let profile = random_profile(&mut rng, m, n);
            let disadvantaged: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            let g = g2(m, &disadvantaged);
            for rule in [RuleSpec::sntv(m), RuleSpec::borda(m)] {
                let means = crate::scoring::singleton_means(&rule, &profile).unwrap();
                let (_, ell) = ell_from_top_k(&means, k, &g);
                let committee = constrained_greedy(&profile, &rule, k, ell, &g).unwrap();
                let greedy_score = rule.profile_score(committee.members(), &profile).unwrap();
                let (_, best) = brute_force_best(&profile, &rule, k, Some(ell), Some(&g)).unwrap();
                assert_eq!(greedy_score, best);
            }
        }
    }

    #[test]
    fn selection_is_invariant_to_voter_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profile = random_profile(&mut rng, 7, 9);
        let mut reversed_lists = profile.lists().to_vec();
        reversed_lists.reverse();
        let reversed = Profile::new(reversed_lists).unwrap();
        let g = g2(7, &[1, 3, 5]);
        let rule = RuleSpec::l1_cc(7);
        let a = constrained_greedy(&profile, &rule, 3, 1, &g).unwrap();
        let b = constrained_greedy(&reversed, &rule, 3, 1, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ell_from_top_k_examples() {
        // All means equal: tie-break gives the smallest indices.
        let (top, _) = ell_from_top_k(&[1.0, 1.0, 1.0], 2, &g2(3, &[]));
        assert_eq!(top, ids(&[0, 1]));
        // G2 disjoint from the top-k.
        let (_, ell) = ell_from_top_k(&[5.0, 4.0, 1.0, 0.5], 2, &g2(4, &[2, 3]));
        assert_eq!(ell, 0);
        // Means (5, 4, 3, 2) with G2 = {c1, c3}.
        let (top, ell) = ell_from_top_k(&[5.0, 4.0, 3.0, 2.0], 2, &g2(4, &[1, 3]));
        assert_eq!(top, ids(&[0, 1]));
        assert_eq!(ell, 1);
    }

    #[test]
    fn greedy_meets_the_submodular_guarantee() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let guarantee = 1.0 - (-1.0f64).exp();
        for _ in 0..60 {
            let m = rng.gen_range(4..=10);
            let n = rng.gen_range(1..=8);
            let k = rng.gen_range(1..=m.min(4));
            let profile = random_profile(&mut rng, m, n);
            let rule = RuleSpec::l1_cc(m);
            let committee = greedy(
                |s, c| rule.profile_marginal(s, c, &profile),
                &(0..m).map(CandidateId).collect::<Vec<_>>(),
                k,
                &[],
            )
            .unwrap();
            let achieved = rule.profile_score(committee.members(), &profile).unwrap();
            let (_, best) = brute_force_best(&profile, &rule, k, None, None).unwrap();
            assert!(achieved >= guarantee * best - 1e-9);
        }
    }
}
