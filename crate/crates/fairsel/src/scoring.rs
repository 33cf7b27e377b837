//! Multiwinner score functions: per-voter committee scores, marginal
//! contributions, profile aggregates, and rule diagnostics.
//!
//! Three families are supported. Sum-positional rules add a position score
//! for every committee member (SNTV, Borda, b-Bloc), max-positional rules
//! award the best member's position score (ℓ1-CC), and OWA-approval rules
//! score the overlap between the committee and each voter's top-m' approval
//! set with a non-increasing weight vector (PAV and friends).
//!
//! Score vectors with integer entries produce exact scores: every partial
//! sum encountered here is an integer far below 2^53, so f64 accumulation
//! is exact and runs compare bit-for-bit.

use crate::preferences::{CandidateId, PreferenceList, Profile};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("candidate c{0} out of range for {1} candidates")]
    CandidateOutOfRange(usize, usize),
    #[error("candidate c{0} already in the committee")]
    CandidateInCommittee(usize),
    #[error("candidate c{0} appears twice in the committee")]
    DuplicateCandidate(usize),
    #[error("rule is defined for {0} candidates but the list has {1}")]
    MismatchedCandidateCount(usize, usize),
    #[error("position scores must be non-negative, finite, and non-increasing")]
    InvalidScoreVector,
    #[error("OWA weights must be non-negative, finite, and non-increasing")]
    InvalidOwaWeights,
    #[error("approval size {0} out of range for {1} candidates")]
    InvalidApprovalSize(usize, usize),
    #[error("degenerate rule: no positive score entry")]
    DegenerateRule,
    #[error("diagnostics need at least 3 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("cannot parse rule `{0}`: {1}")]
    Parse(String, String),
}

/// Per-rank scores, non-increasing and non-negative.
///
/// Monotonicity is required: sum- and max-positional rules are domination
/// sensitive exactly when the score vector does not increase with rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionScoreVector(Vec<f64>);

impl PositionScoreVector {
    pub fn new(s: Vec<f64>) -> Result<Self, RuleError> {
        if s.is_empty() || s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RuleError::InvalidScoreVector);
        }
        if s.windows(2).any(|w| w[0] < w[1]) {
            return Err(RuleError::InvalidScoreVector);
        }
        Ok(PositionScoreVector(s))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    /// Score at a 1-based rank; ranks past the vector score 0.
    fn at(&self, rank: usize) -> f64 {
        self.0.get(rank - 1).copied().unwrap_or(0.0)
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

/// A declarative multiwinner score function over `m` candidates.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleSpec {
    /// f(S, ≻) = Σ_{c∈S} s_{pos(c)}.
    SumPositional(PositionScoreVector),
    /// f(S, ≻) = max_{c∈S} s_{pos(c)}, 0 for the empty committee.
    MaxPositional(PositionScoreVector),
    /// f(S, ≻) = Σ_{j=1}^{|S ∩ top-m'|} λ_j with λ non-increasing.
    OwaApproval {
        m: usize,
        approval_size: usize,
        weights: Vec<f64>,
    },
}

/// Sigma, tau_1 and tau_min for a rule; see [`RuleSpec::diagnostics`].
#[derive(Debug, Clone, PartialEq)]
pub struct RuleDiagnostics {
    /// Largest singleton score a candidate can attain (the rank-1 score).
    pub tau1: f64,
    /// Smallest non-zero singleton score.
    pub tau_min: f64,
    /// Discrete-convexity measure of the marginal score sequence; 1 for
    /// SNTV, 0 for Borda and ℓ1-CC, negative for step rules like b-Bloc.
    pub sigma: f64,
}

impl RuleSpec {
    pub fn sntv(m: usize) -> Self {
        let mut s = vec![0.0; m];
        s[0] = 1.0;
        RuleSpec::SumPositional(PositionScoreVector::new(s).expect("valid SNTV vector"))
    }

    pub fn borda(m: usize) -> Self {
        let s = (1..=m).map(|i| (m - i) as f64).collect();
        RuleSpec::SumPositional(PositionScoreVector::new(s).expect("valid Borda vector"))
    }

    pub fn l1_cc(m: usize) -> Self {
        let s = (1..=m).map(|i| (m - i) as f64).collect();
        RuleSpec::MaxPositional(PositionScoreVector::new(s).expect("valid CC vector"))
    }

    pub fn bloc(m: usize, b: usize) -> Result<Self, RuleError> {
        if b == 0 || b > m {
            return Err(RuleError::InvalidApprovalSize(b, m));
        }
        let s = (1..=m).map(|i| if i <= b { 1.0 } else { 0.0 }).collect();
        Ok(RuleSpec::SumPositional(PositionScoreVector::new(s)?))
    }

    pub fn owa(m: usize, approval_size: usize, weights: Vec<f64>) -> Result<Self, RuleError> {
        if approval_size == 0 || approval_size > m {
            return Err(RuleError::InvalidApprovalSize(approval_size, m));
        }
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RuleError::InvalidOwaWeights);
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(RuleError::InvalidOwaWeights);
        }
        Ok(RuleSpec::OwaApproval {
            m,
            approval_size,
            weights,
        })
    }

    /// Parses a CLI rule string: `sntv`, `borda`, `l1cc`, `bloc:<b>`,
    /// `owa:<m'>:<w1,...,wk>`. Case-insensitive.
    pub fn parse(text: &str, m: usize) -> Result<Self, RuleError> {
        let lower = text.trim().to_ascii_lowercase();
        let err = |msg: &str| RuleError::Parse(text.to_string(), msg.to_string());
        match lower.as_str() {
            "sntv" => return Ok(RuleSpec::sntv(m)),
            "borda" => return Ok(RuleSpec::borda(m)),
            "l1cc" => return Ok(RuleSpec::l1_cc(m)),
            _ => {}
        }
        if let Some(arg) = lower.strip_prefix("bloc:") {
            let b: usize = arg
                .parse()
                .map_err(|_| err("bloc size must be an integer"))?;
            return RuleSpec::bloc(m, b);
        }
        if let Some(rest) = lower.strip_prefix("owa:") {
            let (size_part, weights_part) = rest
                .split_once(':')
                .ok_or_else(|| err("expected owa:<m'>:<w1,...,wk>"))?;
            let approval_size: usize = size_part
                .parse()
                .map_err(|_| err("approval size must be an integer"))?;
            let weights = weights_part
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| err("weights must be decimals"))?;
            return RuleSpec::owa(m, approval_size, weights);
        }
        Err(err(
            "expected one of sntv, borda, l1cc, bloc:<b>, owa:<m'>:<w1,...,wk>",
        ))
    }

    /// Number of candidates the rule is defined for.
    pub fn m(&self) -> usize {
        match self {
            RuleSpec::SumPositional(s) | RuleSpec::MaxPositional(s) => s.len(),
            RuleSpec::OwaApproval { m, .. } => *m,
        }
    }

    /// Sum-positional rules are modular: marginals are context-free.
    pub fn is_modular(&self) -> bool {
        matches!(self, RuleSpec::SumPositional(_))
    }

    /// Per-voter committee score f(S, ≻).
    pub fn score(&self, committee: &[CandidateId], list: &PreferenceList) -> Result<f64, RuleError> {
        self.check_list(list)?;
        check_committee(committee, self.m())?;
        Ok(self.score_unchecked(committee, list))
    }

    pub(crate) fn score_unchecked(&self, committee: &[CandidateId], list: &PreferenceList) -> f64 {
        match self {
            RuleSpec::SumPositional(s) => committee
                .iter()
                .map(|c| s.at(position_of(list, *c)))
                .sum(),
            RuleSpec::MaxPositional(s) => committee
                .iter()
                .map(|c| s.at(position_of(list, *c)))
                .fold(0.0, f64::max),
            RuleSpec::OwaApproval {
                approval_size,
                weights,
                ..
            } => {
                let approved = committee
                    .iter()
                    .filter(|c| position_of(list, **c) <= *approval_size)
                    .count();
                weights.iter().take(approved).sum()
            }
        }
    }

    /// Marginal contribution f_S(c, ≻) = f(S ∪ {c}, ≻) − f(S, ≻).
    pub fn marginal(
        &self,
        committee: &[CandidateId],
        c: CandidateId,
        list: &PreferenceList,
    ) -> Result<f64, RuleError> {
        self.check_list(list)?;
        check_committee(committee, self.m())?;
        if c.0 >= self.m() {
            return Err(RuleError::CandidateOutOfRange(c.0, self.m()));
        }
        if committee.contains(&c) {
            return Err(RuleError::CandidateInCommittee(c.0));
        }
        Ok(self.marginal_unchecked(committee, c, list))
    }

    pub(crate) fn marginal_unchecked(
        &self,
        committee: &[CandidateId],
        c: CandidateId,
        list: &PreferenceList,
    ) -> f64 {
        match self {
            RuleSpec::SumPositional(s) => s.at(position_of(list, c)),
            RuleSpec::MaxPositional(s) => {
                let best = committee
                    .iter()
                    .map(|c| s.at(position_of(list, *c)))
                    .fold(0.0, f64::max);
                (s.at(position_of(list, c)) - best).max(0.0)
            }
            RuleSpec::OwaApproval {
                approval_size,
                weights,
                ..
            } => {
                if position_of(list, c) > *approval_size {
                    return 0.0;
                }
                let approved = committee
                    .iter()
                    .filter(|d| position_of(list, **d) <= *approval_size)
                    .count();
                weights.get(approved).copied().unwrap_or(0.0)
            }
        }
    }

    /// Profile score F(S) = Σ_v f(S, ≻_v).
    pub fn profile_score(
        &self,
        committee: &[CandidateId],
        profile: &Profile,
    ) -> Result<f64, RuleError> {
        self.check_profile(profile)?;
        check_committee(committee, self.m())?;
        Ok(profile
            .lists()
            .iter()
            .map(|list| self.score_unchecked(committee, list))
            .sum())
    }

    /// Profile marginal F_T(c) = F(T ∪ {c}) − F(T).
    pub fn profile_marginal(
        &self,
        committee: &[CandidateId],
        c: CandidateId,
        profile: &Profile,
    ) -> Result<f64, RuleError> {
        self.check_profile(profile)?;
        check_committee(committee, self.m())?;
        if c.0 >= self.m() {
            return Err(RuleError::CandidateOutOfRange(c.0, self.m()));
        }
        if committee.contains(&c) {
            return Err(RuleError::CandidateInCommittee(c.0));
        }
        Ok(profile
            .lists()
            .iter()
            .map(|list| self.marginal_unchecked(committee, c, list))
            .sum())
    }

    /// Tau and sigma diagnostics.
    ///
    /// Sigma is the minimum over admissible contexts of
    /// `(τ_ℓ + τ_{ℓ+2} − 2 τ_{ℓ+1}) / (τ_ℓ − τ_{ℓ+2})` with `τ_{m+1} = 0`
    /// and the convention `0/0 = 1`, where `τ_ℓ` is the marginal score of
    /// the rank-ℓ candidate. Sum-positional contexts collapse to the score
    /// vector itself; max-positional contexts are indexed by the best rank
    /// held by the context committee; OWA contexts by the approval overlap.
    pub fn diagnostics(&self) -> Result<RuleDiagnostics, RuleError> {
        let m = self.m();
        if m < 3 {
            return Err(RuleError::TooFewCandidates(m));
        }
        let (tau1, tau_min) = self.singleton_extremes()?;
        let sigma = match self {
            RuleSpec::SumPositional(s) => sigma_of_sequence(s.entries(), m),
            RuleSpec::MaxPositional(s) => {
                // Context = best rank b occupied by the committee; b = None is
                // the empty committee. Ranks ℓ..ℓ+2 must stay outside it.
                let mut sigma = f64::INFINITY;
                for b in std::iter::once(None).chain((1..=m).map(Some)) {
                    let tau = |rank: usize| -> f64 {
                        if rank > m {
                            return 0.0;
                        }
                        match b {
                            None => s.at(rank),
                            Some(b) => (s.at(rank) - s.at(b)).max(0.0),
                        }
                    };
                    for l in 1..=m - 1 {
                        if let Some(b) = b {
                            if b >= l && b <= l + 2 {
                                continue;
                            }
                        }
                        sigma = sigma.min(sigma_ratio(tau(l), tau(l + 1), tau(l + 2)));
                    }
                }
                sigma
            }
            RuleSpec::OwaApproval {
                approval_size,
                weights,
                ..
            } => {
                // Context = overlap a between the committee and the approval
                // set; ranks ℓ..ℓ+2 stay outside the committee, so at most
                // m' − q slots remain for the context, where q of the three
                // ranks fall inside the approval prefix.
                let mp = *approval_size;
                let weight = |a: usize| weights.get(a).copied().unwrap_or(0.0);
                let mut sigma = f64::INFINITY;
                for l in 1..=m - 1 {
                    let q = [l, l + 1, l + 2]
                        .iter()
                        .filter(|p| **p <= mp && **p <= m)
                        .count();
                    for a in 0..=mp.saturating_sub(q) {
                        let tau =
                            |rank: usize| if rank <= mp { weight(a) } else { 0.0 };
                        sigma = sigma.min(sigma_ratio(tau(l), tau(l + 1), tau(l + 2)));
                    }
                }
                sigma
            }
        };
        Ok(RuleDiagnostics {
            tau1,
            tau_min,
            sigma,
        })
    }

    fn singleton_extremes(&self) -> Result<(f64, f64), RuleError> {
        let singleton_values: Vec<f64> = match self {
            RuleSpec::SumPositional(s) | RuleSpec::MaxPositional(s) => s.entries().to_vec(),
            RuleSpec::OwaApproval { weights, .. } => vec![weights[0]],
        };
        let tau1 = singleton_values.iter().fold(0.0, |a: f64, b| a.max(*b));
        let tau_min = singleton_values
            .iter()
            .filter(|v| **v > 0.0)
            .fold(f64::INFINITY, |a, b| a.min(*b));
        if tau1 <= 0.0 {
            return Err(RuleError::DegenerateRule);
        }
        Ok((tau1, tau_min))
    }

    fn check_list(&self, list: &PreferenceList) -> Result<(), RuleError> {
        if list.m() != self.m() {
            return Err(RuleError::MismatchedCandidateCount(self.m(), list.m()));
        }
        Ok(())
    }

    fn check_profile(&self, profile: &Profile) -> Result<(), RuleError> {
        if profile.m() != self.m() {
            return Err(RuleError::MismatchedCandidateCount(self.m(), profile.m()));
        }
        Ok(())
    }
}

fn position_of(list: &PreferenceList, c: CandidateId) -> usize {
    list.position(c).expect("candidate validated against m")
}

fn check_committee(committee: &[CandidateId], m: usize) -> Result<(), RuleError> {
    let mut seen = vec![false; m];
    for c in committee {
        if c.0 >= m {
            return Err(RuleError::CandidateOutOfRange(c.0, m));
        }
        if seen[c.0] {
            return Err(RuleError::DuplicateCandidate(c.0));
        }
        seen[c.0] = true;
    }
    Ok(())
}

fn sigma_of_sequence(s: &[f64], m: usize) -> f64 {
    let at = |rank: usize| if rank > m { 0.0 } else { s[rank - 1] };
    (1..=m - 1)
        .map(|l| sigma_ratio(at(l), at(l + 1), at(l + 2)))
        .fold(f64::INFINITY, f64::min)
}

fn sigma_ratio(t0: f64, t1: f64, t2: f64) -> f64 {
    let num = t0 + t2 - 2.0 * t1;
    let den = t0 - t2;
    if den == 0.0 {
        // Non-increasing sequences only reach this with num == 0.
        1.0
    } else {
        num / den
    }
}

/// Mean singleton score of every candidate over a profile:
/// `(1/n) Σ_v f({c}, ≻_v)` for each `c`.
pub fn singleton_means(rule: &RuleSpec, profile: &Profile) -> Result<Vec<f64>, RuleError> {
    if profile.m() != rule.m() {
        return Err(RuleError::MismatchedCandidateCount(rule.m(), profile.m()));
    }
    let m = profile.m();
    let n = profile.n() as f64;
    let mut sums = vec![0.0; m];
    for list in profile.lists() {
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum += rule.score_unchecked(&[CandidateId(c)], list);
        }
    }
    for s in &mut sums {
        *s /= n;
    }
    Ok(sums)
}
