//! Monte Carlo estimation of how well a score function survives bias:
//! marginal-mean tables over a configured context family, the alpha and
//! gamma(beta) estimators with Hoeffding half-widths, order-preservation
//! audits, the sufficient-voter-count formula, and the impossibility-side
//! quantities.
//!
//! Quantification over all committees is exponential, so every estimate is
//! relative to the table's context family: the empty set, prefixes of the
//! top-k set, every full complement C\{c}, and a configurable number of
//! random (k-1)-subsets. These are exactly the contexts the constrained
//! greedy trajectory and the alpha definition exercise.

use crate::genmodels::{sample_pair, BiasModel, GenError, LatentModel};
use crate::preferences::{CandidateId, GroupPartition, PreferenceError};
use crate::scoring::{RuleError, RuleSpec};
use crate::selection::ell_from_top_k;
use crate::stream::TrialStream;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmoothnessError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

/// Default beta grid for gamma estimation.
pub const DEFAULT_BETA_GRID: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

/// Knobs for the context and candidate-pair families of a table.
#[derive(Debug, Clone)]
pub struct TableOptions {
    /// Number of uniformly random (k-1)-subsets added to the family.
    pub random_contexts: usize,
    /// Enumerate all same-group ordered pairs up to this many candidates.
    pub pair_enumeration_limit: usize,
    /// Number of pairs sampled beyond the enumeration limit.
    pub sampled_pairs: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            random_contexts: 20,
            pair_enumeration_limit: 20,
            sampled_pairs: 400,
        }
    }
}

/// Empirical mean marginals under the latent and biased models, per
/// (context set, candidate) cell. Cells whose candidate belongs to the
/// context hold NaN.
#[derive(Debug, Clone)]
pub struct MarginalMeanTable {
    pub m: usize,
    pub k: usize,
    pub samples: usize,
    pub tau1: f64,
    /// Context sets, each sorted ascending.
    pub contexts: Vec<Vec<CandidateId>>,
    pub means_latent: Vec<Vec<f64>>,
    pub means_biased: Vec<Vec<f64>>,
    /// Ordered same-group candidate pairs the gamma/audit passes range over.
    pub pairs: Vec<(CandidateId, CandidateId)>,
}

impl MarginalMeanTable {
    /// Index of the empty context.
    pub fn empty_context(&self) -> Option<usize> {
        self.contexts.iter().position(|ctx| ctx.is_empty())
    }

    /// Index of the context C\{c}.
    pub fn full_minus_context(&self, c: CandidateId) -> Option<usize> {
        self.contexts
            .iter()
            .position(|ctx| ctx.len() == self.m - 1 && !ctx.contains(&c))
    }

    /// Latent singleton means, read off the empty context.
    pub fn latent_singleton_means(&self) -> Option<&[f64]> {
        self.empty_context().map(|i| self.means_latent[i].as_slice())
    }

    fn check_shape(&self) -> Result<(), SmoothnessError> {
        if self.means_latent.len() != self.contexts.len()
            || self.means_biased.len() != self.contexts.len()
            || self
                .means_latent
                .iter()
                .chain(self.means_biased.iter())
                .any(|row| row.len() != self.m)
        {
            return Err(SmoothnessError::Input(
                "table rows do not match the context family".into(),
            ));
        }
        Ok(())
    }
}

/// Estimates the per-voter mean marginals of `rule` under paired draws
/// from the latent and biased models, over the configured context family.
#[allow(clippy::too_many_arguments)]
pub fn estimate_marginal_means(
    latent: &LatentModel,
    bias: &BiasModel,
    rule: &RuleSpec,
    m: usize,
    k: usize,
    g: &GroupPartition,
    samples: usize,
    stream: &TrialStream,
    options: &TableOptions,
) -> Result<MarginalMeanTable, SmoothnessError> {
    if samples == 0 {
        return Err(SmoothnessError::Input("samples must be at least 1".into()));
    }
    if k == 0 || k > m {
        return Err(SmoothnessError::Input(format!(
            "k must lie in [1, {m}], got {k}"
        )));
    }
    let tau1 = rule.diagnostics()?.tau1;
    let (latent_profile, biased_profile) = sample_pair(latent, bias, g, samples, m, stream)?;

    // The top set that seeds the prefix contexts comes from the same draw's
    // singleton means, so one sampling run serves both passes.
    let mut singleton_sums = vec![0.0; m];
    for list in latent_profile.lists() {
        for (c, sum) in singleton_sums.iter_mut().enumerate() {
            *sum += rule.marginal(&[], CandidateId(c), list)?;
        }
    }
    let singleton_means: Vec<f64> = singleton_sums.iter().map(|s| s / samples as f64).collect();
    let (top, _) = ell_from_top_k(&singleton_means, k, g);

    let mut trial_rng = stream.trial_rng();
    let contexts = build_context_family(m, k, &top, options, &mut trial_rng);
    let pairs = build_pair_family(g, options, &mut trial_rng);

    let membership: Vec<Vec<bool>> = contexts
        .iter()
        .map(|ctx| {
            let mut in_ctx = vec![false; m];
            for c in ctx {
                in_ctx[c.0] = true;
            }
            in_ctx
        })
        .collect();

    let mut sums_latent = vec![vec![0.0; m]; contexts.len()];
    let mut sums_biased = vec![vec![0.0; m]; contexts.len()];
    for voter in 0..samples {
        let latent_list = &latent_profile.lists()[voter];
        let biased_list = &biased_profile.lists()[voter];
        for (ci, ctx) in contexts.iter().enumerate() {
            for (c, in_ctx) in membership[ci].iter().enumerate() {
                if *in_ctx {
                    continue;
                }
                let c = CandidateId(c);
                sums_latent[ci][c.0] += rule.marginal(ctx, c, latent_list)?;
                sums_biased[ci][c.0] += rule.marginal(ctx, c, biased_list)?;
            }
        }
    }
    let finalize = |sums: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        sums.into_iter()
            .enumerate()
            .map(|(ci, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(c, s)| {
                        if membership[ci][c] {
                            f64::NAN
                        } else {
                            s / samples as f64
                        }
                    })
                    .collect()
            })
            .collect()
    };
    Ok(MarginalMeanTable {
        m,
        k,
        samples,
        tau1,
        contexts,
        means_latent: finalize(sums_latent),
        means_biased: finalize(sums_biased),
        pairs,
    })
}

fn build_context_family<R: Rng>(
    m: usize,
    k: usize,
    top: &[CandidateId],
    options: &TableOptions,
    rng: &mut R,
) -> Vec<Vec<CandidateId>> {
    let mut contexts: Vec<Vec<CandidateId>> = Vec::new();
    let mut seen: BTreeSet<Vec<CandidateId>> = BTreeSet::new();
    let mut push = |ctx: Vec<CandidateId>, contexts: &mut Vec<Vec<CandidateId>>| {
        let mut sorted = ctx;
        sorted.sort_unstable();
        if seen.insert(sorted.clone()) {
            contexts.push(sorted);
        }
    };
    push(Vec::new(), &mut contexts);
    for len in 1..k {
        push(top[..len].to_vec(), &mut contexts);
    }
    for c in 0..m {
        push(
            (0..m).filter(|i| *i != c).map(CandidateId).collect(),
            &mut contexts,
        );
    }
    if k >= 2 {
        let all: Vec<CandidateId> = (0..m).map(CandidateId).collect();
        for _ in 0..options.random_contexts {
            let subset: Vec<CandidateId> = all
                .choose_multiple(rng, k - 1)
                .copied()
                .collect();
            push(subset, &mut contexts);
        }
    }
    contexts
}

fn build_pair_family<R: Rng>(
    g: &GroupPartition,
    options: &TableOptions,
    rng: &mut R,
) -> Vec<(CandidateId, CandidateId)> {
    let mut pairs = Vec::new();
    for group in [g.advantaged(), g.disadvantaged()] {
        for &a in &group {
            for &b in &group {
                if a != b {
                    pairs.push((a, b));
                }
            }
        }
    }
    if g.len() > options.pair_enumeration_limit && pairs.len() > options.sampled_pairs {
        pairs = pairs
            .choose_multiple(rng, options.sampled_pairs)
            .copied()
            .collect();
        pairs.sort_unstable();
    }
    pairs
}

/// The alpha estimate together with its context.
#[derive(Debug, Clone)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub half_width: f64,
    /// Top-k candidates by latent singleton mean.
    pub top_set: Vec<CandidateId>,
    /// |top ∩ G2|, the constraint level the estimate certifies.
    pub ell: usize,
}

/// Estimates alpha: the smallest normalized mean marginal of a top-k
/// candidate against the full remaining field, under both the latent and
/// the biased model. The half-width is on the same normalized scale.
pub fn estimate_alpha(
    table: &MarginalMeanTable,
    k: usize,
    g: &GroupPartition,
    delta: f64,
) -> Result<AlphaEstimate, SmoothnessError> {
    table.check_shape()?;
    let singleton = table
        .latent_singleton_means()
        .ok_or_else(|| SmoothnessError::Input("table lacks the empty context".into()))?;
    let (top, ell) = ell_from_top_k(singleton, k, g);
    if top.is_empty() {
        return Err(SmoothnessError::Input("top-k set is empty".into()));
    }
    let mut worst = f64::INFINITY;
    for &c in &top {
        let ctx = table.full_minus_context(c).ok_or_else(|| {
            SmoothnessError::Input(format!("table lacks the context C\\{{{c}}}"))
        })?;
        worst = worst
            .min(table.means_latent[ctx][c.0])
            .min(table.means_biased[ctx][c.0]);
    }
    let half_width =
        hoeffding_halfwidth(table.samples, k, table.m, delta, table.tau1)? / table.tau1;
    Ok(AlphaEstimate {
        alpha: worst / table.tau1,
        half_width,
        top_set: top,
        ell,
    })
}

/// Smallest gamma consistent with the table at level beta: the largest
/// biased-mean ratio over same-group pairs whose latent means are at least
/// a factor beta apart, clamped to [0, 1]. Returns 0 when no pair
/// qualifies. Latent positivity is required to exceed one Hoeffding
/// half-width so that noise-level cells cannot qualify.
pub fn gamma_for_beta(
    table: &MarginalMeanTable,
    beta: f64,
    delta: f64,
) -> Result<f64, SmoothnessError> {
    table.check_shape()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(SmoothnessError::Input(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    let positivity = hoeffding_halfwidth(table.samples, table.k, table.m, delta, table.tau1)?;
    let mut gamma: f64 = 0.0;
    for &(c, c_prime) in &table.pairs {
        for (ci, ctx) in table.contexts.iter().enumerate() {
            if ctx.contains(&c) || ctx.contains(&c_prime) {
                continue;
            }
            let lat_c = table.means_latent[ci][c.0];
            let lat_cp = table.means_latent[ci][c_prime.0];
            if !(lat_c > positivity && beta * lat_cp >= lat_c) {
                continue;
            }
            let biased_c = table.means_biased[ci][c.0];
            let biased_cp = table.means_biased[ci][c_prime.0];
            let ratio = if biased_c <= 0.0 {
                0.0
            } else if biased_cp <= 0.0 {
                1.0
            } else {
                (biased_c / biased_cp).min(1.0)
            };
            gamma = gamma.max(ratio);
        }
    }
    Ok(gamma)
}

/// Which half of the latent order-preservation definition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolatedCondition {
    /// A weaker candidate out-scored a stronger same-group candidate in
    /// some context.
    MarginalOrder,
    /// The marginal gap between two same-group candidates grew when the
    /// context grew.
    DifferenceMonotonicity,
}

#[derive(Debug, Clone)]
pub struct OrderViolation {
    pub c: CandidateId,
    pub c_prime: CandidateId,
    pub context: Vec<CandidateId>,
    /// The inner set of the nested pair, for difference-monotonicity.
    pub inner_context: Option<Vec<CandidateId>>,
    pub latent_means: (f64, f64),
    pub biased_means: (f64, f64),
    pub condition: ViolatedCondition,
}

#[derive(Debug, Clone, Default)]
pub struct OrderViolationReport {
    pub violations: Vec<OrderViolation>,
}

impl OrderViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits latent order preservation over the table's pair and context
/// families: same-group pairs ordered by singleton mean must keep that
/// order in every context, with non-increasing gaps as contexts grow.
/// `slack` defaults to twice the Hoeffding half-width.
pub fn audit_latent_order_preservation(
    table: &MarginalMeanTable,
    slack: Option<f64>,
    delta: f64,
) -> Result<OrderViolationReport, SmoothnessError> {
    table.check_shape()?;
    let slack = match slack {
        Some(s) => s,
        None => 2.0 * hoeffding_halfwidth(table.samples, table.k, table.m, delta, table.tau1)?,
    };
    let singleton = table
        .latent_singleton_means()
        .ok_or_else(|| SmoothnessError::Input("table lacks the empty context".into()))?
        .to_vec();

    // Precompute the nested pairs of the family (inner strictly contained
    // in outer).
    let mut nested: Vec<(usize, usize)> = Vec::new();
    for (outer, outer_ctx) in table.contexts.iter().enumerate() {
        for (inner, inner_ctx) in table.contexts.iter().enumerate() {
            if inner != outer
                && inner_ctx.len() <= outer_ctx.len()
                && is_subset(inner_ctx, outer_ctx)
            {
                nested.push((outer, inner));
            }
        }
    }

    let mut report = OrderViolationReport::default();
    for &(weak, strong) in &table.pairs {
        // Only the direction ordered by singleton means is constrained.
        if singleton[weak.0] > singleton[strong.0] {
            continue;
        }
        let excluded = |ctx: &[CandidateId]| ctx.contains(&weak) || ctx.contains(&strong);
        for (ci, ctx) in table.contexts.iter().enumerate() {
            if excluded(ctx) {
                continue;
            }
            let lat = (table.means_latent[ci][weak.0], table.means_latent[ci][strong.0]);
            if lat.0 > lat.1 + slack {
                report.violations.push(OrderViolation {
                    c: weak,
                    c_prime: strong,
                    context: ctx.clone(),
                    inner_context: None,
                    latent_means: lat,
                    biased_means: (
                        table.means_biased[ci][weak.0],
                        table.means_biased[ci][strong.0],
                    ),
                    condition: ViolatedCondition::MarginalOrder,
                });
            }
        }
        for &(outer, inner) in &nested {
            if excluded(&table.contexts[outer]) || excluded(&table.contexts[inner]) {
                continue;
            }
            let gap_outer =
                table.means_latent[outer][strong.0] - table.means_latent[outer][weak.0];
            let gap_inner =
                table.means_latent[inner][strong.0] - table.means_latent[inner][weak.0];
            if gap_outer > gap_inner + slack {
                report.violations.push(OrderViolation {
                    c: weak,
                    c_prime: strong,
                    context: table.contexts[outer].clone(),
                    inner_context: Some(table.contexts[inner].clone()),
                    latent_means: (
                        table.means_latent[outer][weak.0],
                        table.means_latent[outer][strong.0],
                    ),
                    biased_means: (
                        table.means_biased[outer][weak.0],
                        table.means_biased[outer][strong.0],
                    ),
                    condition: ViolatedCondition::DifferenceMonotonicity,
                });
            }
        }
    }
    Ok(report)
}

fn is_subset(inner: &[CandidateId], outer: &[CandidateId]) -> bool {
    // Both sorted ascending.
    let mut it = outer.iter();
    inner.iter().all(|c| it.by_ref().any(|o| o == c))
}

/// Per-voter-mean Hoeffding half-width `tau * sqrt(k * ln(m/delta) / n)`.
pub fn hoeffding_halfwidth(
    n: usize,
    k: usize,
    m: usize,
    delta: f64,
    tau: f64,
) -> Result<f64, SmoothnessError> {
    if n < 1 || k < 1 || m < 2 {
        return Err(SmoothnessError::Input(format!(
            "need n >= 1, k >= 1, m >= 2; got n={n}, k={k}, m={m}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SmoothnessError::Input(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(SmoothnessError::Input(format!(
            "tau must be positive, got {tau}"
        )));
    }
    Ok(tau * (k as f64 * (m as f64 / delta).ln() / n as f64).sqrt())
}

/// Sufficient voter count `16k / (alpha * min(eps, 1-gamma))^2 * ln(m/delta)`.
/// Unbounded (infinity) when alpha is 0 or gamma is 1.
pub fn voters_required(
    k: usize,
    m: usize,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
) -> Result<f64, SmoothnessError> {
    if k < 1 || m < 2 {
        return Err(SmoothnessError::Input(format!(
            "need k >= 1 and m >= 2; got k={k}, m={m}"
        )));
    }
    for (name, value, lo, hi) in [
        ("alpha", alpha, 0.0, 1.0),
        ("gamma", gamma, 0.0, 1.0),
    ] {
        if !(lo..=hi).contains(&value) {
            return Err(SmoothnessError::Input(format!(
                "{name} must lie in [{lo}, {hi}], got {value}"
            )));
        }
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(SmoothnessError::Input(
            "epsilon and delta must lie in (0, 1)".into(),
        ));
    }
    if alpha == 0.0 || gamma == 1.0 {
        return Ok(f64::INFINITY);
    }
    let denom = alpha * epsilon.min(1.0 - gamma);
    Ok(16.0 * k as f64 / (denom * denom) * (m as f64 / delta).ln())
}

/// The quantities behind the too-few-voters regime: the largest biased
/// expected singleton score in the disadvantaged group (zeta), the
/// smallest positive singleton score of the rule (tau_min), and the voter
/// threshold tau_min / (m * zeta).
#[derive(Debug, Clone)]
pub struct ImpossibilityReport {
    pub zeta: f64,
    pub tau_min: f64,
    pub n_threshold: f64,
    /// Whether zeta < tau_min, the regime where the threshold bites.
    pub precondition_holds: bool,
}

pub fn impossibility_quantities(
    latent: &LatentModel,
    bias: &BiasModel,
    rule: &RuleSpec,
    m: usize,
    g: &GroupPartition,
    samples: usize,
    stream: &TrialStream,
) -> Result<ImpossibilityReport, SmoothnessError> {
    if samples == 0 {
        return Err(SmoothnessError::Input("samples must be at least 1".into()));
    }
    let disadvantaged = g.disadvantaged();
    if disadvantaged.is_empty() {
        return Err(SmoothnessError::Input(
            "impossibility quantities need a non-empty disadvantaged group".into(),
        ));
    }
    let (_, biased_profile) = sample_pair(latent, bias, g, samples, m, stream)?;
    let mut zeta: f64 = 0.0;
    for &c in &disadvantaged {
        let mut sum = 0.0;
        for list in biased_profile.lists() {
            sum += rule.marginal(&[], c, list)?;
        }
        zeta = zeta.max(sum / samples as f64);
    }
    let diag = rule.diagnostics()?;
    let n_threshold = if zeta > 0.0 {
        diag.tau_min / (m as f64 * zeta)
    } else {
        f64::INFINITY
    };
    Ok(ImpossibilityReport {
        zeta,
        tau_min: diag.tau_min,
        n_threshold,
        precondition_holds: zeta < diag.tau_min,
    })
}

/// The assembled smoothness estimate for one (rule, latent, bias) triple.
#[derive(Debug, Clone)]
pub struct SmoothnessEstimate {
    pub alpha: f64,
    pub alpha_half_width: f64,
    pub gamma_of_beta: Vec<(f64, f64)>,
    pub top_set: Vec<CandidateId>,
    pub ell: usize,
    pub samples: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_smoothness(
    latent: &LatentModel,
    bias: &BiasModel,
    rule: &RuleSpec,
    m: usize,
    k: usize,
    g: &GroupPartition,
    samples: usize,
    beta_grid: &[f64],
    delta: f64,
    stream: &TrialStream,
    options: &TableOptions,
) -> Result<SmoothnessEstimate, SmoothnessError> {
    let table = estimate_marginal_means(latent, bias, rule, m, k, g, samples, stream, options)?;
    let alpha = estimate_alpha(&table, k, g, delta)?;
    let mut gamma_of_beta = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        gamma_of_beta.push((beta, gamma_for_beta(&table, beta, delta)?));
    }
    Ok(SmoothnessEstimate {
        alpha: alpha.alpha,
        alpha_half_width: alpha.half_width,
        gamma_of_beta,
        top_set: alpha.top_set,
        ell: alpha.ell,
        samples,
    })
}
