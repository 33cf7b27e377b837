//! Config-driven experiment harness: recovered-fraction sweeps under the
//! swapping bias, the r_ell contribution measure, voter-count scaling
//! probes, and smoothness estimation, all emitting sorted CSV rows.
//!
//! Determinism contract: every random draw is addressed by
//! (seed, trial, voter), trials run in parallel, and rows are sorted
//! before writing, so a (config, seed) pair maps to byte-identical output.

pub mod config;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};

use crate::genmodels::{
    apply_bias, sample_latent_profile, BiasModel, GenError, LatentModel, SwapBudget,
};
use crate::preferences::{CandidateId, GroupPartition, PreferenceError, PreferenceList, Profile};
use crate::scoring::{RuleError, RuleSpec};
use crate::selection::{
    brute_force_best, constrained_greedy, ell_from_top_k, greedy, subset_count, SelectionError,
};
use crate::smoothness::{estimate_smoothness, SmoothnessError, TableOptions};
use crate::stream::TrialStream;
use itertools::Itertools;
use output::{format_significant, render_line_chart, write_csv, Series};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource guard: {0}")]
    Resource(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Smoothness(#[from] SmoothnessError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

/// How the latent optimum behind a recovered fraction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    /// Modular rule: exact sum of the k best singleton totals.
    ExactTopK,
    /// Exhaustive enumeration (small instances).
    BruteForce,
    /// Unconstrained greedy value; a lower bound on the optimum, flagged.
    GreedyBound,
    /// The constraint was infeasible for this trial; no fraction.
    Infeasible,
}

impl OptMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptMethod::ExactTopK => "exact_topk",
            OptMethod::BruteForce => "brute_force",
            OptMethod::GreedyBound => "greedy_bound",
            OptMethod::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryRow {
    pub rule: String,
    pub latent_model: String,
    pub n: usize,
    pub lambda: f64,
    pub trial: usize,
    pub recovered_fraction: Option<f64>,
    pub ell: usize,
    pub opt_method: OptMethod,
}

#[derive(Debug, Clone)]
pub struct RellRow {
    pub ell: usize,
    pub r_ell_estimate: Option<f64>,
    /// Trials in which the level was feasible and contributed.
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub rule: String,
    pub theta: f64,
    /// Smallest probed voter count reaching 1 - epsilon mean recovery;
    /// none when the range was exhausted.
    pub n_star: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SmoothnessRow {
    pub rule: String,
    pub latent_model: String,
    pub bias_model: String,
    pub m: usize,
    pub k: usize,
    pub samples: usize,
    pub alpha: f64,
    pub alpha_halfwidth: f64,
    pub beta: f64,
    pub gamma: f64,
    pub ell: usize,
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<(), ExperimentError> {
    if config.kind != kind {
        return Err(ExperimentError::Config(format!(
            "config describes a {} experiment, expected {}",
            config.kind.as_str(),
            kind.as_str()
        )));
    }
    config.validate()
}

fn parse_rules(config: &ExperimentConfig) -> Result<Vec<(String, RuleSpec)>, ExperimentError> {
    config
        .rules
        .iter()
        .map(|name| Ok((name.clone(), RuleSpec::parse(name, config.m)?)))
        .collect()
}

/// Uniform partition with ⌊m/2⌋ disadvantaged candidates.
fn random_equal_partition<R: Rng>(m: usize, rng: &mut R) -> GroupPartition {
    let mut ids: Vec<usize> = (0..m).collect();
    ids.shuffle(rng);
    GroupPartition::from_disadvantaged(m, &ids[..m / 2]).expect("indices in range")
}

fn singleton_totals(rule: &RuleSpec, profile: &Profile) -> Result<Vec<f64>, ExperimentError> {
    (0..profile.m())
        .map(|c| Ok(rule.profile_score(&[CandidateId(c)], profile)?))
        .collect()
}

const BRUTE_FORCE_OPT_GUARD: u64 = 10_000_000;

/// Latent optimum per the method hierarchy: exact top-k for modular rules,
/// brute force while the subset count is small, otherwise the greedy value
/// flagged as a bound.
fn latent_opt(
    rule: &RuleSpec,
    profile: &Profile,
    k: usize,
) -> Result<(f64, OptMethod), ExperimentError> {
    if rule.is_modular() {
        let mut totals = singleton_totals(rule, profile)?;
        totals.sort_by(|a, b| b.total_cmp(a));
        return Ok((totals[..k].iter().sum(), OptMethod::ExactTopK));
    }
    if subset_count(profile.m(), k) <= BRUTE_FORCE_OPT_GUARD {
        let (_, value) = brute_force_best(profile, rule, k, None, None)?;
        return Ok((value, OptMethod::BruteForce));
    }
    let committee = greedy(
        |s, c| rule.profile_marginal(s, c, profile),
        &(0..profile.m()).map(CandidateId).collect::<Vec<_>>(),
        k,
        &[],
    )?;
    let value = rule.profile_score(committee.members(), profile)?;
    Ok((value, OptMethod::GreedyBound))
}

/// Recovered-fraction sweep: per (rule, n, lambda, trial), bias the trial's
/// latent profile with the swapping model at swap fraction lambda, select
/// with the constrained greedy, and score the selection against the latent
/// optimum.
pub fn run_recovery(config: &ExperimentConfig) -> Result<Vec<RecoveryRow>, ExperimentError> {
    expect_kind(config, ExperimentKind::Recovery)?;
    let latent = LatentModel::parse(&config.latent, config.m)?;
    let rules = parse_rules(config)?;
    let max_n = *config.n_grid.iter().max().expect("validated non-empty");

    let per_trial: Vec<Vec<RecoveryRow>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| recovery_trial(config, &latent, &rules, trial, max_n))
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<RecoveryRow> = per_trial.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.rule
            .cmp(&b.rule)
            .then(a.n.cmp(&b.n))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

fn recovery_trial(
    config: &ExperimentConfig,
    latent: &LatentModel,
    rules: &[(String, RuleSpec)],
    trial: usize,
    max_n: usize,
) -> Result<Vec<RecoveryRow>, ExperimentError> {
    let m = config.m;
    let k = config.k;
    let stream = TrialStream::new(config.seed, trial as u32);
    let g = random_equal_partition(m, &mut stream.trial_rng());
    let samples = sample_latent_profile(latent, m, max_n, &stream)?;

    // Latent profiles and per-rule (ell, opt) are lambda-independent.
    let mut latent_profiles = Vec::with_capacity(config.n_grid.len());
    let mut per_rule: Vec<Vec<(usize, f64, OptMethod)>> = vec![Vec::new(); rules.len()];
    for &n in &config.n_grid {
        let profile = Profile::new(samples[..n].iter().map(|s| s.list.clone()).collect())?;
        for (ri, (_, rule)) in rules.iter().enumerate() {
            let totals = singleton_totals(rule, &profile)?;
            let (_, ell) = ell_from_top_k(&totals, k, &g);
            let (opt, method) = latent_opt(rule, &profile, k)?;
            per_rule[ri].push((ell, opt, method));
        }
        latent_profiles.push(profile);
    }

    let mut rows = Vec::new();
    for &lambda in &config.lambda_grid {
        let bias = BiasModel::Swapping {
            phi: config.phi,
            budget: SwapBudget::FractionOfMax(lambda),
        };
        let biased_all: Vec<PreferenceList> = (0..max_n)
            .map(|v| {
                let streams = stream.voter((v + 1) as u32);
                apply_bias(
                    &bias,
                    &samples[v],
                    &g,
                    &mut streams.bias(),
                    &mut streams.mixture_coin(),
                )
            })
            .collect::<Result<_, _>>()?;
        for (n_idx, &n) in config.n_grid.iter().enumerate() {
            let biased_profile = Profile::new(biased_all[..n].to_vec())?;
            for (ri, (rule_name, rule)) in rules.iter().enumerate() {
                let (ell, opt, method) = per_rule[ri][n_idx];
                let row = match constrained_greedy(&biased_profile, rule, k, ell, &g) {
                    Ok(committee) => {
                        let latent_value =
                            rule.profile_score(committee.members(), &latent_profiles[n_idx])?;
                        let fraction = if opt > 0.0 { latent_value / opt } else { 1.0 };
                        RecoveryRow {
                            rule: rule_name.clone(),
                            latent_model: config.latent.clone(),
                            n,
                            lambda,
                            trial,
                            recovered_fraction: Some(fraction),
                            ell,
                            opt_method: method,
                        }
                    }
                    Err(SelectionError::Infeasible { .. }) => RecoveryRow {
                        rule: rule_name.clone(),
                        latent_model: config.latent.clone(),
                        n,
                        lambda,
                        trial,
                        recovered_fraction: None,
                        ell,
                        opt_method: OptMethod::Infeasible,
                    },
                    Err(other) => return Err(other.into()),
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Expected best fraction of the optimum achievable with exactly ell
/// disadvantaged seats once the optimum's disadvantaged members are off
/// the table. Brute force; guarded.
pub fn run_r_ell(config: &ExperimentConfig) -> Result<Vec<RellRow>, ExperimentError> {
    expect_kind(config, ExperimentKind::REll)?;
    if config.m > config.max_m {
        return Err(ExperimentError::Resource(format!(
            "r_ell enumerates all committees; m = {} exceeds the limit of {}",
            config.m, config.max_m
        )));
    }
    if subset_count(config.m, config.k) > BRUTE_FORCE_OPT_GUARD {
        return Err(ExperimentError::Resource(format!(
            "C({}, {}) committees exceed the enumeration guard",
            config.m, config.k
        )));
    }
    let latent = LatentModel::parse(&config.latent, config.m)?;
    let (_, rule) = parse_rules(config)?.remove(0);
    let n = config.n_grid[0];
    let k = config.k;
    let ells: Vec<usize> = config
        .ell_grid
        .clone()
        .unwrap_or_else(|| (0..=k).collect());

    // Per trial, the best score ratio per exact disadvantaged count.
    let per_trial: Vec<Vec<Option<f64>>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<Option<f64>>, ExperimentError> {
            let stream = TrialStream::new(config.seed, trial as u32);
            let g = random_equal_partition(config.m, &mut stream.trial_rng());
            let samples = sample_latent_profile(&latent, config.m, n, &stream)?;
            let profile = Profile::new(samples.into_iter().map(|s| s.list).collect())?;
            let (s_star, opt) = brute_force_best(&profile, &rule, k, None, None)?;
            if opt <= 0.0 {
                return Ok(vec![None; k + 1]);
            }
            let excluded: Vec<CandidateId> = s_star
                .members()
                .iter()
                .copied()
                .filter(|c| g.is_disadvantaged(*c))
                .collect();
            let allowed: Vec<CandidateId> = (0..config.m)
                .map(CandidateId)
                .filter(|c| !excluded.contains(c))
                .collect();
            let mut best_by_count: Vec<Option<f64>> = vec![None; k + 1];
            if allowed.len() >= k {
                for subset in allowed.iter().copied().combinations(k) {
                    let count = subset.iter().filter(|c| g.is_disadvantaged(**c)).count();
                    let score = rule.profile_score(&subset, &profile)?;
                    let slot = &mut best_by_count[count];
                    if slot.is_none_or(|s| score > s) {
                        *slot = Some(score);
                    }
                }
            }
            Ok(best_by_count
                .into_iter()
                .map(|b| b.map(|s| s / opt))
                .collect())
        })
        .collect::<Result<_, _>>()?;

    let rows = ells
        .iter()
        .map(|&ell| {
            let values: Vec<f64> = per_trial.iter().filter_map(|t| t[ell]).collect();
            RellRow {
                ell,
                r_ell_estimate: if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                },
                trials: values.len(),
            }
        })
        .collect();
    Ok(rows)
}

/// Doubling probe per (rule, theta): the smallest voter count on the
/// lattice n_min, 2 n_min, ... <= n_max whose mean recovered fraction
/// reaches 1 - epsilon.
pub fn run_scaling(config: &ExperimentConfig) -> Result<Vec<ScalingRow>, ExperimentError> {
    expect_kind(config, ExperimentKind::Scaling)?;
    let latent = LatentModel::parse(&config.latent, config.m)?;
    if !matches!(latent, LatentModel::UtilityBased { .. }) {
        return Err(ExperimentError::Config(
            "scaling requires a utility-based latent model".into(),
        ));
    }
    let rules = parse_rules(config)?;
    let (n_min, n_max) = (config.n_min.unwrap(), config.n_max.unwrap());
    let mut lattice = Vec::new();
    let mut n = n_min;
    while n <= n_max {
        lattice.push(n);
        match n.checked_mul(2) {
            Some(next) => n = next,
            None => break,
        }
    }

    let mut rows = Vec::new();
    for (rule_name, rule) in &rules {
        for &theta in &config.theta_grid {
            let bias = BiasModel::UtilityTheta { theta };
            let mut n_star = None;
            for &n in &lattice {
                let fractions: Vec<f64> = (0..config.trials)
                    .into_par_iter()
                    .map(|trial| scaling_fraction(config, &latent, &bias, rule, n, trial))
                    .collect::<Result<_, _>>()?;
                let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
                if mean >= 1.0 - config.epsilon {
                    n_star = Some(n);
                    break;
                }
            }
            rows.push(ScalingRow {
                rule: rule_name.clone(),
                theta,
                n_star,
            });
        }
    }
    rows.sort_by(|a, b| a.rule.cmp(&b.rule).then(a.theta.total_cmp(&b.theta)));
    Ok(rows)
}

fn scaling_fraction(
    config: &ExperimentConfig,
    latent: &LatentModel,
    bias: &BiasModel,
    rule: &RuleSpec,
    n: usize,
    trial: usize,
) -> Result<f64, ExperimentError> {
    let m = config.m;
    let k = config.k;
    let stream = TrialStream::new(config.seed, trial as u32);
    let g = random_equal_partition(m, &mut stream.trial_rng());
    let samples = sample_latent_profile(latent, m, n, &stream)?;
    let latent_profile = Profile::new(samples.iter().map(|s| s.list.clone()).collect())?;
    let biased_lists: Vec<PreferenceList> = samples
        .iter()
        .enumerate()
        .map(|(v, sample)| {
            let streams = stream.voter((v + 1) as u32);
            apply_bias(
                bias,
                sample,
                &g,
                &mut streams.bias(),
                &mut streams.mixture_coin(),
            )
        })
        .collect::<Result<_, _>>()?;
    let biased_profile = Profile::new(biased_lists)?;
    let totals = singleton_totals(rule, &latent_profile)?;
    let (_, ell) = ell_from_top_k(&totals, k, &g);
    let (opt, _) = latent_opt(rule, &latent_profile, k)?;
    match constrained_greedy(&biased_profile, rule, k, ell, &g) {
        Ok(committee) => {
            let value = rule.profile_score(committee.members(), &latent_profile)?;
            Ok(if opt > 0.0 { value / opt } else { 1.0 })
        }
        Err(SelectionError::Infeasible { .. }) => Ok(0.0),
        Err(other) => Err(other.into()),
    }
}

/// Smoothness estimation per rule over a shared draw; one row per beta
/// grid point.
pub fn run_smoothness(config: &ExperimentConfig) -> Result<Vec<SmoothnessRow>, ExperimentError> {
    expect_kind(config, ExperimentKind::Smoothness)?;
    let latent = LatentModel::parse(&config.latent, config.m)?;
    let bias_text = config.bias.clone().expect("validated");
    let bias = BiasModel::parse(&bias_text)?;
    let rules = parse_rules(config)?;
    let options = TableOptions {
        random_contexts: config.random_contexts,
        ..TableOptions::default()
    };
    // Trial 0 fixes the partition; trial 1 feeds the estimator, so the two
    // never share a stream.
    let g = random_equal_partition(config.m, &mut TrialStream::new(config.seed, 0).trial_rng());
    let estimation_stream = TrialStream::new(config.seed, 1);

    let mut rows = Vec::new();
    for (rule_name, rule) in &rules {
        let estimate = estimate_smoothness(
            &latent,
            &bias,
            rule,
            config.m,
            config.k,
            &g,
            config.samples,
            &config.beta_grid,
            config.delta,
            &estimation_stream,
            &options,
        )?;
        for &(beta, gamma) in &estimate.gamma_of_beta {
            rows.push(SmoothnessRow {
                rule: rule_name.clone(),
                latent_model: config.latent.clone(),
                bias_model: bias_text.clone(),
                m: config.m,
                k: config.k,
                samples: config.samples,
                alpha: estimate.alpha,
                alpha_halfwidth: estimate.alpha_half_width,
                beta,
                gamma,
                ell: estimate.ell,
            });
        }
    }
    rows.sort_by(|a, b| a.rule.cmp(&b.rule).then(a.beta.total_cmp(&b.beta)));
    Ok(rows)
}

pub const RECOVERY_HEADER: [&str; 8] = [
    "rule",
    "latent_model",
    "n",
    "lambda",
    "trial",
    "recovered_fraction",
    "ell",
    "opt_method",
];

pub fn write_recovery_csv(rows: &[RecoveryRow], path: &Path) -> Result<(), ExperimentError> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rule.clone(),
                r.latent_model.clone(),
                r.n.to_string(),
                format_significant(r.lambda),
                r.trial.to_string(),
                r.recovered_fraction.map(format_significant).unwrap_or_default(),
                r.ell.to_string(),
                r.opt_method.as_str().to_string(),
            ]
        })
        .collect();
    write_csv(&RECOVERY_HEADER, &records, path)
}

pub const RELL_HEADER: [&str; 3] = ["ell", "r_ell_estimate", "trials"];

pub fn write_rell_csv(rows: &[RellRow], path: &Path) -> Result<(), ExperimentError> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.ell.to_string(),
                r.r_ell_estimate.map(format_significant).unwrap_or_default(),
                r.trials.to_string(),
            ]
        })
        .collect();
    write_csv(&RELL_HEADER, &records, path)
}

pub const SCALING_HEADER: [&str; 4] = ["rule", "theta", "n_star", "status"];

pub fn write_scaling_csv(rows: &[ScalingRow], path: &Path) -> Result<(), ExperimentError> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rule.clone(),
                format_significant(r.theta),
                r.n_star.map(|n| n.to_string()).unwrap_or_default(),
                if r.n_star.is_some() { "ok" } else { "not_reached" }.to_string(),
            ]
        })
        .collect();
    write_csv(&SCALING_HEADER, &records, path)
}

pub const SMOOTHNESS_HEADER: [&str; 11] = [
    "rule",
    "latent_model",
    "bias_model",
    "m",
    "k",
    "samples",
    "alpha",
    "alpha_halfwidth",
    "beta",
    "gamma",
    "ell",
];

pub fn write_smoothness_csv(rows: &[SmoothnessRow], path: &Path) -> Result<(), ExperimentError> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rule.clone(),
                r.latent_model.clone(),
                r.bias_model.clone(),
                r.m.to_string(),
                r.k.to_string(),
                r.samples.to_string(),
                format_significant(r.alpha),
                format_significant(r.alpha_halfwidth),
                format_significant(r.beta),
                format_significant(r.gamma),
                r.ell.to_string(),
            ]
        })
        .collect();
    write_csv(&SMOOTHNESS_HEADER, &records, path)
}

/// Mean recovered fraction vs lambda, one series per (rule, n).
pub fn plot_recovery(rows: &[RecoveryRow], path: &Path) -> Result<(), ExperimentError> {
    let mut grouped: BTreeMap<(String, usize), BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for row in rows {
        let Some(fraction) = row.recovered_fraction else {
            continue;
        };
        let cell = grouped
            .entry((row.rule.clone(), row.n))
            .or_default()
            .entry(row.lambda.to_bits())
            .or_insert((0.0, 0));
        cell.0 += fraction;
        cell.1 += 1;
    }
    let series: Vec<Series> = grouped
        .into_iter()
        .map(|((rule, n), by_lambda)| {
            let mut points: Vec<(f64, f64)> = by_lambda
                .into_iter()
                .map(|(bits, (sum, count))| (f64::from_bits(bits), sum / count as f64))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: format!("{rule} n={n}"),
                points,
            }
        })
        .collect();
    render_line_chart(&series, "lambda", "mean recovered fraction", "recovery", path)
}

pub fn plot_rell(rows: &[RellRow], path: &Path) -> Result<(), ExperimentError> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.r_ell_estimate.map(|v| (r.ell as f64, v)))
        .collect();
    let series = vec![Series {
        label: "r_ell".to_string(),
        points,
    }];
    render_line_chart(&series, "ell", "r_ell", "contribution of excluded seats", path)
}

pub fn plot_scaling(rows: &[ScalingRow], path: &Path) -> Result<(), ExperimentError> {
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        if let Some(n_star) = row.n_star {
            grouped
                .entry(row.rule.clone())
                .or_default()
                .push((row.theta, n_star as f64));
        }
    }
    let series: Vec<Series> = grouped
        .into_iter()
        .map(|(rule, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: rule,
                points,
            }
        })
        .collect();
    render_line_chart(&series, "theta", "n*", "voters needed vs bias", path)
}

pub fn plot_smoothness(rows: &[SmoothnessRow], path: &Path) -> Result<(), ExperimentError> {
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry(row.rule.clone())
            .or_default()
            .push((row.beta, row.gamma));
    }
    let series: Vec<Series> = grouped
        .into_iter()
        .map(|(rule, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: rule,
                points,
            }
        })
        .collect();
    render_line_chart(&series, "beta", "gamma", "order preservation under bias", path)
}
