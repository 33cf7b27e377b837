//! Generative models: latent preference samplers (utility-based and the
//! standard culture models) and bias transformations that turn a latent
//! list into an observed one.

use crate::preferences::{
    t_max, CandidateId, GroupPartition, PreferenceError, PreferenceList, Profile,
};
use crate::stream::TrialStream;
use rand::seq::SliceRandom;
use rand::Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("model is defined for {0} candidates, expected {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("utility-scaling bias requires a utility-based latent sample")]
    UtilitiesRequired,
    #[error("cannot parse model `{0}`: {1}")]
    Parse(String, String),
    #[error("cannot read utility file {path}: {source}")]
    UtilityFile {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

/// Distribution of the per-(voter, candidate) noise factor.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaDistribution {
    Uniform01,
    Exponential { rate: f64 },
}

impl EtaDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            EtaDistribution::Uniform01 => rng.gen::<f64>(),
            EtaDistribution::Exponential { rate } => {
                let u: f64 = rng.gen::<f64>();
                -(1.0 - u).ln() / rate
            }
        }
    }
}

/// Model that latent preference lists are drawn from, one list per voter.
///
/// All models draw voters independently except the urn model, whose voters
/// share one urn per profile (the standard Pólya-Eggenberger process);
/// separate profiles are always independent.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentModel {
    /// Candidate utilities `w_c = η_c · ω_c`, ranked by decreasing utility.
    UtilityBased {
        omega: Vec<f64>,
        eta: EtaDistribution,
    },
    /// Uniform over all m! strict orders.
    ImpartialCulture,
    /// Repeated-insertion Mallows around a reference list; dispersion 1 is
    /// the impartial culture.
    Mallows {
        dispersion: f64,
        reference: PreferenceList,
    },
    /// Pólya-Eggenberger urn over permutations.
    Urn { contagion: f64 },
    /// Single-peaked lists over an axis: uniform peak, then a balanced
    /// random walk outward.
    SinglePeakedConitzer { axis: PreferenceList },
}

/// One voter's latent draw; utilities are present only for the
/// utility-based model.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub list: PreferenceList,
    pub utilities: Option<Vec<f64>>,
}

/// Swap budget for the swapping bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwapBudget {
    Fixed(u64),
    /// `t = ⌊λ · t_max(v)⌋`, per voter.
    FractionOfMax(f64),
}

/// Transformation from a latent sample to an observed preference list.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasModel {
    Identity,
    /// Scales disadvantaged utilities by θ and re-ranks. Requires a
    /// utility-based latent sample.
    UtilityTheta { theta: f64 },
    /// Repeatedly swaps an advantaged candidate above a disadvantaged one,
    /// picking position pair (i, j) with probability φ^(i−j)/Z.
    Swapping { phi: f64, budget: SwapBudget },
    /// Applies `first` with probability delta per voter, else `second`.
    ///
    /// Delta 0 and 1 are allowed so that a degenerate mixture reproduces
    /// its component exactly.
    Mixture {
        delta: f64,
        first: Box<BiasModel>,
        second: Box<BiasModel>,
    },
}

impl LatentModel {
    pub fn parse(text: &str, m: usize) -> Result<Self, GenError> {
        let trimmed = text.trim();
        let err = |msg: &str| GenError::Parse(trimmed.to_string(), msg.to_string());
        let (scheme, rest) = match trimmed.split_once(':') {
            Some((s, r)) => (s.to_ascii_lowercase(), Some(r)),
            None => (trimmed.to_ascii_lowercase(), None),
        };
        match (scheme.as_str(), rest) {
            ("ic", None) => Ok(LatentModel::ImpartialCulture),
            ("conitzer", None) => Ok(LatentModel::SinglePeakedConitzer {
                axis: PreferenceList::identity(m),
            }),
            ("mallows", Some(arg)) => {
                let dispersion: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| err("dispersion must be a decimal"))?;
                if !(dispersion > 0.0 && dispersion <= 1.0) {
                    return Err(err("dispersion must lie in (0, 1]"));
                }
                Ok(LatentModel::Mallows {
                    dispersion,
                    reference: PreferenceList::identity(m),
                })
            }
            ("urn", Some(arg)) => {
                let contagion: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| err("contagion must be a decimal"))?;
                if contagion.is_nan() || contagion < 0.0 {
                    return Err(err("contagion must be non-negative"));
                }
                Ok(LatentModel::Urn { contagion })
            }
            ("utility", Some(path)) => {
                let omega = read_omega_file(Path::new(path))?;
                if omega.len() != m {
                    return Err(err(&format!(
                        "utility file has {} entries, expected {}",
                        omega.len(),
                        m
                    )));
                }
                Ok(LatentModel::UtilityBased {
                    omega,
                    eta: EtaDistribution::Uniform01,
                })
            }
            _ => Err(err(
                "expected one of ic, mallows:<dispersion>, urn:<contagion>, conitzer, utility:<omega-file>",
            )),
        }
    }

    fn check_m(&self, m: usize) -> Result<(), GenError> {
        let model_m = match self {
            LatentModel::UtilityBased { omega, .. } => omega.len(),
            LatentModel::Mallows { reference, .. } => reference.m(),
            LatentModel::SinglePeakedConitzer { axis } => axis.m(),
            _ => m,
        };
        if model_m != m {
            return Err(GenError::DimensionMismatch(model_m, m));
        }
        Ok(())
    }
}

fn read_omega_file(path: &Path) -> Result<Vec<f64>, GenError> {
    let text = std::fs::read_to_string(path).map_err(|source| GenError::UtilityFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut omega = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            GenError::InvalidParameter(format!(
                "{}:{}: `{line}` is not a decimal",
                path.display(),
                lineno + 1
            ))
        })?;
        if value.is_nan() || value < 0.0 {
            return Err(GenError::InvalidParameter(format!(
                "{}:{}: utilities must be non-negative",
                path.display(),
                lineno + 1
            )));
        }
        omega.push(value);
    }
    Ok(omega)
}

impl BiasModel {
    pub fn parse(text: &str) -> Result<Self, GenError> {
        let trimmed = text.trim();
        let err = |msg: &str| GenError::Parse(trimmed.to_string(), msg.to_string());
        let lower = trimmed.to_ascii_lowercase();
        if lower == "none" {
            return Ok(BiasModel::Identity);
        }
        if let Some(arg) = lower.strip_prefix("theta:") {
            let theta: f64 = arg.parse().map_err(|_| err("theta must be a decimal"))?;
            if !(0.0..=1.0).contains(&theta) {
                return Err(err("theta must lie in [0, 1]"));
            }
            return Ok(BiasModel::UtilityTheta { theta });
        }
        if let Some(rest) = lower.strip_prefix("swap:") {
            let (phi_part, budget_part) = rest
                .split_once(':')
                .ok_or_else(|| err("expected swap:<phi>:t=<t> or swap:<phi>:lambda=<l>"))?;
            let phi: f64 = phi_part.parse().map_err(|_| err("phi must be a decimal"))?;
            if !(phi > 0.0 && phi <= 1.0) {
                return Err(err("phi must lie in (0, 1]"));
            }
            let budget = if let Some(t) = budget_part.strip_prefix("t=") {
                SwapBudget::Fixed(t.parse().map_err(|_| err("t must be a non-negative integer"))?)
            } else if let Some(l) = budget_part.strip_prefix("lambda=") {
                let lambda: f64 = l.parse().map_err(|_| err("lambda must be a decimal"))?;
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(err("lambda must lie in [0, 1]"));
                }
                SwapBudget::FractionOfMax(lambda)
            } else {
                return Err(err("expected t=<t> or lambda=<l>"));
            };
            return Ok(BiasModel::Swapping { phi, budget });
        }
        if let Some(rest) = lower.strip_prefix("mix:") {
            let (delta_part, components) = rest
                .split_once(':')
                .ok_or_else(|| err("expected mix:<delta>:<bias1>|<bias2>"))?;
            let delta: f64 = delta_part
                .parse()
                .map_err(|_| err("delta must be a decimal"))?;
            if !(0.0..=1.0).contains(&delta) {
                return Err(err("delta must lie in [0, 1]"));
            }
            let (first, second) = components
                .split_once('|')
                .ok_or_else(|| err("expected mix:<delta>:<bias1>|<bias2>"))?;
            return Ok(BiasModel::Mixture {
                delta,
                first: Box::new(BiasModel::parse(first)?),
                second: Box::new(BiasModel::parse(second)?),
            });
        }
        Err(err(
            "expected one of none, theta:<t>, swap:<phi>:t=<t>, swap:<phi>:lambda=<l>, mix:<d>:<b1>|<b2>",
        ))
    }
}

/// Draws one latent sample. Voters are i.i.d. across calls; the urn model's
/// in-profile contagion lives in [`sample_pair`], so a standalone call is a
/// fresh urn (a uniform draw).
pub fn sample_latent<R: Rng>(
    model: &LatentModel,
    m: usize,
    rng: &mut R,
) -> Result<LatentSample, GenError> {
    sample_latent_with_history(model, m, rng, &[])
}

fn sample_latent_with_history<R: Rng>(
    model: &LatentModel,
    m: usize,
    rng: &mut R,
    history: &[PreferenceList],
) -> Result<LatentSample, GenError> {
    if m == 0 {
        return Err(GenError::InvalidParameter("m must be at least 1".into()));
    }
    model.check_m(m)?;
    let sample = match model {
        LatentModel::UtilityBased { omega, eta } => {
            if !omega.iter().any(|w| *w > 0.0) {
                return Err(GenError::InvalidParameter(
                    "omega needs at least one positive entry".into(),
                ));
            }
            let utilities: Vec<f64> = omega.iter().map(|w| eta.sample(rng) * w).collect();
            LatentSample {
                list: rank_by_utilities(&utilities)?,
                utilities: Some(utilities),
            }
        }
        LatentModel::ImpartialCulture => LatentSample {
            list: uniform_list(m, rng)?,
            utilities: None,
        },
        LatentModel::Mallows {
            dispersion,
            reference,
        } => LatentSample {
            list: sample_mallows(reference, *dispersion, rng)?,
            utilities: None,
        },
        LatentModel::Urn { contagion } => {
            // Fresh draw with probability 1/(1 + t·α) after t draws, else a
            // copy of a uniformly chosen earlier voter.
            let t = history.len() as f64;
            let fresh_probability = 1.0 / (1.0 + t * contagion);
            let u: f64 = rng.gen();
            let list = if u < fresh_probability || history.is_empty() {
                uniform_list(m, rng)?
            } else {
                history[rng.gen_range(0..history.len())].clone()
            };
            LatentSample {
                list,
                utilities: None,
            }
        }
        LatentModel::SinglePeakedConitzer { axis } => LatentSample {
            list: sample_conitzer(axis, rng)?,
            utilities: None,
        },
    };
    Ok(sample)
}

fn uniform_list<R: Rng>(m: usize, rng: &mut R) -> Result<PreferenceList, GenError> {
    let mut order: Vec<CandidateId> = (0..m).map(CandidateId).collect();
    order.shuffle(rng);
    Ok(PreferenceList::new(order)?)
}

fn rank_by_utilities(utilities: &[f64]) -> Result<PreferenceList, GenError> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    // Decreasing utility; ties broken by ascending candidate index.
    order.sort_by(|&a, &b| {
        utilities[b]
            .partial_cmp(&utilities[a])
            .expect("utilities are finite")
            .then(a.cmp(&b))
    });
    Ok(PreferenceList::new(
        order.into_iter().map(CandidateId).collect(),
    )?)
}

/// Repeated insertion: the i-th reference candidate (0-based) goes to slot
/// j of the partial list with probability dispersion^(i−j).
fn sample_mallows<R: Rng>(
    reference: &PreferenceList,
    dispersion: f64,
    rng: &mut R,
) -> Result<PreferenceList, GenError> {
    if !(dispersion > 0.0 && dispersion <= 1.0) {
        return Err(GenError::InvalidParameter(
            "Mallows dispersion must lie in (0, 1]".into(),
        ));
    }
    let m = reference.m();
    let mut order: Vec<CandidateId> = Vec::with_capacity(m);
    for (i, c) in reference.order().iter().enumerate() {
        let weights: Vec<f64> = (0..=i).map(|j| dispersion.powi((i - j) as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut slot = i;
        for (j, w) in weights.iter().enumerate() {
            if target < *w {
                slot = j;
                break;
            }
            target -= w;
        }
        order.insert(slot, *c);
    }
    Ok(PreferenceList::new(order)?)
}

fn sample_conitzer<R: Rng>(
    axis: &PreferenceList,
    rng: &mut R,
) -> Result<PreferenceList, GenError> {
    let m = axis.m();
    let peak = rng.gen_range(0..m);
    let (mut lo, mut hi) = (peak, peak);
    let mut order = Vec::with_capacity(m);
    order.push(axis.order()[peak]);
    while order.len() < m {
        let go_left = if lo == 0 {
            false
        } else if hi == m - 1 {
            true
        } else {
            rng.gen_bool(0.5)
        };
        if go_left {
            lo -= 1;
            order.push(axis.order()[lo]);
        } else {
            hi += 1;
            order.push(axis.order()[hi]);
        }
    }
    Ok(PreferenceList::new(order)?)
}

/// All position pairs (i, j), 1-based, where an advantaged candidate at
/// position i sits strictly below a disadvantaged candidate at position j.
pub fn admissible_pairs(
    list: &PreferenceList,
    g: &GroupPartition,
) -> Result<Vec<(usize, usize)>, GenError> {
    check_partition(list, g)?;
    let m = list.m();
    let mut pairs = Vec::new();
    for i in 1..=m {
        if g.is_disadvantaged(list.candidate_at(i).expect("rank in range")) {
            continue;
        }
        for j in 1..i {
            if g.is_disadvantaged(list.candidate_at(j).expect("rank in range")) {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Z(≻) = Σ over admissible pairs of φ^(i−j); 0 iff no pair is admissible.
pub fn swap_normalizer(
    list: &PreferenceList,
    g: &GroupPartition,
    phi: f64,
) -> Result<f64, GenError> {
    check_partition(list, g)?;
    check_phi(phi)?;
    let disadvantaged_at: Vec<bool> = list
        .order()
        .iter()
        .map(|c| g.is_disadvantaged(*c))
        .collect();
    Ok(scan_normalizer(&disadvantaged_at, phi).0)
}

/// One left-to-right pass: returns Z and, per position p, the partial sum
/// T(p) = Σ_{j<p, j disadvantaged} φ^(p−j). Z = Σ_{p advantaged} T(p).
fn scan_normalizer(disadvantaged_at: &[bool], phi: f64) -> (f64, Vec<f64>) {
    let m = disadvantaged_at.len();
    let mut partial = vec![0.0; m + 1];
    let mut z = 0.0;
    for p in 1..=m {
        partial[p] = if p == 1 {
            0.0
        } else {
            phi * (partial[p - 1] + if disadvantaged_at[p - 2] { 1.0 } else { 0.0 })
        };
        if !disadvantaged_at[p - 1] {
            z += partial[p];
        }
    }
    (z, partial)
}

fn check_phi(phi: f64) -> Result<(), GenError> {
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(GenError::InvalidParameter("phi must lie in (0, 1]".into()));
    }
    Ok(())
}

fn check_partition(list: &PreferenceList, g: &GroupPartition) -> Result<(), GenError> {
    if g.len() != list.m() {
        return Err(GenError::DimensionMismatch(g.len(), list.m()));
    }
    Ok(())
}

/// Applies a bias model to one latent sample.
///
/// `bias_rng` drives the transformation itself, `coin_rng` only mixture
/// coins, so `Mixture { delta: 0, .. }` is bit-identical to its second
/// component.
pub fn apply_bias<R: Rng, C: Rng>(
    bias: &BiasModel,
    sample: &LatentSample,
    g: &GroupPartition,
    bias_rng: &mut R,
    coin_rng: &mut C,
) -> Result<PreferenceList, GenError> {
    check_partition(&sample.list, g)?;
    match bias {
        BiasModel::Identity => Ok(sample.list.clone()),
        BiasModel::UtilityTheta { theta } => {
            if !(0.0..=1.0).contains(theta) {
                return Err(GenError::InvalidParameter("theta must lie in [0, 1]".into()));
            }
            let utilities = sample
                .utilities
                .as_ref()
                .ok_or(GenError::UtilitiesRequired)?;
            let biased: Vec<f64> = utilities
                .iter()
                .enumerate()
                .map(|(c, w)| {
                    if g.is_disadvantaged(CandidateId(c)) {
                        theta * w
                    } else {
                        *w
                    }
                })
                .collect();
            rank_by_utilities(&biased)
        }
        BiasModel::Swapping { phi, budget } => {
            check_phi(*phi)?;
            let t = match budget {
                SwapBudget::Fixed(t) => *t,
                SwapBudget::FractionOfMax(lambda) => {
                    if !(0.0..=1.0).contains(lambda) {
                        return Err(GenError::InvalidParameter(
                            "lambda must lie in [0, 1]".into(),
                        ));
                    }
                    (lambda * t_max(&sample.list, g)? as f64).floor() as u64
                }
            };
            let mut list = sample.list.clone();
            let mut disadvantaged_at: Vec<bool> = list
                .order()
                .iter()
                .map(|c| g.is_disadvantaged(*c))
                .collect();
            for _ in 0..t {
                if !swap_step(&mut list, &mut disadvantaged_at, *phi, bias_rng) {
                    break;
                }
            }
            Ok(list)
        }
        BiasModel::Mixture {
            delta,
            first,
            second,
        } => {
            if !(0.0..=1.0).contains(delta) {
                return Err(GenError::InvalidParameter("delta must lie in [0, 1]".into()));
            }
            let chosen = if coin_rng.gen::<f64>() < *delta {
                first
            } else {
                second
            };
            apply_bias(chosen, sample, g, bias_rng, coin_rng)
        }
    }
}

/// Samples one admissible pair with probability φ^(i−j)/Z and swaps it.
/// Returns false (and leaves the list untouched) when no pair remains.
///
/// Selection runs in O(m): first the advantaged position i by its partial
/// weight T(i), then the disadvantaged position j below it by φ^(i−j).
fn swap_step<R: Rng>(
    list: &mut PreferenceList,
    disadvantaged_at: &mut [bool],
    phi: f64,
    rng: &mut R,
) -> bool {
    let m = disadvantaged_at.len();
    let (z, partial) = scan_normalizer(disadvantaged_at, phi);
    if z <= 0.0 {
        return false;
    }
    let mut target = rng.gen::<f64>() * z;
    let mut chosen_i = 0;
    for p in 1..=m {
        if disadvantaged_at[p - 1] || partial[p] <= 0.0 {
            continue;
        }
        chosen_i = p;
        if target < partial[p] {
            break;
        }
        target -= partial[p];
    }
    debug_assert!(chosen_i > 0);

    let mut inner = rng.gen::<f64>() * partial[chosen_i];
    let mut chosen_j = 0;
    for j in (1..chosen_i).rev() {
        if !disadvantaged_at[j - 1] {
            continue;
        }
        chosen_j = j;
        let w = phi.powi((chosen_i - j) as i32);
        if inner < w {
            break;
        }
        inner -= w;
    }
    debug_assert!(chosen_j > 0);

    list.swap_positions(chosen_i, chosen_j);
    disadvantaged_at.swap(chosen_i - 1, chosen_j - 1);
    true
}

/// Draws the n latent samples of one trial, voter v on stream
/// (seed, trial, v). The urn model's contagion chains through the profile
/// here; every other model is i.i.d. across voters.
pub fn sample_latent_profile(
    model: &LatentModel,
    m: usize,
    n: usize,
    stream: &TrialStream,
) -> Result<Vec<LatentSample>, GenError> {
    if n == 0 {
        return Err(GenError::InvalidParameter("n must be at least 1".into()));
    }
    let mut samples: Vec<LatentSample> = Vec::with_capacity(n);
    let mut history: Vec<PreferenceList> = Vec::with_capacity(n);
    for v in 1..=n {
        let streams = stream.voter(v as u32);
        let sample = sample_latent_with_history(model, m, &mut streams.latent(), &history)?;
        history.push(sample.list.clone());
        samples.push(sample);
    }
    Ok(samples)
}

/// Draws n paired (latent, biased) voters; the biased list of voter v is
/// derived from that same voter's latent sample.
pub fn sample_pair(
    latent: &LatentModel,
    bias: &BiasModel,
    g: &GroupPartition,
    n: usize,
    m: usize,
    stream: &TrialStream,
) -> Result<(Profile, Profile), GenError> {
    if g.len() != m {
        return Err(GenError::DimensionMismatch(g.len(), m));
    }
    let samples = sample_latent_profile(latent, m, n, stream)?;
    let mut latent_lists = Vec::with_capacity(n);
    let mut biased_lists = Vec::with_capacity(n);
    for (v, sample) in samples.into_iter().enumerate() {
        let streams = stream.voter((v + 1) as u32);
        let biased = apply_bias(
            bias,
            &sample,
            g,
            &mut streams.bias(),
            &mut streams.mixture_coin(),
        )?;
        latent_lists.push(sample.list);
        biased_lists.push(biased);
    }
    Ok((Profile::new(latent_lists)?, Profile::new(biased_lists)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn list(order: &[usize]) -> PreferenceList {
        PreferenceList::from_indices(order).unwrap()
    }

    fn g2(m: usize, disadvantaged: &[usize]) -> GroupPartition {
        GroupPartition::from_disadvantaged(m, disadvantaged).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn impartial_culture_is_uniform() {
        let mut r = rng(1);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let draws = 12_000;
        for _ in 0..draws {
            let sample = sample_latent(&LatentModel::ImpartialCulture, 3, &mut r).unwrap();
            *counts
                .entry(sample.list.order().iter().map(|c| c.0).collect())
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, count) in counts {
            let freq = count as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn dominant_utility_ranks_first() {
        // Exact P[c0 first] by quadrature: integrate P[eta1 < x/a] P[eta2 < x/a] dx.
        let a = 1e-4;
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        let steps = 200_001;
        let h = 1.0 / (steps - 1) as f64;
        let exact: f64 = (0..steps)
            .map(|i| {
                let x = i as f64 * h;
                let w = if i == 0 || i == steps - 1 { 0.5 } else { 1.0 };
                w * cdf(x / a) * cdf(x / a) * h
            })
            .sum();
        assert!((exact - (1.0 - 2.0 * a / 3.0)).abs() < 1e-6);

        let model = LatentModel::UtilityBased {
            omega: vec![1.0, a, a],
            eta: EtaDistribution::Uniform01,
        };
        let mut r = rng(2);
        let draws = 10_000;
        let mut first = 0usize;
        for _ in 0..draws {
            let sample = sample_latent(&model, 3, &mut r).unwrap();
            if sample.list.order()[0] == CandidateId(0) {
                first += 1;
            }
        }
        let freq = first as f64 / draws as f64;
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!((freq - exact).abs() <= 3.0 * se + 1e-3, "freq {freq} vs {exact}");
    }

    #[test]
    fn exponential_eta_behaves_like_the_distribution() {
        let eta = EtaDistribution::Exponential { rate: 2.0 };
        let mut r = rng(21);
        let draws = 20_000;
        let mean: f64 = (0..draws).map(|_| eta.sample(&mut r)).sum::<f64>() / draws as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        // And it drives a valid utility-based sampler.
        let model = LatentModel::UtilityBased {
            omega: vec![1.0, 2.0, 0.5],
            eta,
        };
        let sample = sample_latent(&model, 3, &mut r).unwrap();
        assert_eq!(sample.list.m(), 3);
        assert!(sample.utilities.unwrap().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn mallows_dispersion_one_matches_impartial_culture() {
        let model = LatentModel::Mallows {
            dispersion: 1.0,
            reference: PreferenceList::identity(3),
        };
        let mut r = rng(3);
        let draws = 6_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let sample = sample_latent(&model, 3, &mut r).unwrap();
            *counts
                .entry(sample.list.order().iter().map(|c| c.0).collect())
                .or_default() += 1;
        }
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 5 degrees of freedom.
        assert!(chi2 < 20.515, "chi2 {chi2}");
    }

    #[test]
    fn mallows_concentrates_for_small_dispersion() {
        let reference = PreferenceList::identity(6);
        let model = LatentModel::Mallows {
            dispersion: 0.1,
            reference: reference.clone(),
        };
        let mut r = rng(4);
        let mut total = 0u64;
        for _ in 0..500 {
            let sample = sample_latent(&model, 6, &mut r).unwrap();
            total += crate::preferences::kendall_tau(&sample.list, &reference).unwrap();
        }
        // Mean distance is about 0.11 per adjacent slot; far below uniform (7.5).
        assert!((total as f64 / 500.0) < 2.0);
    }

    #[test]
    fn conitzer_lists_are_single_peaked() {
        let axis = PreferenceList::identity(7);
        let model = LatentModel::SinglePeakedConitzer { axis: axis.clone() };
        let mut r = rng(5);
        for _ in 0..200 {
            let sample = sample_latent(&model, 7, &mut r).unwrap();
            // Every prefix of the list must be contiguous on the axis.
            let mut lo = usize::MAX;
            let mut hi = 0;
            for (len, c) in sample.list.order().iter().enumerate() {
                let axis_pos = axis.position(*c).unwrap();
                lo = lo.min(axis_pos);
                hi = hi.max(axis_pos);
                assert_eq!(hi - lo, len);
            }
        }
    }

    #[test]
    fn urn_with_zero_contagion_never_copies() {
        let stream = TrialStream::new(11, 0);
        let (latent, _) = sample_pair(
            &LatentModel::Urn { contagion: 0.0 },
            &BiasModel::Identity,
            &g2(5, &[0, 1]),
            50,
            5,
            &stream,
        )
        .unwrap();
        // A high-contagion urn should produce many repeats instead.
        let (sticky, _) = sample_pair(
            &LatentModel::Urn { contagion: 50.0 },
            &BiasModel::Identity,
            &g2(5, &[0, 1]),
            50,
            5,
            &stream,
        )
        .unwrap();
        let distinct = |p: &Profile| {
            let mut seen: Vec<Vec<usize>> = p
                .lists()
                .iter()
                .map(|l| l.order().iter().map(|c| c.0).collect())
                .collect();
            seen.sort();
            seen.dedup();
            seen.len()
        };
        assert!(distinct(&latent) > distinct(&sticky));
        assert!(distinct(&sticky) <= 10);
    }

    #[test]
    fn admissible_pairs_examples() {
        // (d, a) with d disadvantaged.
        let pairs = admissible_pairs(&list(&[0, 1]), &g2(2, &[0])).unwrap();
        assert_eq!(pairs, vec![(2, 1)]);
        // Group-sorted list has no admissible pair.
        let pairs = admissible_pairs(&list(&[1, 0]), &g2(2, &[0])).unwrap();
        assert!(pairs.is_empty());
        // (d1, a1, d2, a2) with G2 = {d1, d2} = candidates {0, 2}.
        let pairs = admissible_pairs(&list(&[0, 1, 2, 3]), &g2(4, &[0, 2])).unwrap();
        assert_eq!(pairs, vec![(2, 1), (4, 1), (4, 3)]);
    }

    #[test]
    fn swap_normalizer_examples() {
        assert_eq!(
            swap_normalizer(&list(&[0, 1]), &g2(2, &[0]), 0.5).unwrap(),
            0.5
        );
        assert_eq!(
            swap_normalizer(&list(&[0, 1, 2, 3]), &g2(4, &[0, 2]), 0.5).unwrap(),
            1.125
        );
        assert_eq!(
            swap_normalizer(&list(&[1, 0]), &g2(2, &[0]), 0.5).unwrap(),
            0.0
        );
    }

    #[test]
    fn theta_one_is_identity() {
        let model = LatentModel::UtilityBased {
            omega: vec![1.0, 2.0, 0.5, 1.5],
            eta: EtaDistribution::Uniform01,
        };
        let g = g2(4, &[1, 3]);
        let mut r = rng(6);
        for _ in 0..50 {
            let sample = sample_latent(&model, 4, &mut r).unwrap();
            let biased = apply_bias(
                &BiasModel::UtilityTheta { theta: 1.0 },
                &sample,
                &g,
                &mut rng(0),
                &mut rng(0),
            )
            .unwrap();
            assert_eq!(biased, sample.list);
        }
    }

    #[test]
    fn utility_theta_requires_utilities() {
        let sample = LatentSample {
            list: list(&[0, 1, 2]),
            utilities: None,
        };
        let result = apply_bias(
            &BiasModel::UtilityTheta { theta: 0.5 },
            &sample,
            &g2(3, &[0]),
            &mut rng(0),
            &mut rng(0),
        );
        assert!(matches!(result, Err(GenError::UtilitiesRequired)));
    }

    #[test]
    fn swap_pair_selection_matches_weights() {
        // Fixed list (d1, a1, d2, a2): pairs (2,1), (4,1), (4,3) carry
        // weights 0.5, 0.125, 0.5 out of Z = 1.125.
        let base = LatentSample {
            list: list(&[0, 1, 2, 3]),
            utilities: None,
        };
        let g = g2(4, &[0, 2]);
        let bias = BiasModel::Swapping {
            phi: 0.5,
            budget: SwapBudget::Fixed(1),
        };
        let draws = 100_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut bias_rng = rng(7);
        for _ in 0..draws {
            let biased = apply_bias(&bias, &base, &g, &mut bias_rng, &mut rng(0)).unwrap();
            *counts
                .entry(biased.order().iter().map(|c| c.0).collect())
                .or_default() += 1;
        }
        let expect = [
            (vec![1, 0, 2, 3], 0.5 / 1.125),   // swap (2,1)
            (vec![3, 1, 2, 0], 0.125 / 1.125), // swap (4,1)
            (vec![0, 1, 3, 2], 0.5 / 1.125),   // swap (4,3)
        ];
        for (outcome, p) in expect {
            let freq = *counts.get(&outcome).unwrap_or(&0) as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "outcome freq {freq} vs {p}");
        }
        assert_eq!(counts.values().sum::<usize>(), draws);
        assert_eq!(counts.len(), 3);
    }

    #[test]
    fn sample_pair_identity_bias_pairs_profiles() {
        let stream = TrialStream::new(13, 2);
        let (latent, biased) = sample_pair(
            &LatentModel::ImpartialCulture,
            &BiasModel::Identity,
            &g2(6, &[0, 1, 2]),
            20,
            6,
            &stream,
        )
        .unwrap();
        assert_eq!(latent, biased);
        // Same stream, same profiles.
        let (again, _) = sample_pair(
            &LatentModel::ImpartialCulture,
            &BiasModel::Identity,
            &g2(6, &[0, 1, 2]),
            20,
            6,
            &stream,
        )
        .unwrap();
        assert_eq!(latent, again);
    }

    #[test]
    fn sample_pair_rejects_empty_profiles() {
        let result = sample_pair(
            &LatentModel::ImpartialCulture,
            &BiasModel::Identity,
            &g2(3, &[0]),
            0,
            3,
            &TrialStream::new(1, 0),
        );
        assert!(result.is_err());
    }

    #[test]
    fn degenerate_mixtures_reproduce_components_exactly() {
        let g = g2(6, &[0, 2, 4]);
        let swap = BiasModel::Swapping {
            phi: 0.5,
            budget: SwapBudget::FractionOfMax(0.8),
        };
        let stream = TrialStream::new(17, 5);
        let pure = sample_pair(&LatentModel::ImpartialCulture, &swap, &g, 30, 6, &stream).unwrap();
        let mix0 = BiasModel::Mixture {
            delta: 0.0,
            first: Box::new(BiasModel::Identity),
            second: Box::new(swap.clone()),
        };
        let mixed =
            sample_pair(&LatentModel::ImpartialCulture, &mix0, &g, 30, 6, &stream).unwrap();
        assert_eq!(pure, mixed);
        let mix1 = BiasModel::Mixture {
            delta: 1.0,
            first: Box::new(swap),
            second: Box::new(BiasModel::Identity),
        };
        let mixed =
            sample_pair(&LatentModel::ImpartialCulture, &mix1, &g, 30, 6, &stream).unwrap();
        assert_eq!(pure, mixed);
    }

    #[test]
    fn parse_latent_and_bias_strings() {
        assert_eq!(
            LatentModel::parse("IC", 4).unwrap(),
            LatentModel::ImpartialCulture
        );
        assert!(matches!(
            LatentModel::parse("mallows:0.7", 4).unwrap(),
            LatentModel::Mallows { dispersion, .. } if dispersion == 0.7
        ));
        assert!(matches!(
            LatentModel::parse("urn:2.5", 4).unwrap(),
            LatentModel::Urn { contagion } if contagion == 2.5
        ));
        assert!(LatentModel::parse("mallows:0", 4).is_err());
        assert!(LatentModel::parse("zipf", 4).is_err());

        assert_eq!(BiasModel::parse("none").unwrap(), BiasModel::Identity);
        assert_eq!(
            BiasModel::parse("theta:0.5").unwrap(),
            BiasModel::UtilityTheta { theta: 0.5 }
        );
        assert_eq!(
            BiasModel::parse("swap:0.5:t=3").unwrap(),
            BiasModel::Swapping {
                phi: 0.5,
                budget: SwapBudget::Fixed(3)
            }
        );
        assert_eq!(
            BiasModel::parse("swap:0.5:lambda=0.25").unwrap(),
            BiasModel::Swapping {
                phi: 0.5,
                budget: SwapBudget::FractionOfMax(0.25)
            }
        );
        assert_eq!(
            BiasModel::parse("mix:0.3:theta:0.5|swap:0.5:t=1").unwrap(),
            BiasModel::Mixture {
                delta: 0.3,
                first: Box::new(BiasModel::UtilityTheta { theta: 0.5 }),
                second: Box::new(BiasModel::Swapping {
                    phi: 0.5,
                    budget: SwapBudget::Fixed(1)
                }),
            }
        );
        assert!(BiasModel::parse("swap:1.5:t=1").is_err());
        assert!(BiasModel::parse("theta:2").is_err());
    }

    #[test]
    fn parse_utility_reads_omega_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("omega.txt");
        std::fs::write(&path, "1.0\n0.5\n0.25\n").unwrap();
        let model = LatentModel::parse(&format!("utility:{}", path.display()), 3).unwrap();
        assert!(matches!(
            model,
            LatentModel::UtilityBased { ref omega, .. } if omega == &vec![1.0, 0.5, 0.25]
        ));
        assert!(LatentModel::parse(&format!("utility:{}", path.display()), 4).is_err());
    }

    fn arb_masked_list() -> impl Strategy<Value = (PreferenceList, GroupPartition)> {
        (3usize..=8).prop_flat_map(|m| {
            (
                prop::collection::vec(any::<u32>(), m),
                prop::collection::vec(any::<bool>(), m),
            )
                .prop_map(move |(keys, mask)| {
                    let mut order: Vec<usize> = (0..m).collect();
                    order.sort_by_key(|&i| (keys[i], i));
                    let disadvantaged: Vec<usize> = (0..m).filter(|i| mask[*i]).collect();
                    (
                        PreferenceList::from_indices(&order).unwrap(),
                        g2(m, &disadvantaged),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn admissible_pair_count_equals_t_max((l, g) in arb_masked_list()) {
            let pairs = admissible_pairs(&l, &g).unwrap();
            prop_assert_eq!(pairs.len() as u64, t_max(&l, &g).unwrap());
            // And the normalizer agrees with the naive sum over pairs.
            let direct: f64 = pairs.iter().map(|(i, j)| 0.5f64.powi((i - j) as i32)).sum();
            let z = swap_normalizer(&l, &g, 0.5).unwrap();
            prop_assert!((z - direct).abs() < 1e-12);
        }

        #[test]
        fn full_budget_swapping_reaches_group_sorted((l, g) in arb_masked_list(), seed in any::<u64>()) {
            let budget = t_max(&l, &g).unwrap();
            let sample = LatentSample { list: l, utilities: None };
            let bias = BiasModel::Swapping { phi: 0.5, budget: SwapBudget::Fixed(budget) };
            let biased = apply_bias(&bias, &sample, &g, &mut rng(seed), &mut rng(0)).unwrap();
            prop_assert_eq!(t_max(&biased, &g).unwrap(), 0);
        }

        #[test]
        fn single_swap_moves_one_candidate_per_group((l, g) in arb_masked_list(), seed in any::<u64>()) {
            let sample = LatentSample { list: l.clone(), utilities: None };
            let bias = BiasModel::Swapping { phi: 0.5, budget: SwapBudget::Fixed(1) };
            let biased = apply_bias(&bias, &sample, &g, &mut rng(seed), &mut rng(0)).unwrap();
            if biased == l {
                prop_assert_eq!(t_max(&l, &g).unwrap(), 0);
            } else {
                let mut improved = Vec::new();
                let mut worsened = Vec::new();
                for c in 0..l.m() {
                    let c = CandidateId(c);
                    let before = l.position(c).unwrap();
                    let after = biased.position(c).unwrap();
                    if after < before {
                        improved.push(c);
                    } else if after > before {
                        worsened.push(c);
                    }
                }
                prop_assert_eq!(improved.len(), 1);
                prop_assert_eq!(worsened.len(), 1);
                prop_assert!(!g.is_disadvantaged(improved[0]));
                prop_assert!(g.is_disadvantaged(worsened[0]));
            }
        }

        #[test]
        fn utility_theta_preserves_within_group_order(
            seed in any::<u64>(),
            theta in 0.05f64..1.0,
            mask in prop::collection::vec(any::<bool>(), 6)
        ) {
            let model = LatentModel::UtilityBased {
                omega: vec![1.0, 0.8, 1.2, 0.6, 1.1, 0.9],
                eta: EtaDistribution::Uniform01,
            };
            let disadvantaged: Vec<usize> = (0..6).filter(|i| mask[*i]).collect();
            let g = g2(6, &disadvantaged);
            let sample = sample_latent(&model, 6, &mut rng(seed)).unwrap();
            let biased = apply_bias(
                &BiasModel::UtilityTheta { theta },
                &sample,
                &g,
                &mut rng(0),
                &mut rng(0),
            ).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    let (a, b) = (CandidateId(a), CandidateId(b));
                    if a != b && g.is_disadvantaged(a) == g.is_disadvantaged(b) {
                        let latent_before = sample.list.position(a).unwrap() < sample.list.position(b).unwrap();
                        let biased_before = biased.position(a).unwrap() < biased.position(b).unwrap();
                        prop_assert_eq!(latent_before, biased_before);
                    }
                }
            }
        }
    }
}
