//! Flat key-value experiment configs: one `key = value` per line, `#`
//! comments, comma-separated lists. No nesting, diff-friendly.

use super::ExperimentError;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Recovery,
    Scaling,
    REll,
    Smoothness,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Recovery => "recovery",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::REll => "r_ell",
            ExperimentKind::Smoothness => "smoothness",
        }
    }
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Parsed experiment description. Field relevance depends on the kind;
/// `validate` enforces the per-kind requirements.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub rules: Vec<String>,
    pub latent: String,
    pub bias: Option<String>,
    pub m: usize,
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub phi: f64,
    pub samples: usize,
    pub beta_grid: Vec<f64>,
    pub random_contexts: usize,
    pub ell_grid: Option<Vec<usize>>,
    /// Candidate-count guard for the brute-force r_ell experiment.
    pub max_m: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut builder = Builder::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            builder.set(key.trim(), value.trim(), lineno + 1)?;
        }
        builder.finish()
    }

    /// Checks the fields the given runner relies on.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::Config(msg));
        if self.m < 2 {
            return fail(format!("m must be at least 2, got {}", self.m));
        }
        if self.k == 0 || self.k > self.m {
            return fail(format!("k must lie in [1, {}], got {}", self.m, self.k));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.rules.is_empty() {
            return fail("at least one rule is required".into());
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return fail(format!("phi must lie in (0, 1], got {}", self.phi));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        match self.kind {
            ExperimentKind::Recovery => {
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return fail("recovery needs a non-empty n grid of positive counts".into());
                }
                if self.lambda_grid.is_empty() {
                    return fail("recovery needs a non-empty lambda grid".into());
                }
                if self
                    .lambda_grid
                    .iter()
                    .any(|l| !(0.0..=1.0).contains(l))
                {
                    return fail("lambda values must lie in [0, 1]".into());
                }
            }
            ExperimentKind::Scaling => {
                let (n_min, n_max) = match (self.n_min, self.n_max) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return fail("scaling needs n_min and n_max".into()),
                };
                if n_min == 0 || n_min > n_max {
                    return fail(format!(
                        "scaling needs 1 <= n_min <= n_max, got {n_min}..{n_max}"
                    ));
                }
                if self.theta_grid.is_empty() {
                    return fail("scaling needs a non-empty theta grid".into());
                }
                if self
                    .theta_grid
                    .iter()
                    .any(|t| !(*t > 0.0 && *t <= 1.0))
                {
                    return fail("theta values must lie in (0, 1]".into());
                }
            }
            ExperimentKind::REll => {
                if self.rules.len() != 1 {
                    return fail("r_ell runs a single rule".into());
                }
                if self.n_grid.len() != 1 || self.n_grid[0] == 0 {
                    return fail("r_ell needs exactly one positive n".into());
                }
                if let Some(ells) = &self.ell_grid {
                    if ells.iter().any(|l| *l > self.k) {
                        return fail("ell values cannot exceed k".into());
                    }
                }
            }
            ExperimentKind::Smoothness => {
                if self.bias.is_none() {
                    return fail("smoothness needs a bias model".into());
                }
                if self.samples == 0 {
                    return fail("smoothness needs samples >= 1".into());
                }
                if self.beta_grid.is_empty()
                    || self.beta_grid.iter().any(|b| !(0.0..=1.0).contains(b))
                {
                    return fail("beta values must lie in [0, 1]".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Builder {
    kind: Option<ExperimentKind>,
    rules: Option<Vec<String>>,
    latent: Option<String>,
    bias: Option<String>,
    m: Option<usize>,
    k: Option<usize>,
    n_grid: Option<Vec<usize>>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    lambda_grid: Option<Vec<f64>>,
    theta_grid: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    delta: Option<f64>,
    epsilon: Option<f64>,
    phi: Option<f64>,
    samples: Option<usize>,
    beta_grid: Option<Vec<f64>>,
    random_contexts: Option<usize>,
    ell_grid: Option<Vec<usize>>,
    max_m: Option<usize>,
    out: Option<PathBuf>,
}

impl Builder {
    fn set(&mut self, key: &str, value: &str, lineno: usize) -> Result<(), ExperimentError> {
        let bad = |what: &str| {
            ExperimentError::Config(format!("line {lineno}: {key}: expected {what}, got `{value}`"))
        };
        match key.to_ascii_lowercase().as_str() {
            "experiment" => {
                self.kind = Some(match value.to_ascii_lowercase().as_str() {
                    "recovery" => ExperimentKind::Recovery,
                    "scaling" => ExperimentKind::Scaling,
                    "r_ell" | "r-ell" => ExperimentKind::REll,
                    "smoothness" => ExperimentKind::Smoothness,
                    _ => return Err(bad("recovery, scaling, r_ell, or smoothness")),
                })
            }
            "rules" => {
                self.rules = Some(
                    value
                        .split(',')
                        .map(|r| r.trim().to_string())
                        .filter(|r| !r.is_empty())
                        .collect(),
                )
            }
            "latent" => self.latent = Some(value.to_string()),
            "bias" => self.bias = Some(value.to_string()),
            "m" => self.m = Some(value.parse().map_err(|_| bad("an integer"))?),
            "k" => self.k = Some(value.parse().map_err(|_| bad("an integer"))?),
            "n" => self.n_grid = Some(parse_list(value).map_err(|_| bad("integers"))?),
            "n_min" => self.n_min = Some(value.parse().map_err(|_| bad("an integer"))?),
            "n_max" => self.n_max = Some(value.parse().map_err(|_| bad("an integer"))?),
            "lambda" => self.lambda_grid = Some(parse_list(value).map_err(|_| bad("decimals"))?),
            "theta" => self.theta_grid = Some(parse_list(value).map_err(|_| bad("decimals"))?),
            "trials" => self.trials = Some(value.parse().map_err(|_| bad("an integer"))?),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("an integer"))?),
            "delta" => self.delta = Some(value.parse().map_err(|_| bad("a decimal"))?),
            "epsilon" => self.epsilon = Some(value.parse().map_err(|_| bad("a decimal"))?),
            "phi" => self.phi = Some(value.parse().map_err(|_| bad("a decimal"))?),
            "samples" => self.samples = Some(value.parse().map_err(|_| bad("an integer"))?),
            "beta" => self.beta_grid = Some(parse_list(value).map_err(|_| bad("decimals"))?),
            "random_contexts" => {
                self.random_contexts = Some(value.parse().map_err(|_| bad("an integer"))?)
            }
            "ell" => self.ell_grid = Some(parse_list(value).map_err(|_| bad("integers"))?),
            "max_m" => self.max_m = Some(value.parse().map_err(|_| bad("an integer"))?),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => {
                return Err(ExperimentError::Config(format!(
                    "line {lineno}: unknown key `{key}`"
                )))
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig, ExperimentError> {
        let missing = |what: &str| ExperimentError::Config(format!("missing required key `{what}`"));
        Ok(ExperimentConfig {
            kind: self.kind.ok_or_else(|| missing("experiment"))?,
            rules: self.rules.ok_or_else(|| missing("rules"))?,
            latent: self.latent.ok_or_else(|| missing("latent"))?,
            bias: self.bias,
            m: self.m.ok_or_else(|| missing("m"))?,
            k: self.k.ok_or_else(|| missing("k"))?,
            n_grid: self.n_grid.unwrap_or_default(),
            n_min: self.n_min,
            n_max: self.n_max,
            lambda_grid: self.lambda_grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
            theta_grid: self.theta_grid.unwrap_or_default(),
            trials: self.trials.unwrap_or(25),
            seed: self.seed.ok_or_else(|| missing("seed"))?,
            delta: self.delta.unwrap_or(0.05),
            epsilon: self.epsilon.unwrap_or(0.1),
            phi: self.phi.unwrap_or(0.5),
            samples: self.samples.unwrap_or(0),
            beta_grid: self
                .beta_grid
                .unwrap_or_else(|| crate::smoothness::DEFAULT_BETA_GRID.to_vec()),
            random_contexts: self.random_contexts.unwrap_or(20),
            ell_grid: self.ell_grid,
            max_m: self.max_m.unwrap_or(12),
            out: self.out,
        })
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_recovery_config() {
        let config = ExperimentConfig::parse(
            "# comment\n\
             experiment = recovery\n\
             rules = borda, sntv\n\
             latent = ic\n\
             m = 10\n\
             k = 3  # trailing comment\n\
             n = 25, 50\n\
             lambda = 0, 0.5, 1\n\
             trials = 5\n\
             seed = 42\n",
        )
        .unwrap();
        config.validate().unwrap();
        assert_eq!(config.kind, ExperimentKind::Recovery);
        assert_eq!(config.rules, vec!["borda", "sntv"]);
        assert_eq!(config.n_grid, vec![25, 50]);
        assert_eq!(config.lambda_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(config.phi, 0.5);
        assert_eq!(config.trials, 5);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        assert!(ExperimentConfig::parse("experiment = recovery\nbogus = 1\n").is_err());
        let err = ExperimentConfig::parse(
            "experiment = recovery\nrules = borda\nlatent = ic\nm = 5\nk = 2\nn = 10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn validates_per_kind_requirements() {
        let mut config = ExperimentConfig::parse(
            "experiment = smoothness\nrules = borda\nlatent = ic\nm = 6\nk = 2\nseed = 1\nsamples = 100\n",
        )
        .unwrap();
        assert!(config.validate().is_err()); // no bias
        config.bias = Some("none".into());
        config.validate().unwrap();

        let config = ExperimentConfig::parse(
            "experiment = scaling\nrules = borda\nlatent = ic\nm = 6\nk = 2\nseed = 1\ntheta = 0.5\nn_min = 20\nn_max = 10\n",
        )
        .unwrap();
        assert!(config.validate().is_err());
    }
}
