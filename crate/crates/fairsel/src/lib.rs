//! Subset selection from multiple, possibly biased, rankings.
//!
//! The crate selects size-k committees by maximizing multiwinner score
//! functions over voter preference profiles, models how observed rankings
//! deviate from latent ones (utility scaling, rank swapping, mixtures),
//! enforces representational constraints during selection, and estimates
//! by Monte Carlo how smoothly a score function survives a given bias —
//! the quantities that govern how many voters the constrained selection
//! needs to recover a near-optimal latent committee.
//!
//! Modules:
//! - [`preferences`]: candidates, groups, strict rankings, Kendall-Tau.
//! - [`scoring`]: score functions, marginals, rule diagnostics.
//! - [`genmodels`]: latent preference samplers and bias transformations.
//! - [`selection`]: greedy and constrained-greedy selection, brute-force
//!   oracle.
//! - [`smoothness`]: marginal-mean tables, alpha/gamma estimation,
//!   order-preservation audits, concentration bounds.
//! - [`experiments`]: the config-driven harness behind the `fairsel` CLI.

pub mod experiments;
pub mod genmodels;
pub mod preferences;
pub mod scoring;
pub mod selection;
pub mod smoothness;
pub mod stream;

pub use preferences::{CandidateId, Group, GroupPartition, PreferenceList, Profile};
pub use scoring::{RuleDiagnostics, RuleSpec};
pub use stream::TrialStream;
