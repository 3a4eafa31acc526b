//! Discrete particle variational inference.
//!
//! A particle approximation places K unique weighted assignments on a
//! discrete space. With weights proportional to the unnormalized target
//! scores, the negative variational free energy of the set equals the log of
//! the summed scores, a lower bound on `log Z`. [`engine`] improves that
//! bound by coordinate ascent: each step rescores every single-variable
//! modification of every particle and keeps the top K unique candidates.
//!
//! Models plug in through [`model::DiscreteModel`] (and
//! [`model::SequentialModel`] for left-to-right filtering).

pub mod engine;
pub mod error;
pub mod hmm;
pub mod math;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod particle;
pub mod partition;

pub use engine::{
    expand_candidates, expand_prefixes, fates, init_from_prior, local_dpvi, local_dpvi_with, select_top_k,
    select_top_k_prefixes, sequential_dpvi, smoothing_dpvi, BoundTrace, Candidate, Fate, LocalConfig,
};
pub use error::{Error, Result};
pub use model::{Assignment, CanonicalKey, DiscreteModel, Particle, SequentialModel};
pub use oracle::{audit_particle, audit_prefix, brute_force, ExactPosterior};
pub use particle::{compute_log_weights, replica_bound, variational_bound, ParticleSet};
