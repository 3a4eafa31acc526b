//! The scoring interface every model implements.
//!
//! Scores are natural-log unnormalized joint probabilities. Candidate and
//! prefix scores are full joint log-scores of the modified (or extended)
//! assignment, so the optimizer can compare candidates coming from different
//! parent particles directly. How a model computes them (local clique ratios,
//! sufficient-statistic deltas, replay) is its own business.

use std::fmt::Debug;

use rand::Rng;

use crate::error::Result;

/// A length-N vector of discrete values, one per latent variable.
pub type Assignment = Vec<usize>;

/// Label-invariant identity of an assignment, used for particle uniqueness.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub Box<[u32]>);

impl CanonicalKey {
    pub fn from_values(values: &[usize]) -> Self {
        CanonicalKey(values.iter().map(|&v| v as u32).collect())
    }
}

/// One support point of the approximation: an assignment, its cached
/// log-score and the model's cached sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle<S> {
    pub assignment: Assignment,
    pub log_score: f64,
    pub stats: S,
}

impl<S> Particle<S> {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

pub trait DiscreteModel {
    /// Per-particle cache enabling cheap rescoring.
    type Stats: Clone + Debug;

    /// Number of latent variables N.
    fn num_vars(&self) -> usize;

    /// Log-score of a complete assignment, computed from scratch.
    fn full_log_score(&self, assignment: &[usize]) -> Result<f64>;

    /// Builds the stats cache for a complete assignment from scratch.
    fn build_stats(&self, assignment: &[usize]) -> Result<Self::Stats>;

    /// Number of values variable `n` can take in `particle`'s neighbourhood.
    /// Growing-support models report the number of occupied clusters (with
    /// `n` removed) plus one fresh label.
    fn support(&self, particle: &Particle<Self::Stats>, n: usize) -> usize;

    /// Full joint log-scores of `particle` with variable `n` set to each of
    /// its `support` values. The value that reproduces the particle's own
    /// assignment must return `particle.log_score` exactly.
    fn candidate_log_scores(&self, particle: &Particle<Self::Stats>, n: usize) -> Result<Vec<f64>>;

    /// The assignment obtained by setting variable `n` to candidate value `m`.
    fn candidate_assignment(&self, particle: &Particle<Self::Stats>, n: usize, m: usize) -> Assignment {
        let mut a = particle.assignment.clone();
        a[n] = m;
        a
    }

    /// Materializes the candidate `(n, m)` with an already computed score.
    fn materialize(
        &self,
        particle: &Particle<Self::Stats>,
        n: usize,
        m: usize,
        log_score: f64,
    ) -> Result<Particle<Self::Stats>>;

    /// Canonical identity of an assignment (or of a prefix).
    fn canonical_key(&self, assignment: &[usize]) -> CanonicalKey {
        CanonicalKey::from_values(assignment)
    }

    /// Number of canonical values variable `prefix.len()` can take given the
    /// earlier values. Used by exhaustive enumeration.
    fn enumeration_arity(&self, prefix: &[usize]) -> usize;

    /// Closed-form count of canonical assignments, when known (saturating).
    fn enumeration_size(&self) -> Option<u128> {
        None
    }

    /// Draws an assignment from the model's prior.
    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment;

    /// Checks that `particle.stats` agrees with `particle.assignment`.
    fn check_stats(&self, particle: &Particle<Self::Stats>) -> Result<()> {
        let _ = particle;
        Ok(())
    }

    /// Builds a fresh particle for a complete assignment.
    fn particle(&self, assignment: Assignment) -> Result<Particle<Self::Stats>> {
        let stats = self.build_stats(&assignment)?;
        let log_score = self.full_log_score(&assignment)?;
        Ok(Particle {
            assignment,
            log_score,
            stats,
        })
    }
}

/// Models that can score left-to-right extensions of a prefix. After the
/// last variable the prefix score equals [`DiscreteModel::full_log_score`].
pub trait SequentialModel: DiscreteModel {
    /// The zero-length prefix, with log-score 0.
    fn empty_prefix(&self) -> Particle<Self::Stats>;

    /// Joint log-scores of `prefix` extended by each value of the next
    /// variable (index `prefix.len()`).
    fn prefix_log_scores(&self, prefix: &Particle<Self::Stats>) -> Result<Vec<f64>>;

    /// Extends the prefix by value `m` with an already computed score.
    fn extend(&self, prefix: &Particle<Self::Stats>, m: usize, log_score: f64) -> Result<Particle<Self::Stats>>;

    /// Log-score of a prefix computed from scratch.
    fn prefix_log_score(&self, prefix: &[usize]) -> Result<f64>;
}
