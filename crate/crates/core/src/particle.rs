//! Particle sets and their variational bound.
//!
//! For K unique particles the optimal weights are proportional to the
//! particle scores and the negative free energy collapses to the log of the
//! summed scores. Everything here works in natural-log space.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::Particle;

/// Optimal log-weights for a set of unique particles:
/// `log_scores - logsumexp(log_scores)`.
pub fn compute_log_weights(log_scores: &[f64]) -> Result<Vec<f64>> {
    let z = log_sum_exp(log_scores);
    if z == f64::NEG_INFINITY || z.is_nan() {
        return Err(Error::EmptySupport);
    }
    Ok(log_scores.iter().map(|&s| s - z).collect())
}

/// The variational approximation: unique particles with normalized weights.
#[derive(Debug, Clone)]
pub struct ParticleSet<S> {
    pub particles: Vec<Particle<S>>,
    pub log_weights: Vec<f64>,
    /// Index of each particle's parent in the set it was selected from.
    /// Empty for sets that were not produced by a selection step.
    pub parents: Vec<usize>,
}

impl<S> ParticleSet<S> {
    pub fn new(particles: Vec<Particle<S>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptySet);
        }
        let scores: Vec<f64> = particles.iter().map(|p| p.log_score).collect();
        let log_weights = compute_log_weights(&scores)?;
        Ok(ParticleSet {
            particles,
            log_weights,
            parents: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn log_scores(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_score).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `L[Q] = log Z_Q`, the log of the summed particle scores.
    pub fn variational_bound(&self) -> Result<f64> {
        variational_bound(self)
    }

    /// Index of the highest-weight particle (first on ties).
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (k, p) in self.particles.iter().enumerate() {
            if p.log_score > self.particles[best].log_score {
                best = k;
            }
        }
        best
    }
}

pub fn variational_bound<S>(set: &ParticleSet<S>) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(log_sum_exp(&set.log_scores()))
}

/// Negative free energy of a particle approximation whose slots may hold
/// replicas. `multiplicities[k]` is the number of slots holding the same
/// assignment as slot `k`; it must match the duplicate count in `keys`.
///
/// Evaluates `sum_k w_k log(f_k / (w_k V_k))` with `w_k ∝ f_k / V_k`.
pub fn replica_bound<K: Hash + Eq>(keys: &[K], log_scores: &[f64], multiplicities: &[usize]) -> Result<f64> {
    if keys.len() != log_scores.len() || keys.len() != multiplicities.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} keys, {} scores, {} multiplicities",
            keys.len(),
            log_scores.len(),
            multiplicities.len()
        )));
    }
    if keys.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut counts: HashMap<&K, usize> = HashMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    for (k, (key, &v)) in keys.iter().zip(multiplicities).enumerate() {
        if v == 0 || counts[key] != v {
            return Err(Error::InconsistentMultiplicity(format!(
                "slot {k} declares V={v}, actual count {}",
                counts[key]
            )));
        }
    }
    let adjusted: Vec<f64> = log_scores
        .iter()
        .zip(multiplicities)
        .map(|(&s, &v)| s - (v as f64).ln())
        .collect();
    let log_zq = log_sum_exp(&adjusted);
    if log_zq == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut bound = 0.0;
    for (&s, &v) in log_scores.iter().zip(multiplicities) {
        if s == f64::NEG_INFINITY {
            continue;
        }
        let log_w = s - (v as f64).ln() - log_zq;
        bound += log_w.exp() * (s - log_w - (v as f64).ln());
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn particle(score: f64) -> Particle<()> {
        Particle {
            assignment: vec![],
            log_score: score,
            stats: (),
        }
    }

    #[test]
    fn two_particle_weights() {
        let w = compute_log_weights(&[2f64.ln(), 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(w[0], 0.4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.6f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn single_particle_has_unit_weight() {
        assert_eq!(compute_log_weights(&[-17.25]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_score_particles_get_zero_weight() {
        let w = compute_log_weights(&[0.0, f64::NEG_INFINITY, 0.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.5f64.ln(), epsilon = 1e-15);
        assert_eq!(w[1], f64::NEG_INFINITY);
        assert_abs_diff_eq!(w[2], 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn all_impossible_is_an_error() {
        assert_eq!(
            compute_log_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(Error::EmptySupport)
        );
    }

    #[test]
    fn bound_is_log_of_summed_scores() {
        let set = ParticleSet::new(vec![particle(2f64.ln()), particle(3f64.ln())]).unwrap();
        assert_abs_diff_eq!(set.variational_bound().unwrap(), 5f64.ln(), epsilon = 1e-15);
        let single = ParticleSet::new(vec![particle(1.25)]).unwrap();
        assert_eq!(single.variational_bound().unwrap(), 1.25);
        let total: f64 = set.weights().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(ParticleSet::<()>::new(vec![]), Err(Error::EmptySet)));
    }

    #[test]
    fn replica_of_single_particle() {
        let f = 7f64.ln();
        let b = replica_bound(&[1, 1], &[f, f], &[2, 2]).unwrap();
        assert_abs_diff_eq!(b, f, epsilon = 1e-12);
    }

    #[test]
    fn unique_pair_beats_replicated_best() {
        let unique = replica_bound(&[0, 1], &[2f64.ln(), 3f64.ln()], &[1, 1]).unwrap();
        let replicated = replica_bound(&[1, 1], &[3f64.ln(), 3f64.ln()], &[2, 2]).unwrap();
        assert_abs_diff_eq!(unique, 5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(replicated, 3f64.ln(), epsilon = 1e-12);
        assert!(unique > replicated);
    }

    #[test]
    fn multiplicities_must_match_duplicates() {
        let r = replica_bound(&[1, 1, 2], &[0.0, 0.0, 0.0], &[1, 2, 1]);
        assert!(matches!(r, Err(Error::InconsistentMultiplicity(_))));
        let r = replica_bound(&[1, 2], &[0.0, 0.0], &[1]);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
