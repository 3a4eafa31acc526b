//! Bootstrap particle filter over a model's prefix predictive, and exact
//! forward-backward for the parametric binary HMM.

use dpvi_core::math::{log_sum_exp, sample_log_categorical};
use dpvi_core::{ExactPosterior, Particle, SequentialModel};
use dpvi_models::BinaryHmmParams;
use rand::Rng;

use crate::error::{Error, Result};
use crate::resample::{ess, multinomial_resample, stratified_resample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResamplePolicy {
    Never,
    Multinomial,
    Stratified,
    /// Multinomial resampling whenever the ESS drops below the threshold.
    EssThreshold(f64),
}

impl ResamplePolicy {
    fn validate(&self, k: usize) -> Result<()> {
        if let ResamplePolicy::EssThreshold(t) = *self {
            if !(1.0..=k as f64).contains(&t) {
                return Err(Error::InvalidInput(format!("ESS threshold {t} outside [1, {k}]")));
            }
        }
        Ok(())
    }
}

/// Weighted trajectories. Duplicates are kept.
#[derive(Debug, Clone)]
pub struct FilterOutput<S> {
    pub particles: Vec<Particle<S>>,
    /// Normalized log-weights.
    pub log_weights: Vec<f64>,
    /// Estimate of the log marginal likelihood.
    pub log_evidence: f64,
    /// ESS after each step's weight update.
    pub ess: Vec<f64>,
    pub resamples: usize,
}

impl<S> FilterOutput<S> {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn marginals(&self, num_states: usize) -> Vec<Vec<f64>> {
        let assignments: Vec<&[usize]> = self.particles.iter().map(|p| p.assignment.as_slice()).collect();
        dpvi_core::metrics::particle_marginals(&assignments, &self.log_weights, num_states)
    }
}

/// Runs `k` particles through the model, proposing each value from the
/// normalized prefix predictive. The final step is never resampled.
pub fn particle_filter<M, R>(model: &M, k: usize, policy: ResamplePolicy, rng: &mut R) -> Result<FilterOutput<M::Stats>>
where
    M: SequentialModel,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::InvalidInput("K must be positive".into()));
    }
    policy.validate(k)?;
    let n_vars = model.num_vars();
    let mut particles = vec![model.empty_prefix(); k];
    let mut log_w = vec![-(k as f64).ln(); k];
    let mut ess_trace = Vec::with_capacity(n_vars);
    let mut resamples = 0;
    for step in 0..n_vars {
        for (p, w) in particles.iter_mut().zip(log_w.iter_mut()) {
            if *w == f64::NEG_INFINITY {
                continue;
            }
            let scores = model.prefix_log_scores(p)?;
            let norm = log_sum_exp(&scores);
            if norm == f64::NEG_INFINITY {
                *w = f64::NEG_INFINITY;
                continue;
            }
            let m = sample_log_categorical(&scores, rng);
            *w += norm - p.log_score;
            *p = model.extend(p, m, scores[m])?;
        }
        let total = log_sum_exp(&log_w);
        if total == f64::NEG_INFINITY {
            return Err(Error::FilterDegenerate { step });
        }
        let weights: Vec<f64> = log_w.iter().map(|w| (w - total).exp()).collect();
        let e = ess(&weights);
        ess_trace.push(e);
        if step + 1 == n_vars {
            break;
        }
        let ancestors = match policy {
            ResamplePolicy::Never => None,
            ResamplePolicy::Multinomial => Some(multinomial_resample(&weights, k, rng)),
            ResamplePolicy::Stratified => Some(stratified_resample(&weights, k, rng)),
            ResamplePolicy::EssThreshold(t) if e < t => Some(multinomial_resample(&weights, k, rng)),
            ResamplePolicy::EssThreshold(_) => None,
        };
        if let Some(ancestors) = ancestors {
            particles = ancestors.iter().map(|&a| particles[a].clone()).collect();
            log_w = vec![total - (k as f64).ln(); k];
            resamples += 1;
        }
    }
    let log_evidence = log_sum_exp(&log_w);
    Ok(FilterOutput {
        particles,
        log_weights: log_w.iter().map(|w| w - log_evidence).collect(),
        log_evidence,
        ess: ess_trace,
        resamples,
    })
}

/// Exact posterior marginals and log-likelihood of the binary HMM.
pub fn forward_backward(params: &BinaryHmmParams, obs: &[usize]) -> Result<ExactPosterior> {
    let (marginals, log_z) = dpvi_core::hmm::forward_backward(&params.to_dense(), obs)?;
    Ok(ExactPosterior {
        log_z,
        marginals,
        joint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpvi_core::DiscreteModel;
    use dpvi_models::BinaryHmm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_particle_is_an_ancestral_sample() {
        let params = BinaryHmmParams::reference();
        let model = BinaryHmm::new(params, vec![0, 1, 1, 0, 1]).unwrap();
        let out = particle_filter(&model, 1, ResamplePolicy::Never, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(out.particles.len(), 1);
        assert_eq!(out.log_weights, vec![0.0]);
        assert_eq!(out.resamples, 0);
        let p = &out.particles[0];
        assert!((p.log_score - model.full_log_score(&p.assignment).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn threshold_must_lie_in_range() {
        let model = BinaryHmm::new(BinaryHmmParams::reference(), vec![0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            particle_filter(&model, 4, ResamplePolicy::EssThreshold(5.0), &mut rng),
            Err(Error::InvalidInput(_))
        ));
        assert!(particle_filter(&model, 0, ResamplePolicy::Never, &mut rng).is_err());
    }

    #[test]
    fn length_one_marginal_is_prior_times_emission() {
        let params = BinaryHmmParams::reference();
        let exact = forward_backward(&params, &[1]).unwrap();
        let joint: Vec<f64> = (0..2).map(|s| params.initial[s] * params.emission(s, 1)).collect();
        let z: f64 = joint.iter().sum();
        for s in 0..2 {
            assert!((exact.marginals[0][s] - joint[s] / z).abs() < 1e-12);
        }
        assert!((exact.log_z - z.ln()).abs() < 1e-12);
    }
}
