//! Systematic-scan collapsed Gibbs sampling over the same conditionals the
//! local DPVI sweeps use.

use dpvi_core::math::sample_log_categorical;
use dpvi_core::{DiscreteModel, Particle};
use rand::Rng;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GibbsTrace<S> {
    /// State after the last sweep.
    pub state: Particle<S>,
    /// Joint log-score after each sweep.
    pub log_scores: Vec<f64>,
}

/// Runs `sweeps` systematic scans from `init`.
pub fn collapsed_gibbs<M, R>(model: &M, init: Particle<M::Stats>, sweeps: usize, rng: &mut R) -> Result<GibbsTrace<M::Stats>>
where
    M: DiscreteModel,
    R: Rng + ?Sized,
{
    collapsed_gibbs_with(model, init, sweeps, rng, |_, _| {})
}

/// [`collapsed_gibbs`] with a callback after every sweep (sweep index from 1).
pub fn collapsed_gibbs_with<M, R, F>(
    model: &M,
    init: Particle<M::Stats>,
    sweeps: usize,
    rng: &mut R,
    mut on_sweep: F,
) -> Result<GibbsTrace<M::Stats>>
where
    M: DiscreteModel,
    R: Rng + ?Sized,
    F: FnMut(usize, &Particle<M::Stats>),
{
    let mut state = init;
    let mut log_scores = Vec::with_capacity(sweeps);
    for sweep in 1..=sweeps {
        for n in 0..model.num_vars() {
            let scores = model.candidate_log_scores(&state, n)?;
            let m = sample_log_categorical(&scores, rng);
            state = model.materialize(&state, n, m, scores[m])?;
        }
        log_scores.push(state.log_score);
        on_sweep(sweep, &state);
    }
    Ok(GibbsTrace { state, log_scores })
}
