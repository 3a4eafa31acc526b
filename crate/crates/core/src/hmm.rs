//! Log-space forward and backward recursions for a finite-state HMM with
//! fixed parameters.

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Finite-state HMM with probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHmm {
    pub initial: Vec<f64>,
    /// `transition[i][j]` = P(x_{t+1} = j | x_t = i).
    pub transition: Vec<Vec<f64>>,
    /// `emission[i][s]` = P(y_t = s | x_t = i).
    pub emission: Vec<Vec<f64>>,
}

impl DenseHmm {
    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.emission.first().map_or(0, Vec::len)
    }

    fn validate(&self, obs: &[usize]) -> Result<()> {
        let k = self.num_states();
        if k == 0 {
            return Err(Error::invalid("HMM has no states"));
        }
        if self.transition.len() != k || self.transition.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch("transition matrix must be square".into()));
        }
        if self.emission.len() != k {
            return Err(Error::ShapeMismatch("one emission row per state".into()));
        }
        let s = self.num_symbols();
        if self.emission.iter().any(|r| r.len() != s) {
            return Err(Error::ShapeMismatch("emission rows differ in length".into()));
        }
        if let Some(&bad) = obs.iter().find(|&&o| o >= s) {
            return Err(Error::invalid(format!("symbol {bad} outside alphabet of {s}")));
        }
        Ok(())
    }

    fn log_tables(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let ln = |r: &Vec<f64>| r.iter().map(|p| p.ln()).collect::<Vec<_>>();
        (ln(&self.initial), self.transition.iter().map(ln).collect(), self.emission.iter().map(ln).collect())
    }
}

/// Log forward messages `log P(y_{1:t}, x_t)` and the sequence
/// log-likelihood.
pub fn forward(hmm: &DenseHmm, obs: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
    hmm.validate(obs)?;
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = hmm.num_states();
    let (li, lt, le) = hmm.log_tables();
    let mut alpha = Vec::with_capacity(obs.len());
    alpha.push((0..k).map(|i| li[i] + le[i][obs[0]]).collect::<Vec<_>>());
    let mut terms = vec![0.0; k];
    for &o in &obs[1..] {
        let prev = alpha.last().expect("alpha non-empty");
        let row = (0..k)
            .map(|j| {
                for i in 0..k {
                    terms[i] = prev[i] + lt[i][j];
                }
                log_sum_exp(&terms) + le[j][o]
            })
            .collect();
        alpha.push(row);
    }
    let loglik = log_sum_exp(alpha.last().expect("alpha non-empty"));
    Ok((alpha, loglik))
}

/// Sequence log-likelihood.
pub fn log_likelihood(hmm: &DenseHmm, obs: &[usize]) -> Result<f64> {
    forward(hmm, obs).map(|(_, ll)| ll)
}

/// Posterior marginals `P(x_t | y_{1:T})` and the sequence log-likelihood.
pub fn forward_backward(hmm: &DenseHmm, obs: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
    let (alpha, loglik) = forward(hmm, obs)?;
    let k = hmm.num_states();
    let (_, lt, le) = hmm.log_tables();
    let t_len = obs.len();
    let mut beta = vec![vec![0.0; k]; t_len];
    let mut terms = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                terms[j] = lt[i][j] + le[j][obs[t + 1]] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&terms);
        }
    }
    let marginals = (0..t_len)
        .map(|t| {
            let mut row: Vec<f64> = (0..k).map(|i| alpha[t][i] + beta[t][i]).collect();
            let z = log_sum_exp(&row);
            for v in row.iter_mut() {
                *v = (*v - z).exp();
            }
            row
        })
        .collect();
    Ok((marginals, loglik))
}
