//! Evaluation measures: marginal error, V-measure, matched Hamming error,
//! HMM predictive log-likelihood and particle-weighted averages.

use crate::error::{Error, Result};
use crate::hmm::{self, DenseHmm};
use crate::model::Particle;
use crate::particle::ParticleSet;

/// Summed L1 distance between two sequences of marginal distributions.
pub fn total_marginal_error(approx: &[Vec<f64>], exact: &[Vec<f64>]) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} time steps",
            approx.len(),
            exact.len()
        )));
    }
    let mut total = 0.0;
    for (t, (q, p)) in approx.iter().zip(exact).enumerate() {
        if q.len() != p.len() {
            return Err(Error::ShapeMismatch(format!("step {t}: {} vs {} states", q.len(), p.len())));
        }
        total += q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total)
}

/// Contingency counts between two labelings, as a dense `rows x cols` table.
fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = pred.iter().max().map_or(0, |m| m + 1);
    let cols = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; cols]; rows];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    Ok(table)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean (V-measure, beta = 1).
pub fn homogeneity_completeness_v(pred: &[usize], truth: &[usize]) -> Result<(f64, f64, f64)> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows = table.len();
    let cols = table[0].len();
    let pred_sizes: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let truth_sizes: Vec<usize> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();

    let h_truth = entropy(truth_sizes.iter().copied(), n);
    let h_pred = entropy(pred_sizes.iter().copied(), n);
    let mut h_truth_given_pred = 0.0;
    let mut h_pred_given_truth = 0.0;
    for p in 0..rows {
        for t in 0..cols {
            let c = table[p][t];
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            h_truth_given_pred -= joint * (c as f64 / pred_sizes[p] as f64).ln();
            h_pred_given_truth -= joint * (c as f64 / truth_sizes[t] as f64).ln();
        }
    }
    let homogeneity = if h_truth == 0.0 { 1.0 } else { 1.0 - h_truth_given_pred / h_truth };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - h_pred_given_truth / h_pred };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok((homogeneity, completeness, v))
}

/// V-measure of a predicted clustering against ground truth.
pub fn v_measure(pred: &[usize], truth: &[usize]) -> Result<f64> {
    homogeneity_completeness_v(pred, truth).map(|(_, _, v)| v)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns `assignment[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of positions that disagree under the label mapping that
/// maximizes overlap (one-to-one, unmatched labels count as errors).
pub fn matched_hamming(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = table.len().max(table[0].len());
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| {
            (0..size)
                .map(|t| -(table.get(p).and_then(|r| r.get(t)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let overlap: usize = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| table.get(p).and_then(|r| r.get(t)).copied().unwrap_or(0))
        .sum();
    Ok(1.0 - overlap as f64 / pred.len() as f64)
}

/// Unmatched (raw) Hamming distance as a fraction of the length.
pub fn hamming(pred: &[usize], truth: &[usize]) -> Result<f64> {
    contingency(pred, truth)?;
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Point-estimate HMM learned from a particle, with raw emission counts so
/// the emissions can be add-delta smoothed at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimateHmm {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// `emission_counts[state][symbol]`.
    pub emission_counts: Vec<Vec<f64>>,
}

impl PointEstimateHmm {
    /// Dense HMM with emission rows `(count + delta) / (total + S delta)`.
    pub fn smoothed(&self, delta: f64) -> DenseHmm {
        let emission = self
            .emission_counts
            .iter()
            .map(|row| {
                let s = row.len() as f64;
                let total: f64 = row.iter().sum();
                if delta.is_infinite() {
                    return vec![1.0 / s; row.len()];
                }
                row.iter().map(|c| (c + delta) / (total + s * delta)).collect()
            })
            .collect();
        DenseHmm {
            initial: self.initial.clone(),
            transition: self.transition.clone(),
            emission,
        }
    }
}

/// Forward-algorithm log-likelihood of `test` under the add-delta smoothed
/// point-estimate HMM.
pub fn predictive_loglik_hmm(learned: &PointEstimateHmm, test: &[usize], delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta must be non-negative"));
    }
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    hmm::log_likelihood(&learned.smoothed(delta), test)
}

/// `sum_k w_k * values[k]` for log-weights that normalize to one.
pub fn weighted_mean(log_weights: &[f64], values: &[f64]) -> f64 {
    log_weights
        .iter()
        .zip(values)
        .filter(|(w, _)| **w > f64::NEG_INFINITY)
        .map(|(w, v)| w.exp() * v)
        .sum()
}

/// Weight-averaged metric over a particle set.
pub fn weighted_particle_metric<S, F>(set: &ParticleSet<S>, mut metric: F) -> f64
where
    F: FnMut(&Particle<S>) -> f64,
{
    let values: Vec<f64> = set.particles.iter().map(&mut metric).collect();
    weighted_mean(&set.log_weights, &values)
}

/// Weighted per-variable marginals of a set of equal-length assignments.
pub fn particle_marginals(assignments: &[&[usize]], log_weights: &[f64], num_states: usize) -> Vec<Vec<f64>> {
    let n = assignments.first().map_or(0, |a| a.len());
    let mut marg = vec![vec![0.0; num_states]; n];
    for (a, w) in assignments.iter().zip(log_weights) {
        let w = w.exp();
        for (t, &v) in a.iter().enumerate() {
            marg[t][v] += w;
        }
    }
    marg
}
