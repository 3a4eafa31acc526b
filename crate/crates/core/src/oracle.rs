//! Exhaustive enumeration oracle and cache audits.

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{Assignment, DiscreteModel, Particle, SequentialModel};

/// Default enumeration cap.
pub const DEFAULT_CAP: u128 = 1 << 20;

/// Joint tables are kept only up to this many assignments.
const JOINT_TABLE_CAP: usize = 1 << 16;

/// Exact posterior of a small model.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub log_z: f64,
    /// `marginals[n][v]` = P(x_n = v), over canonical values.
    pub marginals: Vec<Vec<f64>>,
    /// Every assignment with its log-score, in enumeration order.
    pub joint: Option<Vec<(Assignment, f64)>>,
}

impl ExactPosterior {
    /// Posterior probability of an assignment, when the joint table was kept.
    pub fn probability(&self, assignment: &[usize]) -> Option<f64> {
        let joint = self.joint.as_ref()?;
        joint
            .iter()
            .find(|(a, _)| a.as_slice() == assignment)
            .map(|(_, s)| (s - self.log_z).exp())
    }
}

fn count_assignments<M: DiscreteModel>(model: &M, prefix: &mut Vec<usize>, cap: u128, count: &mut u128) {
    if *count > cap {
        return;
    }
    if prefix.len() == model.num_vars() {
        *count += 1;
        return;
    }
    for v in 0..model.enumeration_arity(prefix) {
        prefix.push(v);
        count_assignments(model, prefix, cap, count);
        prefix.pop();
        if *count > cap {
            return;
        }
    }
}

fn visit<M: DiscreteModel, F: FnMut(&[usize]) -> Result<()>>(
    model: &M,
    prefix: &mut Vec<usize>,
    f: &mut F,
) -> Result<()> {
    if prefix.len() == model.num_vars() {
        return f(prefix);
    }
    for v in 0..model.enumeration_arity(prefix) {
        prefix.push(v);
        visit(model, prefix, f)?;
        prefix.pop();
    }
    Ok(())
}

/// Number of canonical assignments, or `None` once it exceeds `cap`.
pub fn enumeration_size<M: DiscreteModel>(model: &M, cap: u128) -> Option<u128> {
    if let Some(size) = model.enumeration_size() {
        return (size <= cap).then_some(size);
    }
    let mut count = 0;
    count_assignments(model, &mut Vec::new(), cap, &mut count);
    (count <= cap).then_some(count)
}

/// Enumerates every canonical assignment and computes `log Z` and all
/// single-variable marginals.
pub fn brute_force<M: DiscreteModel>(model: &M, cap: u128) -> Result<ExactPosterior> {
    if enumeration_size(model, cap).is_none() {
        // Without a closed form only a lower bound on the size is known.
        let required = model.enumeration_size().unwrap_or(cap + 1);
        return Err(Error::CapExceeded { required, cap });
    }

    let mut scores = Vec::new();
    let mut joint = Vec::new();
    visit(model, &mut Vec::new(), &mut |a| {
        let s = model.full_log_score(a)?;
        scores.push(s);
        if joint.len() < JOINT_TABLE_CAP {
            joint.push((a.to_vec(), s));
        }
        Ok(())
    })?;
    let log_z = log_sum_exp(&scores);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }

    let mut marginals: Vec<Vec<f64>> = vec![Vec::new(); model.num_vars()];
    let mut i = 0;
    visit(model, &mut Vec::new(), &mut |a| {
        let p = (scores[i] - log_z).exp();
        i += 1;
        for (n, &v) in a.iter().enumerate() {
            if marginals[n].len() <= v {
                marginals[n].resize(v + 1, 0.0);
            }
            marginals[n][v] += p;
        }
        Ok(())
    })?;

    let joint = (scores.len() <= JOINT_TABLE_CAP).then_some(joint);
    Ok(ExactPosterior {
        log_z,
        marginals,
        joint,
    })
}

/// Absolute drift between a particle's cached log-score and a from-scratch
/// recomputation. Infinite when the recomputation fails.
pub fn audit_particle<M: DiscreteModel>(model: &M, particle: &Particle<M::Stats>) -> f64 {
    match model.full_log_score(&particle.assignment) {
        Ok(s) if s == particle.log_score => 0.0,
        Ok(s) => (s - particle.log_score).abs(),
        Err(_) => f64::INFINITY,
    }
}

/// [`audit_particle`] for a prefix particle of a sequential model.
pub fn audit_prefix<M: SequentialModel>(model: &M, prefix: &Particle<M::Stats>) -> f64 {
    match model.prefix_log_score(&prefix.assignment) {
        Ok(s) if s == prefix.log_score => 0.0,
        Ok(s) => (s - prefix.log_score).abs(),
        Err(_) => f64::INFINITY,
    }
}
