//! Naive mean-field for the Ising lattice.

use dpvi_core::math::binary_entropy;
use dpvi_models::IsingLattice;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Weight kept on the old mean in each update; 0 is plain coordinate ascent.
    pub damping: f64,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig {
            tol: 1e-10,
            max_iters: 1000,
            damping: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    /// Spin means in [-1, 1], raster order.
    pub means: Vec<f64>,
    /// Largest change in the last sweep.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldResult {
    pub state: MeanFieldState,
    pub bound: f64,
    /// Bound before the first sweep and after every sweep.
    pub trace: Vec<f64>,
}

fn field(lattice: &IsingLattice, means: &[f64], i: usize) -> f64 {
    lattice.beta() * lattice.neighbors(i).map(|j| means[j]).sum::<f64>() + lattice.theta()[i]
}

/// Lower bound on log Z for independent spins with the given means.
pub fn mean_field_bound(lattice: &IsingLattice, means: &[f64]) -> f64 {
    let mut energy = 0.0;
    for i in 0..means.len() {
        energy += lattice.theta()[i] * means[i];
        energy += lattice.beta() * lattice.neighbors(i).filter(|&j| j > i).map(|j| means[i] * means[j]).sum::<f64>();
    }
    energy + means.iter().map(|m| binary_entropy((1.0 + m) / 2.0)).sum::<f64>()
}

/// Raster-scan updates `m_i <- tanh(beta * sum_nbr m_j + theta_i)` until the
/// largest change is below `tol`.
pub fn mean_field_ising(lattice: &IsingLattice, init: &[f64], config: MeanFieldConfig) -> Result<MeanFieldResult> {
    let n = lattice.side() * lattice.side();
    if init.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} initial means, got {}", init.len())));
    }
    if init.iter().any(|m| !(-1.0..=1.0).contains(m)) {
        return Err(Error::InvalidInput("initial means must lie in [-1, 1]".into()));
    }
    if !(config.tol > 0.0) || !(0.0..1.0).contains(&config.damping) {
        return Err(Error::InvalidInput("need tol > 0 and damping in [0, 1)".into()));
    }
    let mut means = init.to_vec();
    let mut trace = vec![mean_field_bound(lattice, &means)];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iters && residual >= config.tol {
        residual = 0.0;
        for i in 0..n {
            let target = field(lattice, &means, i).tanh();
            let updated = config.damping * means[i] + (1.0 - config.damping) * target;
            residual = f64::max(residual, (updated - means[i]).abs());
            means[i] = updated;
        }
        iterations += 1;
        trace.push(mean_field_bound(lattice, &means));
    }
    Ok(MeanFieldResult {
        bound: *trace.last().expect("trace starts non-empty"),
        state: MeanFieldState {
            means,
            residual,
            iterations,
        },
        trace,
    })
}
