//! Conjugate Gaussian likelihoods with the component parameters integrated
//! out: diagonal Normal-Inverse-Gamma and full Normal-Inverse-Wishart, both
//! with prior mean zero.

use std::f64::consts::PI;
use std::fmt::Debug;

use dpvi_core::math::ln_gamma;
use dpvi_core::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};

/// Collapsed likelihood of the points in one cluster.
pub trait Conjugate: Clone + Debug {
    type Stats: Clone + Debug + PartialEq;

    fn dim(&self) -> usize;

    fn empty(&self) -> Self::Stats;

    fn count(&self, stats: &Self::Stats) -> usize;

    fn add(&self, stats: &mut Self::Stats, y: &[f64]) -> Result<()>;

    /// Removes a point previously added. Fails if the cluster is empty.
    fn remove(&self, stats: &mut Self::Stats, y: &[f64]) -> Result<()>;

    /// `log p(y | points in the cluster)`.
    fn log_predictive(&self, stats: &Self::Stats, y: &[f64]) -> f64;

    /// `log p(points in the cluster)`.
    fn log_marginal(&self, stats: &Self::Stats) -> f64;
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn log_student_t(y: f64, loc: f64, scale2: f64, dof: f64) -> f64 {
    let z = (y - loc) * (y - loc) / (dof * scale2);
    ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * PI * scale2).ln() - (dof + 1.0) / 2.0 * z.ln_1p()
}

fn check_dim(y: &[f64], dim: usize) -> Result<()> {
    if y.len() != dim {
        return Err(Error::ShapeMismatch(format!("point of dimension {} for a {dim}-dimensional model", y.len())));
    }
    Ok(())
}

/// Per-dimension `y_d ~ N(m_d, s_d^2)`, `m_d ~ N(0, s_d^2 / tau)`,
/// `s_d^2 ~ IG(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nig {
    pub dim: usize,
    pub tau: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NigStats {
    pub count: usize,
    pub sum: Vec<CompensatedSum>,
    pub sum_sq: Vec<CompensatedSum>,
}

impl Nig {
    pub fn new(dim: usize, tau: f64, a: f64, b: f64) -> Result<Self> {
        if dim == 0 || !(tau > 0.0 && a > 0.0 && b > 0.0) {
            return Err(Error::invalid("NIG needs dim >= 1 and positive tau, a, b"));
        }
        Ok(Nig { dim, tau, a, b })
    }

    /// Posterior `(tau_n, mean, a_n, b_n)` of dimension `d`.
    fn posterior(&self, s: &NigStats, d: usize) -> (f64, f64, f64, f64) {
        let n = s.count as f64;
        let tau_n = self.tau + n;
        let sum = s.sum[d].value();
        let sq = s.sum_sq[d].value();
        let spread = (sq - sum * sum / tau_n).max(0.0);
        (tau_n, sum / tau_n, self.a + n / 2.0, self.b + 0.5 * spread)
    }
}

impl Conjugate for Nig {
    type Stats = NigStats;

    fn dim(&self) -> usize {
        self.dim
    }

    fn empty(&self) -> NigStats {
        NigStats {
            count: 0,
            sum: vec![CompensatedSum::default(); self.dim],
            sum_sq: vec![CompensatedSum::default(); self.dim],
        }
    }

    fn count(&self, s: &NigStats) -> usize {
        s.count
    }

    fn add(&self, s: &mut NigStats, y: &[f64]) -> Result<()> {
        check_dim(y, self.dim)?;
        s.count += 1;
        for (d, &v) in y.iter().enumerate() {
            s.sum[d].add(v);
            s.sum_sq[d].add(v * v);
        }
        Ok(())
    }

    fn remove(&self, s: &mut NigStats, y: &[f64]) -> Result<()> {
        check_dim(y, self.dim)?;
        if s.count == 0 {
            return Err(Error::StatsUnderflow("removing a point from an empty cluster".into()));
        }
        s.count -= 1;
        if s.count == 0 {
            *s = self.empty();
            return Ok(());
        }
        for (d, &v) in y.iter().enumerate() {
            s.sum[d].add(-v);
            s.sum_sq[d].add(-v * v);
        }
        Ok(())
    }

    fn log_predictive(&self, s: &NigStats, y: &[f64]) -> f64 {
        (0..self.dim)
            .map(|d| {
                let (tau_n, mean, a_n, b_n) = self.posterior(s, d);
                log_student_t(y[d], mean, b_n * (tau_n + 1.0) / (a_n * tau_n), 2.0 * a_n)
            })
            .sum()
    }

    fn log_marginal(&self, s: &NigStats) -> f64 {
        let n = s.count as f64;
        (0..self.dim)
            .map(|d| {
                let (tau_n, _, a_n, b_n) = self.posterior(s, d);
                ln_gamma(a_n) - ln_gamma(self.a) + self.a * self.b.ln() - a_n * b_n.ln()
                    + 0.5 * (self.tau / tau_n).ln()
                    - 0.5 * n * (2.0 * PI).ln()
            })
            .sum()
    }
}

/// `y ~ N(m, L)`, `m ~ N(0, L / tau)`, `L ~ IW(scale, nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Niw {
    pub tau: f64,
    pub nu: f64,
    pub scale: DMatrix<f64>,
    ln_det_scale: f64,
    empty: NiwStats,
}

/// Welford mean and scatter, plus the cached predictive Student-t.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwStats {
    pub count: usize,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
    predictive: Predictive,
}

#[derive(Debug, Clone, PartialEq)]
struct Predictive {
    loc: DVector<f64>,
    chol: DMatrix<f64>,
    ln_norm: f64,
    dof: f64,
}

fn ln_multi_gamma(x: f64, dim: usize) -> f64 {
    let d = dim as f64;
    d * (d - 1.0) / 4.0 * PI.ln() + (1..=dim).map(|j| ln_gamma(x + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

fn ln_det_chol(chol: &DMatrix<f64>) -> f64 {
    2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl Niw {
    pub fn new(scale: DMatrix<f64>, nu: f64, tau: f64) -> Result<Self> {
        let dim = scale.nrows();
        if dim == 0 || scale.ncols() != dim {
            return Err(Error::ShapeMismatch("NIW scale must be a non-empty square matrix".into()));
        }
        if !(tau > 0.0) || !(nu > dim as f64 - 1.0) {
            return Err(Error::invalid(format!("NIW needs tau > 0 and nu > {}", dim - 1)));
        }
        let chol = Cholesky::new(scale.clone())
            .ok_or_else(|| Error::invalid("NIW scale matrix is not positive definite"))?;
        let ln_det_scale = ln_det_chol(&chol.l());
        let mut niw = Niw {
            tau,
            nu,
            scale,
            ln_det_scale,
            empty: NiwStats {
                count: 0,
                mean: DVector::zeros(dim),
                scatter: DMatrix::zeros(dim, dim),
                predictive: Predictive {
                    loc: DVector::zeros(dim),
                    chol: DMatrix::zeros(dim, dim),
                    ln_norm: 0.0,
                    dof: 0.0,
                },
            },
        };
        let mut empty = niw.empty.clone();
        niw.refresh(&mut empty)?;
        niw.empty = empty;
        Ok(niw)
    }

    /// `nu = D + 1`, identity scale.
    pub fn identity(dim: usize, tau: f64) -> Result<Self> {
        Niw::new(DMatrix::identity(dim, dim), dim as f64 + 1.0, tau)
    }

    fn posterior_scale(&self, s: &NiwStats) -> DMatrix<f64> {
        let n = s.count as f64;
        let tau_n = self.tau + n;
        &self.scale + &s.scatter + (&s.mean * s.mean.transpose()) * (self.tau * n / tau_n)
    }

    fn refresh(&self, s: &mut NiwStats) -> Result<()> {
        let dim = self.scale.nrows() as f64;
        let n = s.count as f64;
        let tau_n = self.tau + n;
        let dof = self.nu + n - dim + 1.0;
        let shape = self.posterior_scale(s) * ((tau_n + 1.0) / (tau_n * dof));
        let chol = Cholesky::new(shape)
            .ok_or_else(|| Error::invalid("posterior scale matrix is not positive definite"))?
            .l();
        let ln_norm = ln_gamma((dof + dim) / 2.0) - ln_gamma(dof / 2.0) - dim / 2.0 * (dof * PI).ln()
            - 0.5 * ln_det_chol(&chol);
        s.predictive = Predictive {
            loc: &s.mean * (n / tau_n),
            chol,
            ln_norm,
            dof,
        };
        Ok(())
    }
}

impl Conjugate for Niw {
    type Stats = NiwStats;

    fn dim(&self) -> usize {
        self.scale.nrows()
    }

    fn empty(&self) -> NiwStats {
        self.empty.clone()
    }

    fn count(&self, s: &NiwStats) -> usize {
        s.count
    }

    fn add(&self, s: &mut NiwStats, y: &[f64]) -> Result<()> {
        check_dim(y, self.dim())?;
        let y = DVector::from_column_slice(y);
        s.count += 1;
        let n = s.count as f64;
        let delta = &y - &s.mean;
        s.scatter += (&delta * delta.transpose()) * ((n - 1.0) / n);
        s.mean += delta / n;
        self.refresh(s)
    }

    fn remove(&self, s: &mut NiwStats, y: &[f64]) -> Result<()> {
        check_dim(y, self.dim())?;
        if s.count == 0 {
            return Err(Error::StatsUnderflow("removing a point from an empty cluster".into()));
        }
        if s.count == 1 {
            *s = self.empty();
            return Ok(());
        }
        let y = DVector::from_column_slice(y);
        let n = s.count as f64;
        let mean_rest = (&s.mean * n - &y) / (n - 1.0);
        let delta = &y - &mean_rest;
        s.scatter -= (&delta * delta.transpose()) * ((n - 1.0) / n);
        s.mean = mean_rest;
        s.count -= 1;
        self.refresh(s)
    }

    fn log_predictive(&self, s: &NiwStats, y: &[f64]) -> f64 {
        let p = &s.predictive;
        let dim = self.dim() as f64;
        let diff = DVector::from_column_slice(y) - &p.loc;
        let z = p
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        p.ln_norm - (p.dof + dim) / 2.0 * (z.norm_squared() / p.dof).ln_1p()
    }

    fn log_marginal(&self, s: &NiwStats) -> f64 {
        let dim = self.dim();
        let d = dim as f64;
        let n = s.count as f64;
        let tau_n = self.tau + n;
        let nu_n = self.nu + n;
        let ln_det_post = match Cholesky::new(self.posterior_scale(s)) {
            Some(c) => ln_det_chol(&c.l()),
            None => return f64::NAN,
        };
        -(n * d / 2.0) * PI.ln() + ln_multi_gamma(nu_n / 2.0, dim) - ln_multi_gamma(self.nu / 2.0, dim)
            + self.nu / 2.0 * self.ln_det_scale
            - nu_n / 2.0 * ln_det_post
            + d / 2.0 * (self.tau / tau_n).ln()
    }
}
