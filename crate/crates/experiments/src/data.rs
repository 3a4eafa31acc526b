//! Synthetic data generators.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use dpvi_core::hmm::DenseHmm;
use dpvi_models::{Cell, Relation};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// The six bivariate Gaussian mixtures of the DPMM benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MixtureSpec {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
}

impl MixtureSpec {
    pub const ALL: [MixtureSpec; 6] = [
        MixtureSpec::D1,
        MixtureSpec::D2,
        MixtureSpec::D3,
        MixtureSpec::D4,
        MixtureSpec::D5,
        MixtureSpec::D6,
    ];

    /// Component means: `mu1 = (0, 0)` and multiples of `mu2 = (0.5, 0.5)`.
    pub fn means(&self) -> [[f64; 2]; 3] {
        let scale = match self {
            MixtureSpec::D1 | MixtureSpec::D2 => [0.0, 4.0, 8.0],
            MixtureSpec::D3 | MixtureSpec::D4 => [0.0, 2.0, 4.0],
            MixtureSpec::D5 | MixtureSpec::D6 => [0.0, 1.0, 2.0],
        };
        scale.map(|s| [0.5 * s, 0.5 * s])
    }

    /// Shared isotropic variance.
    pub fn variance(&self) -> f64 {
        match self {
            MixtureSpec::D1 | MixtureSpec::D3 | MixtureSpec::D5 => 0.25,
            _ => 0.5,
        }
    }
}

impl fmt::Display for MixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for MixtureSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        MixtureSpec::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mixture spec `{s}` (expected D1..D6)"))
    }
}

impl TryFrom<String> for MixtureSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<MixtureSpec> for String {
    fn from(m: MixtureSpec) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Draws `n` points from three equally likely components.
pub fn gen_gaussian_mixture<R: Rng + ?Sized>(spec: MixtureSpec, n: usize, rng: &mut R) -> Result<LabeledPoints> {
    if n == 0 {
        bail!("need at least one point");
    }
    let means = spec.means();
    let sd = spec.variance().sqrt();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..3);
        points.push(
            means[c]
                .iter()
                .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        labels.push(c);
    }
    Ok(LabeledPoints { points, labels })
}

/// Symmetric Dirichlet draw via normalized gammas.
pub fn dirichlet<R: Rng + ?Sized>(concentration: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.iter().map(|g| g / total).collect();
        }
    }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmData {
    pub hmm: DenseHmm,
    pub hidden: Vec<usize>,
    pub obs: Vec<usize>,
}

/// Random HMM with Dir(0.1) initial and transition rows and Dir(10)
/// emission rows, and one sequence sampled from it.
pub fn gen_hmm_data<R: Rng + ?Sized>(n_hidden: usize, n_obs: usize, length: usize, rng: &mut R) -> Result<HmmData> {
    if n_hidden == 0 || n_obs == 0 || length == 0 {
        bail!("HMM sizes and length must be positive");
    }
    let initial = dirichlet(0.1, n_hidden, rng);
    let transition = (0..n_hidden).map(|_| dirichlet(0.1, n_hidden, rng)).collect();
    let emission = (0..n_hidden).map(|_| dirichlet(10.0, n_obs, rng)).collect();
    let hmm = DenseHmm {
        initial,
        transition,
        emission,
    };
    let mut hidden: Vec<usize> = Vec::with_capacity(length);
    let mut obs = Vec::with_capacity(length);
    for t in 0..length {
        let s = if t == 0 {
            categorical(&hmm.initial, rng)
        } else {
            categorical(&hmm.transition[hidden[t - 1]], rng)
        };
        hidden.push(s);
        obs.push(categorical(&hmm.emission[s], rng));
    }
    Ok(HmmData { hmm, hidden, obs })
}

/// Two-type block-model relation with `row_clusters x col_clusters` blocks,
/// block densities drawn from Beta(0.5, 0.5).
pub fn gen_block_relation<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    row_clusters: usize,
    col_clusters: usize,
    rng: &mut R,
) -> Result<Relation> {
    if rows == 0 || cols == 0 || row_clusters == 0 || col_clusters == 0 {
        bail!("relation sizes must be positive");
    }
    let beta = Beta::new(0.5, 0.5).expect("valid Beta");
    let density: Vec<Vec<f64>> = (0..row_clusters)
        .map(|_| (0..col_clusters).map(|_| beta.sample(rng)).collect())
        .collect();
    let row_of: Vec<usize> = (0..rows).map(|_| rng.random_range(0..row_clusters)).collect();
    let col_of: Vec<usize> = (0..cols).map(|_| rng.random_range(0..col_clusters)).collect();
    let mut cells = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            cells.push(Cell {
                index: vec![i, j],
                value: rng.random::<f64>() < density[row_of[i]][col_of[j]],
            });
        }
    }
    Ok(Relation {
        type_sizes: vec![rows, cols],
        positions: vec![0, 1],
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn d1_means() {
        assert_eq!(MixtureSpec::D1.means(), [[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]]);
        assert_eq!(MixtureSpec::D6.means(), [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]);
        assert_eq!(MixtureSpec::D4.variance(), 0.5);
        assert_eq!("d3".parse::<MixtureSpec>().unwrap(), MixtureSpec::D3);
        assert!("D7".parse::<MixtureSpec>().is_err());
    }

    #[test]
    fn mixture_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = gen_gaussian_mixture(MixtureSpec::D1, 30_000, &mut rng).unwrap();
        for c in 0..3 {
            let pts: Vec<&Vec<f64>> = data.points.iter().zip(&data.labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            let n = pts.len() as f64;
            for d in 0..2 {
                let mean = pts.iter().map(|p| p[d]).sum::<f64>() / n;
                let var = pts.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                assert!((mean - MixtureSpec::D1.means()[c][d]).abs() < 4.0 * 0.5 / n.sqrt());
                assert!((var - 0.25).abs() < 0.02);
            }
        }
        assert!(gen_gaussian_mixture(MixtureSpec::D2, 0, &mut rng).is_err());
    }

    #[test]
    fn hmm_rows_normalized_and_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = gen_hmm_data(10, 5, 500, &mut rng).unwrap();
        for row in data.hmm.transition.iter().chain(&data.hmm.emission).chain([&data.hmm.initial]) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(data.obs.len(), 500);
        assert!(data.hidden.iter().all(|&s| s < 10) && data.obs.iter().all(|&y| y < 5));

        let sparse = (0..10_000).filter(|_| dirichlet(0.1, 10, &mut rng).iter().cloned().fold(0.0, f64::max) > 0.5).count();
        assert!(sparse > 6_000, "{sparse}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_hmm_data(10, 5, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_hmm_data(10, 5, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let r = gen_block_relation(5, 4, 2, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        r.validate().unwrap();
        assert_eq!(r.cells.len(), 20);
    }
}
