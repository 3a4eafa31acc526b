//! Flat TOML experiment configuration.
//!
//! Every key is optional except `experiment`. [`ExperimentConfig::resolve`]
//! fills in the defaults for that experiment, rejects keys that do not apply
//! to it, and validates the result. Run records store the resolved config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::data::MixtureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    HmmEssSweep,
    DpmmSynthetic,
    DpmmCsv,
    IhmmSynthetic,
    IhmmText,
    Irm,
    IsingBound,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::HmmEssSweep,
        ExperimentId::DpmmSynthetic,
        ExperimentId::DpmmCsv,
        ExperimentId::IhmmSynthetic,
        ExperimentId::IhmmText,
        ExperimentId::Irm,
        ExperimentId::IsingBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::HmmEssSweep => "hmm-ess-sweep",
            ExperimentId::DpmmSynthetic => "dpmm-synthetic",
            ExperimentId::DpmmCsv => "dpmm-csv",
            ExperimentId::IhmmSynthetic => "ihmm-synthetic",
            ExperimentId::IhmmText => "ihmm-text",
            ExperimentId::Irm => "irm",
            ExperimentId::IsingBound => "ising-bound",
        }
    }

    /// Small integer used when deriving random streams.
    pub fn code(&self) -> u64 {
        ExperimentId::ALL.iter().position(|e| e == self).expect("listed") as u64 + 1
    }

    fn algorithms(&self) -> &'static [Algorithm] {
        match self {
            ExperimentId::HmmEssSweep
            | ExperimentId::DpmmSynthetic
            | ExperimentId::DpmmCsv
            | ExperimentId::IhmmSynthetic
            | ExperimentId::IhmmText => &[Algorithm::Dpvi, Algorithm::Pf],
            ExperimentId::Irm => &[Algorithm::Dpvi, Algorithm::Gibbs],
            ExperimentId::IsingBound => &[Algorithm::Dpvi, Algorithm::MeanField],
        }
    }

    /// Keys beyond `experiment`, `seed`, `repeats`, `ks` and `algorithms`
    /// that this experiment reads.
    fn keys(&self) -> &'static [&'static str] {
        match self {
            ExperimentId::HmmEssSweep => &[
                "length", "reruns", "thresholds", "policies", "dpvi_variant", "sweeps", "epsilon",
            ],
            ExperimentId::DpmmSynthetic => &[
                "datasets", "n_points", "alpha", "tau", "a", "b", "policies", "dpvi_variant", "sweeps", "epsilon",
            ],
            ExperimentId::DpmmCsv => &[
                "data_path", "likelihood", "alpha", "tau", "a", "b", "policies", "dpvi_variant", "sweeps", "epsilon",
            ],
            ExperimentId::IhmmSynthetic => &[
                "length", "hidden", "observed", "alpha", "gamma", "eta", "policies", "dpvi_variant", "sweeps", "epsilon",
            ],
            ExperimentId::IhmmText => &[
                "data_path", "train_chars", "test_chars", "alpha", "gamma", "eta", "samples", "delta", "policies",
                "dpvi_variant", "sweeps", "epsilon",
            ],
            ExperimentId::Irm => &["data_path", "heldout_fraction", "alpha", "beta_prior", "gibbs_runs", "sweeps", "epsilon"],
            ExperimentId::IsingBound => &["side", "betas", "sweeps", "epsilon"],
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .with_context(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dpvi,
    Pf,
    Gibbs,
    MeanField,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dpvi => "dpvi",
            Algorithm::Pf => "pf",
            Algorithm::Gibbs => "gibbs",
            Algorithm::MeanField => "mean-field",
        })
    }
}

/// Particle-filter resampling, as named in configs. `ess` runs once per
/// entry of `thresholds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Never,
    Multinomial,
    Stratified,
    Ess,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Never => "never",
            PolicyKind::Multinomial => "multinomial",
            PolicyKind::Stratified => "stratified",
            PolicyKind::Ess => "ess",
        })
    }
}

/// Sequential DPVI alone, or followed by local sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpviVariant {
    Filtering,
    Smoothing,
}

/// Default NIG mean-prior precision factor: the mean prior has variance `25 * sigma^2`.
pub const NIG_TAU: f64 = 0.04;
/// Default NIW mean-prior precision factor.
pub const NIW_TAU: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    Nig,
    Niw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Independent datasets (or data orders, or held-out splits).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<PolicyKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Particle-filter reruns per dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reruns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpvi_variant: Option<DpviVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datasets: Option<Vec<MixtureSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<LikelihoodKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_chars: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_chars: Option<usize>,
    /// Sequences drawn from the approximation to score the test text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_prior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs_runs: Option<usize>,
    /// Cap on local sweeps (DPVI) and sweep count (Gibbs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        let empty = format!("experiment = \"{experiment}\"");
        toml::from_str(&empty).expect("minimal config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing experiment config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut set = Vec::new();
        macro_rules! check {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { set.push(stringify!($field)); })*
            };
        }
        check!(
            policies, thresholds, reruns, dpvi_variant, length, datasets, n_points, data_path, likelihood, alpha, tau, a, b, gamma,
            eta, hidden, observed, train_chars, test_chars, samples, delta, heldout_fraction, beta_prior, gibbs_runs,
            sweeps, epsilon, side, betas
        );
        set
    }

    /// Fills defaults, rejects keys foreign to the experiment and checks
    /// ranges. Resolving twice is a no-op.
    pub fn resolve(mut self) -> Result<Self> {
        let e = self.experiment;
        for key in self.set_keys() {
            ensure!(e.keys().contains(&key), "key `{key}` does not apply to experiment {e}");
        }
        macro_rules! default {
            ($field:ident, $value:expr) => {
                if self.$field.is_none() {
                    self.$field = Some($value);
                }
            };
        }
        default!(seed, 0);
        default!(algorithms, e.algorithms().to_vec());
        if !matches!(e, ExperimentId::Irm | ExperimentId::IsingBound) {
            default!(dpvi_variant, DpviVariant::Filtering);
            if self.dpvi_variant == Some(DpviVariant::Smoothing) {
                default!(sweeps, 100);
                default!(epsilon, 1e-9);
            }
        }
        match e {
            ExperimentId::HmmEssSweep => {
                default!(repeats, 5);
                default!(reruns, 5);
                default!(length, 200);
                default!(ks, vec![100]);
                default!(policies, vec![PolicyKind::Ess]);
                default!(thresholds, vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]);
            }
            ExperimentId::DpmmSynthetic | ExperimentId::DpmmCsv => {
                default!(repeats, 20);
                default!(ks, vec![1, 20]);
                default!(policies, vec![PolicyKind::Stratified]);
                if e == ExperimentId::DpmmSynthetic {
                    default!(datasets, MixtureSpec::ALL.to_vec());
                    default!(n_points, 200);
                } else {
                    default!(likelihood, LikelihoodKind::Nig);
                }
                if self.likelihood == Some(LikelihoodKind::Niw) {
                    default!(alpha, 0.1);
                    default!(tau, NIW_TAU);
                } else {
                    default!(alpha, 0.5);
                    default!(tau, NIG_TAU);
                }
                default!(a, 1.0);
                default!(b, 1.0);
            }
            ExperimentId::IhmmSynthetic | ExperimentId::IhmmText => {
                default!(repeats, 20);
                default!(ks, vec![1, 10]);
                default!(policies, vec![PolicyKind::Multinomial, PolicyKind::Stratified]);
                default!(alpha, 1.0);
                default!(gamma, 1.0);
                default!(eta, 1.0);
                if e == ExperimentId::IhmmSynthetic {
                    default!(length, 500);
                    default!(hidden, 10);
                    default!(observed, 5);
                } else {
                    default!(train_chars, 1000);
                    default!(test_chars, 4000);
                    default!(samples, 50);
                    default!(delta, 1.0);
                }
            }
            ExperimentId::Irm => {
                default!(repeats, 1);
                default!(ks, vec![1, 10, 20]);
                default!(heldout_fraction, 0.2);
                default!(alpha, 1.0);
                default!(beta_prior, 1.0);
                default!(gibbs_runs, 20);
                default!(sweeps, 100);
                default!(epsilon, 1e-9);
            }
            ExperimentId::IsingBound => {
                default!(repeats, 1);
                default!(ks, vec![1, 2, 3, 5]);
                default!(side, 10);
                default!(betas, vec![0.01, 100.0]);
                default!(sweeps, 100);
                default!(epsilon, 1e-9);
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let e = self.experiment;
        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            if let Some(v) = v {
                ensure!(v > 0.0 && v.is_finite(), "`{name}` must be positive, got {v}");
            }
            Ok(())
        };
        positive("alpha", self.alpha)?;
        positive("tau", self.tau)?;
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("gamma", self.gamma)?;
        positive("eta", self.eta)?;
        positive("beta_prior", self.beta_prior)?;
        positive("epsilon", self.epsilon)?;
        if let Some(d) = self.delta {
            ensure!(d >= 0.0, "`delta` must be non-negative");
        }
        ensure!(self.repeats.unwrap_or(1) >= 1, "`repeats` must be at least 1");
        let ks = self.ks.as_deref().unwrap_or_default();
        ensure!(!ks.is_empty() && ks.iter().all(|&k| k >= 1), "`ks` must list positive particle counts");
        let algorithms = self.algorithms.as_deref().unwrap_or_default();
        ensure!(!algorithms.is_empty(), "`algorithms` is empty");
        for a in algorithms {
            ensure!(e.algorithms().contains(a), "algorithm {a} is not available for experiment {e}");
        }
        for (name, v) in [
            ("length", self.length),
            ("n_points", self.n_points),
            ("hidden", self.hidden),
            ("observed", self.observed),
            ("train_chars", self.train_chars),
            ("samples", self.samples),
            ("gibbs_runs", self.gibbs_runs),
            ("sweeps", self.sweeps),
            ("side", self.side),
            ("reruns", self.reruns),
        ] {
            if let Some(v) = v {
                ensure!(v >= 1, "`{name}` must be at least 1");
            }
        }
        if let Some(f) = self.heldout_fraction {
            ensure!(f > 0.0 && f < 1.0, "`heldout_fraction` must lie in (0, 1)");
        }
        if let Some(policies) = &self.policies {
            ensure!(!policies.is_empty(), "`policies` is empty");
            if policies.contains(&PolicyKind::Ess) {
                let ts = self.thresholds.as_deref().unwrap_or_default();
                ensure!(!ts.is_empty(), "policy `ess` needs `thresholds`");
                for &k in ks {
                    for &t in ts {
                        ensure!((1.0..=k as f64).contains(&t), "ESS threshold {t} outside [1, {k}]");
                    }
                }
            }
        }
        if self.thresholds.is_some() && !self.policies.as_deref().unwrap_or_default().contains(&PolicyKind::Ess) {
            bail!("`thresholds` is set but no `ess` policy is listed");
        }
        if let Some(betas) = &self.betas {
            ensure!(!betas.is_empty() && betas.iter().all(|b| b.is_finite()), "`betas` must be finite");
        }
        if let Some(datasets) = &self.datasets {
            ensure!(!datasets.is_empty(), "`datasets` is empty");
        }
        if matches!(e, ExperimentId::DpmmCsv | ExperimentId::IhmmText) {
            ensure!(self.data_path.is_some(), "experiment {e} needs `data_path`");
        }
        Ok(())
    }

    // Accessors for resolved configs.

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn repeats(&self) -> usize {
        self.repeats.unwrap_or(1)
    }

    pub fn ks(&self) -> &[usize] {
        self.ks.as_deref().unwrap_or_default()
    }

    pub fn algorithms(&self) -> &[Algorithm] {
        self.algorithms.as_deref().unwrap_or_default()
    }

    pub fn runs(&self, algorithm: Algorithm) -> bool {
        self.algorithms().contains(&algorithm)
    }
}
