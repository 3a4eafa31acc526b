//! Experiment plans, seeded execution and replay.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dpvi_baselines::{collapsed_gibbs_with, mean_field_ising, particle_filter, FilterOutput, MeanFieldConfig, ResamplePolicy};
use dpvi_core::math::sample_log_categorical;
use dpvi_core::metrics::{matched_hamming, particle_marginals, predictive_loglik_hmm, total_marginal_error, v_measure, weighted_mean};
use dpvi_core::{
    init_from_prior, local_dpvi_with, sequential_dpvi, smoothing_dpvi, DiscreteModel, LocalConfig, Particle, ParticleSet,
    SequentialModel,
};
use dpvi_models::{BinaryHmm, BinaryHmmParams, Conjugate, Dpmm, Ihmm, IhmmHyper, Irm, IsingLattice, Nig, Niw, Relation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, DpviVariant, NIG_TAU, ExperimentConfig, ExperimentId, LikelihoodKind, PolicyKind};
use crate::data::{gen_block_relation, gen_gaussian_mixture, gen_hmm_data, MixtureSpec};
use crate::io::{load_points_csv, load_relation_matrix, load_text_sequence};
use crate::record::{RunRecord, RunUnit, LIBRARY_VERSION};

const DATA_TAG: u64 = 0xD;
const RUN_TAG: u64 = 0x5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id hashed from a sequence of words.
pub fn stream_id(words: &[u64]) -> u64 {
    words.iter().fold(0x243F_6A88_85A3_08D3, |h, &w| splitmix(h ^ w))
}

/// ChaCha generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn setting_word(setting: &Option<String>) -> u64 {
    setting
        .as_deref()
        .map_or(0, |s| s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3)))
}

fn data_stream(e: ExperimentId, unit: &RunUnit) -> u64 {
    stream_id(&[e.code(), DATA_TAG, setting_word(&unit.setting), unit.dataset as u64])
}

fn run_stream(e: ExperimentId, unit: &RunUnit) -> u64 {
    stream_id(&[
        e.code(),
        RUN_TAG,
        setting_word(&unit.setting),
        unit.dataset as u64,
        unit.rerun as u64,
        unit.algorithm as u64,
        unit.k as u64,
        unit.policy.map_or(0, |p| p as u64 + 1),
        unit.threshold.map_or(0, f64::to_bits),
    ])
}

fn pf_variants(config: &ExperimentConfig) -> Vec<(PolicyKind, Option<f64>)> {
    let mut out = Vec::new();
    for &p in config.policies.as_deref().unwrap_or_default() {
        if p == PolicyKind::Ess {
            out.extend(config.thresholds.iter().flatten().map(|&t| (p, Some(t))));
        } else {
            out.push((p, None));
        }
    }
    out
}

fn resample_policy(policy: Option<PolicyKind>, threshold: Option<f64>) -> Result<ResamplePolicy> {
    Ok(match policy {
        Some(PolicyKind::Never) => ResamplePolicy::Never,
        Some(PolicyKind::Multinomial) => ResamplePolicy::Multinomial,
        Some(PolicyKind::Stratified) => ResamplePolicy::Stratified,
        Some(PolicyKind::Ess) => ResamplePolicy::EssThreshold(threshold.context("ESS policy without threshold")?),
        None => bail!("particle filter unit without a policy"),
    })
}

/// All runs of a resolved config, in a fixed order.
pub fn plan(config: &ExperimentConfig) -> Vec<RunUnit> {
    let e = config.experiment;
    let mut units = Vec::new();
    let mut push = |algorithm, k, policy, threshold, setting: Option<String>, dataset, rerun| {
        units.push(RunUnit {
            index: 0,
            algorithm,
            k,
            policy,
            threshold,
            setting,
            dataset,
            rerun,
        });
    };
    let settings: Vec<Option<String>> = match e {
        ExperimentId::DpmmSynthetic => config.datasets.iter().flatten().map(|d| Some(d.to_string())).collect(),
        ExperimentId::IsingBound => config.betas.iter().flatten().map(|b| Some(format!("beta={b}"))).collect(),
        _ => vec![None],
    };
    for setting in settings {
        if e == ExperimentId::IsingBound {
            if config.runs(Algorithm::Dpvi) {
                for &k in config.ks() {
                    push(Algorithm::Dpvi, k, None, None, setting.clone(), 0, 0);
                }
            }
            if config.runs(Algorithm::MeanField) {
                for r in 0..config.repeats() {
                    push(Algorithm::MeanField, 1, None, None, setting.clone(), 0, r);
                }
            }
            continue;
        }
        for d in 0..config.repeats() {
            if config.runs(Algorithm::Dpvi) {
                for &k in config.ks() {
                    push(Algorithm::Dpvi, k, None, None, setting.clone(), d, 0);
                }
            }
            if config.runs(Algorithm::Pf) {
                for &k in config.ks() {
                    for (p, t) in pf_variants(config) {
                        for r in 0..config.reruns.unwrap_or(1) {
                            push(Algorithm::Pf, k, Some(p), t, setting.clone(), d, r);
                        }
                    }
                }
            }
            if config.runs(Algorithm::Gibbs) {
                for r in 0..config.gibbs_runs.unwrap_or(1) {
                    push(Algorithm::Gibbs, 1, None, None, setting.clone(), d, r);
                }
            }
        }
    }
    for (i, u) in units.iter_mut().enumerate() {
        u.index = i;
    }
    units
}

#[derive(Debug, Default)]
struct Outcome {
    data_order: Vec<usize>,
    bound_trace: Vec<f64>,
    metric_trace: Vec<f64>,
    metrics: BTreeMap<String, f64>,
    assignment: Vec<usize>,
}

impl Outcome {
    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

/// Executes every planned run in parallel. The config is resolved first.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let config = config.clone().resolve()?;
    plan(&config)
        .par_iter()
        .map(|unit| execute(&config, unit))
        .collect()
}

/// Re-executes a record from its stored config and unit.
pub fn replay(record: &RunRecord) -> Result<RunRecord> {
    execute(&record.config, &record.unit)
}

/// Runs one unit of a resolved config.
pub fn execute(config: &ExperimentConfig, unit: &RunUnit) -> Result<RunRecord> {
    let e = config.experiment;
    let seed = config.seed();
    let (ds, rs) = (data_stream(e, unit), run_stream(e, unit));
    let mut data_rng = stream_rng(seed, ds);
    let mut run_rng = stream_rng(seed, rs);
    let start = Instant::now();
    let outcome = match e {
        ExperimentId::HmmEssSweep => hmm_ess_sweep(config, unit, &mut data_rng, &mut run_rng),
        ExperimentId::DpmmSynthetic => dpmm_synthetic(config, unit, &mut data_rng, &mut run_rng),
        ExperimentId::DpmmCsv => dpmm_csv(config, unit, &mut data_rng, &mut run_rng),
        ExperimentId::IhmmSynthetic => ihmm_synthetic(config, unit, &mut data_rng, &mut run_rng),
        ExperimentId::IhmmText => ihmm_text(config, unit, &mut run_rng),
        ExperimentId::Irm => irm(config, unit, &mut data_rng, &mut run_rng),
        ExperimentId::IsingBound => ising_bound(config, unit, &mut run_rng),
    }
    .with_context(|| format!("{e} run {} ({})", unit.index, unit.group()))?;
    Ok(RunRecord {
        version: LIBRARY_VERSION.to_string(),
        experiment: e,
        config: config.clone(),
        unit: unit.clone(),
        seed,
        data_stream: ds,
        run_stream: rs,
        data_order: outcome.data_order,
        bound_trace: outcome.bound_trace,
        metric_trace: outcome.metric_trace,
        metrics: outcome.metrics,
        assignment: outcome.assignment,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Particles with normalized log-weights, from either DPVI or a filter.
struct Weighted<S> {
    particles: Vec<Particle<S>>,
    log_weights: Vec<f64>,
    bound: f64,
}

impl<S> Weighted<S> {
    fn from_set(set: ParticleSet<S>) -> Result<Self> {
        let bound = set.variational_bound()?;
        Ok(Weighted {
            particles: set.particles,
            log_weights: set.log_weights,
            bound,
        })
    }

    fn from_filter(out: FilterOutput<S>) -> Self {
        Weighted {
            bound: out.log_evidence,
            particles: out.particles,
            log_weights: out.log_weights,
        }
    }

    fn best(&self) -> &Particle<S> {
        let i = (0..self.log_weights.len()).fold(0, |b, i| if self.log_weights[i] > self.log_weights[b] { i } else { b });
        &self.particles[i]
    }

    fn weighted(&self, mut metric: impl FnMut(&Particle<S>) -> Result<f64>) -> Result<f64> {
        let values = self.particles.iter().map(&mut metric).collect::<Result<Vec<f64>>>()?;
        Ok(weighted_mean(&self.log_weights, &values))
    }
}

fn sequential_run<M, R>(config: &ExperimentConfig, model: &M, unit: &RunUnit, rng: &mut R) -> Result<Weighted<M::Stats>>
where
    M: SequentialModel,
    R: Rng + ?Sized,
{
    match unit.algorithm {
        Algorithm::Dpvi => match config.dpvi_variant.unwrap_or(DpviVariant::Filtering) {
            DpviVariant::Filtering => Weighted::from_set(sequential_dpvi(model, unit.k)?),
            DpviVariant::Smoothing => {
                let local = LocalConfig {
                    epsilon: config.epsilon.unwrap_or(1e-9),
                    max_sweeps: config.sweeps.unwrap_or(100),
                };
                Weighted::from_set(smoothing_dpvi(model, unit.k, local)?.0)
            }
        },
        Algorithm::Pf => {
            let policy = resample_policy(unit.policy, unit.threshold)?;
            Ok(Weighted::from_filter(particle_filter(model, unit.k, policy, rng)?))
        }
        other => bail!("algorithm {other} does not apply to sequential models"),
    }
}

fn hmm_ess_sweep(config: &ExperimentConfig, unit: &RunUnit, data_rng: &mut ChaCha8Rng, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let params = BinaryHmmParams::reference();
    let (hidden, obs) = params.sample(config.length.unwrap_or(200), data_rng);
    let exact = dpvi_baselines::forward_backward(&params, &obs)?;
    let model = BinaryHmm::new(params, obs)?;
    let w = sequential_run(config, &model, unit, run_rng)?;
    let assignments: Vec<&[usize]> = w.particles.iter().map(|p| p.assignment.as_slice()).collect();
    let marginals = particle_marginals(&assignments, &w.log_weights, 2);
    let mut out = Outcome {
        data_order: (0..hidden.len()).collect(),
        bound_trace: vec![w.bound],
        assignment: w.best().assignment.clone(),
        ..Default::default()
    };
    out.metric("total_marginal_error", total_marginal_error(&marginals, &exact.marginals)?);
    out.metric("bound", w.bound);
    out.metric("log_z", exact.log_z);
    Ok(out)
}

fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn mixture_run<C: Conjugate>(
    lik: C,
    config: &ExperimentConfig,
    unit: &RunUnit,
    points: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    order: Vec<usize>,
    run_rng: &mut ChaCha8Rng,
) -> Result<Outcome> {
    let data: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
    let model = Dpmm::new(lik, config.alpha.unwrap_or(0.5), data)?;
    let w = sequential_run(config, &model, unit, run_rng)?;
    let best = w.best().assignment.clone();
    let mut out = Outcome {
        bound_trace: vec![w.bound],
        ..Default::default()
    };
    out.metric("bound", w.bound);
    out.metric("clusters", dpvi_core::partition::num_clusters(&best) as f64);
    if let Some(labels) = labels {
        let truth: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        out.metric("v_measure", w.weighted(|p| Ok(v_measure(&p.assignment, &truth)?))?);
        out.metric("v_measure_best", v_measure(&best, &truth)?);
    }
    out.data_order = order;
    out.assignment = best;
    Ok(out)
}

fn dpmm_synthetic(config: &ExperimentConfig, unit: &RunUnit, data_rng: &mut ChaCha8Rng, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let spec: MixtureSpec = unit.setting.as_deref().context("missing dataset spec")?.parse().map_err(anyhow::Error::msg)?;
    let data = gen_gaussian_mixture(spec, config.n_points.unwrap_or(200), data_rng)?;
    let order = shuffled(data.points.len(), data_rng);
    let lik = Nig::new(2, config.tau.unwrap_or(NIG_TAU), config.a.unwrap_or(1.0), config.b.unwrap_or(1.0))?;
    mixture_run(lik, config, unit, data.points, Some(data.labels), order, run_rng)
}

fn dpmm_csv(config: &ExperimentConfig, unit: &RunUnit, data_rng: &mut ChaCha8Rng, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let path = config.data_path.as_deref().context("missing data_path")?;
    let csv = load_points_csv(path)?;
    let dim = csv.points[0].len();
    let order = shuffled(csv.points.len(), data_rng);
    let tau = config.tau.unwrap_or(NIG_TAU);
    match config.likelihood.unwrap_or(LikelihoodKind::Nig) {
        LikelihoodKind::Nig => {
            let lik = Nig::new(dim, tau, config.a.unwrap_or(1.0), config.b.unwrap_or(1.0))?;
            mixture_run(lik, config, unit, csv.points, csv.labels, order, run_rng)
        }
        LikelihoodKind::Niw => mixture_run(Niw::identity(dim, tau)?, config, unit, csv.points, csv.labels, order, run_rng),
    }
}

fn ihmm_hyper(config: &ExperimentConfig) -> IhmmHyper {
    IhmmHyper {
        alpha: config.alpha.unwrap_or(1.0),
        gamma: config.gamma.unwrap_or(1.0),
        eta: config.eta.unwrap_or(1.0),
    }
}

fn ihmm_synthetic(config: &ExperimentConfig, unit: &RunUnit, data_rng: &mut ChaCha8Rng, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let observed = config.observed.unwrap_or(5);
    let data = gen_hmm_data(config.hidden.unwrap_or(10), observed, config.length.unwrap_or(500), data_rng)?;
    let model = Ihmm::new(ihmm_hyper(config), data.obs.clone(), observed)?;
    let w = sequential_run(config, &model, unit, run_rng)?;
    let mut out = Outcome {
        data_order: (0..data.obs.len()).collect(),
        bound_trace: vec![w.bound],
        assignment: w.best().assignment.clone(),
        ..Default::default()
    };
    out.metric("matched_hamming", w.weighted(|p| Ok(matched_hamming(&p.assignment, &data.hidden)?))?);
    out.metric("matched_hamming_best", matched_hamming(&out.assignment, &data.hidden)?);
    out.metric("bound", w.bound);
    out.metric("clusters", dpvi_core::partition::num_clusters(&out.assignment) as f64);
    Ok(out)
}

fn ihmm_text(config: &ExperimentConfig, unit: &RunUnit, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let path = config.data_path.as_deref().context("missing data_path")?;
    let text = load_text_sequence(path, config.train_chars.unwrap_or(1000), config.test_chars.unwrap_or(4000))?;
    let model = Ihmm::new(ihmm_hyper(config), text.train.clone(), text.alphabet.len())?;
    let w = sequential_run(config, &model, unit, run_rng)?;
    let delta = config.delta.unwrap_or(1.0);
    let samples = config.samples.unwrap_or(50);
    let mut total = 0.0;
    for _ in 0..samples {
        let p = &w.particles[sample_log_categorical(&w.log_weights, run_rng)];
        total += predictive_loglik_hmm(&model.point_estimate(&p.stats), &text.test, delta)?;
    }
    let mut out = Outcome {
        data_order: (0..text.train.len()).collect(),
        bound_trace: vec![w.bound],
        assignment: w.best().assignment.clone(),
        ..Default::default()
    };
    out.metric("predictive_loglik", total / samples as f64);
    out.metric("bound", w.bound);
    out.metric("symbols", text.alphabet.len() as f64);
    out.metric("clusters", dpvi_core::partition::num_clusters(&out.assignment) as f64);
    Ok(out)
}

/// The relation named by `data_path`, or a 50 x 85 synthetic block model.
pub fn irm_relation(config: &ExperimentConfig) -> Result<Relation> {
    match config.data_path.as_deref() {
        Some(path) => load_relation_matrix(path),
        None => {
            let mut rng = stream_rng(config.seed(), stream_id(&[ExperimentId::Irm.code(), DATA_TAG, u64::MAX]));
            gen_block_relation(50, 85, 6, 8, &mut rng)
        }
    }
}

fn irm(config: &ExperimentConfig, unit: &RunUnit, data_rng: &mut ChaCha8Rng, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let relation = irm_relation(config)?;
    let (train, heldout) = relation.split(config.heldout_fraction.unwrap_or(0.2), data_rng)?;
    let model = Irm::new(train, config.alpha.unwrap_or(1.0), config.beta_prior.unwrap_or(1.0))?;
    let sweeps = config.sweeps.unwrap_or(100);
    let mut out = Outcome::default();
    let mut failure = None;
    let mut heldout_ll = |p: &Particle<_>| -> f64 {
        model.heldout_log_lik(p, &heldout.cells).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    };
    match unit.algorithm {
        Algorithm::Dpvi => {
            let init = init_from_prior(&model, unit.k, run_rng, 100 * unit.k)?;
            let weighted_ll = |set: &ParticleSet<_>, f: &mut dyn FnMut(&Particle<_>) -> f64| {
                let values: Vec<f64> = set.particles.iter().map(&mut *f).collect();
                weighted_mean(&set.log_weights, &values)
            };
            out.metric_trace.push(weighted_ll(&init, &mut heldout_ll));
            let local = LocalConfig {
                epsilon: config.epsilon.unwrap_or(1e-9),
                max_sweeps: sweeps,
            };
            let mut trace = Vec::new();
            let (set, bounds) = local_dpvi_with(&model, init, unit.k, local, |_, set| {
                trace.push(weighted_ll(set, &mut heldout_ll));
            })?;
            out.metric_trace.extend(trace);
            out.bound_trace = bounds.values().to_vec();
            out.metric("sweeps", bounds.sweeps() as f64);
            out.metric("bound", set.variational_bound()?);
            out.assignment = set.particles[set.best()].assignment.clone();
        }
        Algorithm::Gibbs => {
            let init = model.particle(model.prior_sample(run_rng))?;
            out.metric_trace.push(heldout_ll(&init));
            out.bound_trace.push(init.log_score);
            let mut trace = Vec::new();
            let mut scores = Vec::new();
            let chain = collapsed_gibbs_with(&model, init, sweeps, run_rng, |_, p| {
                trace.push(heldout_ll(p));
                scores.push(p.log_score);
            })?;
            out.metric_trace.extend(trace);
            out.bound_trace.extend(scores);
            out.metric("sweeps", sweeps as f64);
            out.metric("log_score", chain.state.log_score);
            out.assignment = chain.state.assignment;
        }
        other => bail!("algorithm {other} does not apply to the IRM"),
    }
    if let Some(e) = failure {
        return Err(e.into());
    }
    out.metric("heldout_loglik", *out.metric_trace.last().expect("trace is non-empty"));
    out.metric("heldout_cells", heldout.cells.len() as f64);
    Ok(out)
}

fn ising_bound(config: &ExperimentConfig, unit: &RunUnit, run_rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let beta: f64 = unit
        .setting
        .as_deref()
        .and_then(|s| s.strip_prefix("beta="))
        .context("missing beta setting")?
        .parse()?;
    let lattice = IsingLattice::new(config.side.unwrap_or(10), beta)?;
    let mut out = Outcome::default();
    match unit.algorithm {
        Algorithm::Dpvi => {
            let local = LocalConfig {
                epsilon: config.epsilon.unwrap_or(1e-9),
                max_sweeps: config.sweeps.unwrap_or(100),
            };
            let (set, trace) = smoothing_dpvi(&lattice, unit.k, local)?;
            let ground = lattice.ground_states();
            let weights = set.weights();
            let ground_mass: f64 = set
                .particles
                .iter()
                .zip(&weights)
                .filter(|(p, _)| ground.contains(&p.assignment))
                .map(|(_, w)| w)
                .sum();
            out.bound_trace = trace.values().to_vec();
            out.metric("bound", set.variational_bound()?);
            out.metric("particles", set.len() as f64);
            out.metric("ground_state_mass", ground_mass);
            out.metric("min_weight", weights.iter().cloned().fold(f64::INFINITY, f64::min));
            out.metric("max_weight", weights.iter().cloned().fold(0.0, f64::max));
            out.assignment = set.particles[set.best()].assignment.clone();
        }
        Algorithm::MeanField => {
            let n = lattice.side() * lattice.side();
            let init: Vec<f64> = (0..n).map(|_| run_rng.random_range(-1.0..=1.0)).collect();
            let mf = mean_field_ising(
                &lattice,
                &init,
                MeanFieldConfig {
                    max_iters: config.sweeps.unwrap_or(100).max(1000),
                    ..MeanFieldConfig::default()
                },
            )?;
            out.bound_trace = mf.trace;
            out.metric("bound", mf.bound);
            out.metric("residual", mf.state.residual);
            out.assignment = mf.state.means.iter().map(|&m| usize::from(m > 0.0)).collect();
        }
        other => bail!("algorithm {other} does not apply to the Ising lattice"),
    }
    if let Ok(log_z) = lattice.exact_log_z() {
        out.metric("log_z", log_z);
    }
    Ok(out)
}

/// Writes `runs.jsonl`, `runs.csv` and `summary.csv` into `dir`.
pub fn write_outputs(dir: &Path, records: &[RunRecord]) -> Result<()> {
    crate::record::write_jsonl(&dir.join("runs.jsonl"), records)?;
    crate::record::write_runs_csv(&dir.join("runs.csv"), records)?;
    crate::summary::write_summary_csv(&dir.join("summary.csv"), &crate::summary::summarize(records))
}
