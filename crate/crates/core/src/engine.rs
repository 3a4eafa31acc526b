//! Coordinate-ascent optimizer for particle approximations.
//!
//! Each step rescores every single-variable modification of every particle,
//! then keeps the K highest-scoring unique assignments. Because the unchanged
//! copies of the current particles are part of the pool, a step can never
//! lower the bound.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CanonicalKey, DiscreteModel, Particle, SequentialModel};
use crate::particle::ParticleSet;

/// One single-variable modification of a parent particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub parent_index: usize,
    pub variable: usize,
    pub value: usize,
    /// Full joint log-score; `-inf` marks a zero-probability continuation.
    pub log_score: f64,
}

/// Stopping rule for local sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    pub epsilon: f64,
    pub max_sweeps: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            epsilon: 1e-8,
            max_sweeps: 100,
        }
    }
}

/// Bound values: entry 0 is the initial set, entry `s` the bound after
/// sweep `s`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundTrace(pub Vec<f64>);

impl BoundTrace {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }

    /// Number of completed sweeps.
    pub fn sweeps(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_non_decreasing(&self, tol: f64) -> bool {
        self.0.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// What happened to a parent particle during one selection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    /// No continuation survived.
    Deleted,
    /// Exactly one continuation survived.
    Selected,
    /// Several continuations survived.
    Split(usize),
}

/// Fate of each of `num_parents` parents given the parent index of every
/// surviving particle.
pub fn fates(num_parents: usize, parents: &[usize]) -> Vec<Fate> {
    let mut counts = vec![0usize; num_parents];
    for &p in parents {
        counts[p] += 1;
    }
    counts
        .into_iter()
        .map(|c| match c {
            0 => Fate::Deleted,
            1 => Fate::Selected,
            c => Fate::Split(c),
        })
        .collect()
}

/// Every modification of variable `n` in every particle, in (parent, value)
/// order.
pub fn expand_candidates<M: DiscreteModel>(
    set: &ParticleSet<M::Stats>,
    n: usize,
    model: &M,
) -> Result<Vec<Candidate>> {
    let mut pool = Vec::new();
    for (k, particle) in set.particles.iter().enumerate() {
        let scores = model.candidate_log_scores(particle, n).map_err(|e| e.at(k, n))?;
        pool.extend(scores.into_iter().enumerate().map(|(m, log_score)| Candidate {
            parent_index: k,
            variable: n,
            value: m,
            log_score,
        }));
    }
    Ok(pool)
}

/// Every one-variable extension of every prefix in the set.
pub fn expand_prefixes<M: SequentialModel>(set: &ParticleSet<M::Stats>, model: &M) -> Result<Vec<Candidate>> {
    let mut pool = Vec::new();
    for (k, prefix) in set.particles.iter().enumerate() {
        let n = prefix.len();
        let scores = model.prefix_log_scores(prefix).map_err(|e| e.at(k, n))?;
        pool.extend(scores.into_iter().enumerate().map(|(m, log_score)| Candidate {
            parent_index: k,
            variable: n,
            value: m,
            log_score,
        }));
    }
    Ok(pool)
}

fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then(a.parent_index.cmp(&b.parent_index))
        .then(a.value.cmp(&b.value))
}

fn select<S, K, F>(pool: &[Candidate], k: usize, mut key_of: K, mut build: F) -> Result<ParticleSet<S>>
where
    K: FnMut(&Candidate) -> CanonicalKey,
    F: FnMut(&Candidate) -> Result<Particle<S>>,
{
    let mut ranked: Vec<&Candidate> = pool.iter().filter(|c| c.log_score > f64::NEG_INFINITY).collect();
    if ranked.is_empty() {
        return Err(Error::NoViableContinuation);
    }
    ranked.sort_by(|a, b| by_rank(a, b));

    let mut seen: HashMap<CanonicalKey, f64> = HashMap::with_capacity(k);
    let mut chosen = Vec::with_capacity(k);
    for cand in ranked {
        if chosen.len() == k {
            break;
        }
        let key = key_of(cand);
        if let Some(&kept) = seen.get(&key) {
            // Same assignment reached from two parents: scores must agree.
            debug_assert!(
                (kept - cand.log_score).abs() <= 1e-6 * kept.abs().max(1.0),
                "duplicate assignment scored {kept} and {}",
                cand.log_score
            );
            continue;
        }
        seen.insert(key, cand.log_score);
        chosen.push(cand);
    }

    let mut particles = Vec::with_capacity(chosen.len());
    let mut parents = Vec::with_capacity(chosen.len());
    for cand in chosen {
        particles.push(build(cand).map_err(|e| e.at(cand.parent_index, cand.variable))?);
        parents.push(cand.parent_index);
    }
    let mut set = ParticleSet::new(particles)?;
    set.parents = parents;
    Ok(set)
}

/// Keeps the `k` highest-scoring unique candidates (ties broken by parent
/// index, then value) and materializes them.
pub fn select_top_k<M: DiscreteModel>(
    model: &M,
    parents: &ParticleSet<M::Stats>,
    pool: &[Candidate],
    k: usize,
) -> Result<ParticleSet<M::Stats>> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    select(
        pool,
        k,
        |c| {
            let parent = &parents.particles[c.parent_index];
            model.canonical_key(&model.candidate_assignment(parent, c.variable, c.value))
        },
        |c| model.materialize(&parents.particles[c.parent_index], c.variable, c.value, c.log_score),
    )
}

/// Prefix counterpart of [`select_top_k`].
pub fn select_top_k_prefixes<M: SequentialModel>(
    model: &M,
    parents: &ParticleSet<M::Stats>,
    pool: &[Candidate],
    k: usize,
) -> Result<ParticleSet<M::Stats>> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let mut buf = Vec::new();
    select(
        pool,
        k,
        |c| {
            buf.clear();
            buf.extend_from_slice(&parents.particles[c.parent_index].assignment);
            buf.push(c.value);
            model.canonical_key(&buf)
        },
        |c| model.extend(&parents.particles[c.parent_index], c.value, c.log_score),
    )
}

/// Local coordinate-ascent sweeps over all variables until the bound
/// changes by less than `epsilon` or `max_sweeps` is reached.
pub fn local_dpvi<M: DiscreteModel>(
    model: &M,
    init: ParticleSet<M::Stats>,
    k: usize,
    config: LocalConfig,
) -> Result<(ParticleSet<M::Stats>, BoundTrace)> {
    local_dpvi_with(model, init, k, config, |_, _| {})
}

/// [`local_dpvi`] with a callback after every sweep (sweep index from 1).
pub fn local_dpvi_with<M, F>(
    model: &M,
    init: ParticleSet<M::Stats>,
    k: usize,
    config: LocalConfig,
    mut on_sweep: F,
) -> Result<(ParticleSet<M::Stats>, BoundTrace)>
where
    M: DiscreteModel,
    F: FnMut(usize, &ParticleSet<M::Stats>),
{
    if !(config.epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let mut set = init;
    let mut trace = vec![set.variational_bound()?];
    for sweep in 1..=config.max_sweeps {
        for n in 0..model.num_vars() {
            let pool = expand_candidates(&set, n, model)?;
            set = select_top_k(model, &set, &pool, k)?;
        }
        let bound = set.variational_bound()?;
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(bound);
        on_sweep(sweep, &set);
        if (bound - previous).abs() < config.epsilon {
            break;
        }
    }
    Ok((set, BoundTrace(trace)))
}

/// One left-to-right pass keeping the top `k` unique prefixes at each step.
pub fn sequential_dpvi<M: SequentialModel>(model: &M, k: usize) -> Result<ParticleSet<M::Stats>> {
    let mut set = ParticleSet::new(vec![model.empty_prefix()])?;
    for _ in 0..model.num_vars() {
        let pool = expand_prefixes(&set, model)?;
        set = select_top_k_prefixes(model, &set, &pool, k)?;
    }
    Ok(set)
}

/// Sequential pass followed by local sweeps with the full conditionals.
pub fn smoothing_dpvi<M: SequentialModel>(
    model: &M,
    k: usize,
    config: LocalConfig,
) -> Result<(ParticleSet<M::Stats>, BoundTrace)> {
    let init = sequential_dpvi(model, k)?;
    local_dpvi(model, init, k, config)
}

/// Up to `k` distinct prior draws. Gives up after `max_draws` draws and
/// returns however many unique particles were found.
pub fn init_from_prior<M: DiscreteModel, R: Rng + ?Sized>(
    model: &M,
    k: usize,
    rng: &mut R,
    max_draws: usize,
) -> Result<ParticleSet<M::Stats>> {
    let mut seen = HashMap::new();
    let mut particles = Vec::new();
    for _ in 0..max_draws.max(1) {
        if particles.len() == k {
            break;
        }
        let a = model.prior_sample(rng);
        let key = model.canonical_key(&a);
        if seen.contains_key(&key) {
            continue;
        }
        let p = model.particle(a)?;
        if p.log_score == f64::NEG_INFINITY {
            continue;
        }
        seen.insert(key, ());
        particles.push(p);
    }
    ParticleSet::new(particles)
}
