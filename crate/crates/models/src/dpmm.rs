//! Dirichlet process mixture with a CRP prior and a collapsed conjugate
//! likelihood. Assignments are cluster labels in order of first appearance.

use dpvi_core::math::log_sum_exp;
use dpvi_core::partition::{bell_number, partition_key, relabel_first_appearance, relabel_with_map, Removal};
use dpvi_core::{CanonicalKey, DiscreteModel, Error, Particle, Result, SequentialModel};
use rand::Rng;

use crate::conjugate::Conjugate;
use crate::crp::{crp_log_sizes, crp_sample};

#[derive(Debug, Clone)]
pub struct Dpmm<C: Conjugate> {
    lik: C,
    alpha: f64,
    data: Vec<Vec<f64>>,
}

/// Cluster sizes and per-cluster sufficient statistics, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmmStats<S> {
    pub sizes: Vec<usize>,
    pub clusters: Vec<S>,
}

impl<C: Conjugate> Dpmm<C> {
    pub fn new(lik: C, alpha: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if let Some(bad) = data.iter().find(|y| y.len() != lik.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "point of dimension {} for a {}-dimensional likelihood",
                bad.len(),
                lik.dim()
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contain non-finite values"));
        }
        Ok(Dpmm { lik, alpha, data })
    }

    pub fn likelihood(&self) -> &C {
        &self.lik
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    fn check(&self, x: &[usize]) -> Result<()> {
        if x.len() > self.data.len() {
            return Err(Error::ShapeMismatch(format!("{} labels for {} points", x.len(), self.data.len())));
        }
        Ok(())
    }

    fn stats_of(&self, x: &[usize]) -> Result<DpmmStats<C::Stats>> {
        self.check(x)?;
        let labels = relabel_first_appearance(x);
        let c = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut stats = DpmmStats {
            sizes: vec![0; c],
            clusters: vec![self.lik.empty(); c],
        };
        for (i, &l) in labels.iter().enumerate() {
            stats.sizes[l] += 1;
            self.lik.add(&mut stats.clusters[l], &self.data[i])?;
        }
        Ok(stats)
    }

    fn score_stats(&self, stats: &DpmmStats<C::Stats>) -> f64 {
        crp_log_sizes(&stats.sizes, self.alpha) + stats.clusters.iter().map(|s| self.lik.log_marginal(s)).sum::<f64>()
    }

    fn removal(&self, p: &Particle<DpmmStats<C::Stats>>, n: usize) -> Removal {
        let own = p.assignment[n];
        Removal::new(own, p.stats.sizes[own], p.stats.sizes.len())
    }

    /// Label in the current labelling for reduced value `m`; a fresh label
    /// is one past the last occupied cluster.
    fn target(&self, removal: &Removal, m: usize) -> usize {
        if removal.is_new(m) && !removal.singleton {
            removal.num_clusters
        } else {
            removal.original(m)
        }
    }

    /// `log p(y | particle)` for a new point: the CRP-weighted mixture of
    /// cluster predictives.
    pub fn predictive_log_density(&self, stats: &DpmmStats<C::Stats>, y: &[f64]) -> f64 {
        let n: usize = stats.sizes.iter().sum();
        let denom = (n as f64 + self.alpha).ln();
        let mut terms: Vec<f64> = stats
            .sizes
            .iter()
            .zip(&stats.clusters)
            .map(|(&t, s)| (t as f64).ln() - denom + self.lik.log_predictive(s, y))
            .collect();
        terms.push(self.alpha.ln() - denom + self.lik.log_predictive(&self.lik.empty(), y));
        log_sum_exp(&terms)
    }
}

impl<C: Conjugate> DiscreteModel for Dpmm<C> {
    type Stats = DpmmStats<C::Stats>;

    fn num_vars(&self) -> usize {
        self.data.len()
    }

    fn full_log_score(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!("{} labels for {} points", x.len(), self.data.len())));
        }
        Ok(self.score_stats(&self.stats_of(x)?))
    }

    fn build_stats(&self, x: &[usize]) -> Result<Self::Stats> {
        self.stats_of(x)
    }

    fn support(&self, p: &Particle<Self::Stats>, n: usize) -> usize {
        self.removal(p, n).support()
    }

    fn candidate_log_scores(&self, p: &Particle<Self::Stats>, n: usize) -> Result<Vec<f64>> {
        let removal = self.removal(p, n);
        let y = &self.data[n];
        let own = removal.own;
        let mut own_rest = p.stats.clusters[own].clone();
        self.lik.remove(&mut own_rest, y)?;
        let weight = |c: usize| {
            let t = p.stats.sizes[c] - usize::from(c == own);
            (t as f64).ln()
        };
        let current = if removal.singleton {
            self.alpha.ln()
        } else {
            weight(own)
        } + self.lik.log_predictive(&own_rest, y);
        let empty = self.lik.empty();
        Ok((0..removal.support())
            .map(|m| {
                if removal.is_unchanged(m) {
                    return p.log_score;
                }
                let term = if removal.is_new(m) {
                    self.alpha.ln() + self.lik.log_predictive(&empty, y)
                } else {
                    let c = removal.original(m);
                    weight(c) + self.lik.log_predictive(&p.stats.clusters[c], y)
                };
                p.log_score - current + term
            })
            .collect())
    }

    fn candidate_assignment(&self, p: &Particle<Self::Stats>, n: usize, m: usize) -> Vec<usize> {
        let removal = self.removal(p, n);
        let mut a = p.assignment.clone();
        a[n] = self.target(&removal, m);
        relabel_first_appearance(&a)
    }

    fn materialize(
        &self,
        p: &Particle<Self::Stats>,
        n: usize,
        m: usize,
        log_score: f64,
    ) -> Result<Particle<Self::Stats>> {
        let removal = self.removal(p, n);
        if removal.is_unchanged(m) {
            return Ok(Particle {
                assignment: p.assignment.clone(),
                log_score,
                stats: p.stats.clone(),
            });
        }
        let target = self.target(&removal, m);
        let y = &self.data[n];
        let mut sizes = p.stats.sizes.clone();
        let mut clusters = p.stats.clusters.clone();
        if target == sizes.len() {
            sizes.push(0);
            clusters.push(self.lik.empty());
        }
        sizes[removal.own] -= 1;
        self.lik.remove(&mut clusters[removal.own], y)?;
        sizes[target] += 1;
        self.lik.add(&mut clusters[target], y)?;

        let mut raw = p.assignment.clone();
        raw[n] = target;
        let (assignment, map) = relabel_with_map(&raw);
        let occupied = assignment.iter().copied().max().map_or(0, |v| v + 1);
        let mut new_sizes = vec![0; occupied];
        let mut new_clusters = vec![self.lik.empty(); occupied];
        for (old, &new) in map.iter().enumerate() {
            if new != usize::MAX {
                new_sizes[new] = sizes[old];
                std::mem::swap(&mut new_clusters[new], &mut clusters[old]);
            }
        }
        Ok(Particle {
            assignment,
            log_score,
            stats: DpmmStats {
                sizes: new_sizes,
                clusters: new_clusters,
            },
        })
    }

    fn canonical_key(&self, x: &[usize]) -> CanonicalKey {
        partition_key(x)
    }

    fn enumeration_arity(&self, prefix: &[usize]) -> usize {
        dpvi_core::partition::restricted_growth_arity(prefix)
    }

    fn enumeration_size(&self) -> Option<u128> {
        Some(bell_number(self.data.len()))
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        crp_sample(self.data.len(), self.alpha, rng)
    }

    fn check_stats(&self, p: &Particle<Self::Stats>) -> Result<()> {
        let fresh = self.stats_of(&p.assignment)?;
        if fresh.sizes != p.stats.sizes {
            return Err(Error::InconsistentMultiplicity(format!(
                "cached sizes {:?} differ from {:?}",
                p.stats.sizes, fresh.sizes
            )));
        }
        for (c, (a, b)) in fresh.clusters.iter().zip(&p.stats.clusters).enumerate() {
            let drift = (self.lik.log_marginal(a) - self.lik.log_marginal(b)).abs();
            if !(drift <= 1e-9) {
                return Err(Error::invalid(format!("cluster {c} statistics drifted by {drift}")));
            }
        }
        Ok(())
    }
}

impl<C: Conjugate> SequentialModel for Dpmm<C> {
    fn empty_prefix(&self) -> Particle<Self::Stats> {
        Particle {
            assignment: Vec::new(),
            log_score: 0.0,
            stats: DpmmStats {
                sizes: Vec::new(),
                clusters: Vec::new(),
            },
        }
    }

    fn prefix_log_scores(&self, prefix: &Particle<Self::Stats>) -> Result<Vec<f64>> {
        let n = prefix.len();
        let y = self
            .data
            .get(n)
            .ok_or_else(|| Error::invalid("prefix already covers the data"))?;
        let denom = (n as f64 + self.alpha).ln();
        let s = &prefix.stats;
        let mut scores: Vec<f64> = s
            .sizes
            .iter()
            .zip(&s.clusters)
            .map(|(&t, c)| prefix.log_score + (t as f64).ln() - denom + self.lik.log_predictive(c, y))
            .collect();
        scores.push(prefix.log_score + self.alpha.ln() - denom + self.lik.log_predictive(&self.lik.empty(), y));
        Ok(scores)
    }

    fn extend(&self, prefix: &Particle<Self::Stats>, m: usize, log_score: f64) -> Result<Particle<Self::Stats>> {
        let n = prefix.len();
        let mut stats = prefix.stats.clone();
        if m > stats.sizes.len() {
            return Err(Error::invalid(format!("label {m} skips past a fresh cluster")));
        }
        if m == stats.sizes.len() {
            stats.sizes.push(0);
            stats.clusters.push(self.lik.empty());
        }
        stats.sizes[m] += 1;
        self.lik.add(&mut stats.clusters[m], &self.data[n])?;
        let mut assignment = prefix.assignment.clone();
        assignment.push(m);
        Ok(Particle {
            assignment,
            log_score,
            stats,
        })
    }

    fn prefix_log_score(&self, x: &[usize]) -> Result<f64> {
        let stats = self.stats_of(x)?;
        Ok(self.score_stats(&stats))
    }
}
