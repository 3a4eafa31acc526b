//! Infinite relational model for one binary relation over typed entities,
//! with CRP priors per type and Beta-Bernoulli blocks integrated out.
//!
//! Latent variables are the entities of every type, concatenated in type
//! order. Each type's labels are kept in order of first appearance.

use std::collections::HashMap;

use dpvi_core::math::ln_beta;
use dpvi_core::partition::{bell_number, relabel_first_appearance, relabel_with_map, Removal};
use dpvi_core::{CanonicalKey, DiscreteModel, Error, Particle, Result};
use rand::seq::index;
use rand::Rng;

use crate::crp::{crp_log_partition, crp_sample};

/// One observed relation cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// Entity index (within its type) at each relation position.
    pub index: Vec<usize>,
    pub value: bool,
}

/// A relation `T_{d_1} x ... x T_{d_M} -> {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    /// Entity count of each type.
    pub type_sizes: Vec<usize>,
    /// Type occupying each relation position.
    pub positions: Vec<usize>,
    pub cells: Vec<Cell>,
}

impl Relation {
    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::invalid("relation has no positions"));
        }
        if let Some(&t) = self.positions.iter().find(|&&t| t >= self.type_sizes.len()) {
            return Err(Error::invalid(format!("position refers to unknown type {t}")));
        }
        for cell in &self.cells {
            if cell.index.len() != self.positions.len() {
                return Err(Error::ShapeMismatch(format!(
                    "cell {:?} does not match relation arity {}",
                    cell.index,
                    self.positions.len()
                )));
            }
            for (&i, &t) in cell.index.iter().zip(&self.positions) {
                if i >= self.type_sizes[t] {
                    return Err(Error::invalid(format!("cell {:?} is out of range", cell.index)));
                }
            }
        }
        Ok(())
    }

    /// Holds out `fraction` of the cells uniformly without replacement.
    /// Returns `(train, heldout)` relations over the same entities.
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(Relation, Relation)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("held-out fraction must lie in [0, 1]"));
        }
        let n = self.cells.len();
        let k = (fraction * n as f64).round() as usize;
        let mut held = vec![false; n];
        for i in index::sample(rng, n, k) {
            held[i] = true;
        }
        let pick = |want: bool| Relation {
            type_sizes: self.type_sizes.clone(),
            positions: self.positions.clone(),
            cells: self
                .cells
                .iter()
                .zip(&held)
                .filter(|(_, &h)| h == want)
                .map(|(c, _)| c.clone())
                .collect(),
        };
        Ok((pick(false), pick(true)))
    }
}

type BlockKey = Box<[u32]>;

/// Cluster sizes per type and `[zeros, ones]` counts per block.
#[derive(Debug, Clone, PartialEq)]
pub struct IrmStats {
    pub sizes: Vec<Vec<usize>>,
    pub blocks: HashMap<BlockKey, [u32; 2]>,
}

#[derive(Debug, Clone)]
pub struct Irm {
    relation: Relation,
    alpha: f64,
    beta: f64,
    offsets: Vec<usize>,
    /// Cells incident to each global entity.
    incident: Vec<Vec<u32>>,
}

impl Irm {
    pub fn new(relation: Relation, alpha: f64, beta: f64) -> Result<Self> {
        relation.validate()?;
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::invalid("alpha and beta must be positive"));
        }
        let mut offsets = Vec::with_capacity(relation.type_sizes.len() + 1);
        let mut acc = 0;
        for &s in &relation.type_sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        let mut incident = vec![Vec::new(); acc];
        for (c, cell) in relation.cells.iter().enumerate() {
            let mut touched: Vec<usize> = cell
                .index
                .iter()
                .zip(&relation.positions)
                .map(|(&i, &t)| offsets[t] + i)
                .collect();
            touched.sort_unstable();
            touched.dedup();
            for e in touched {
                incident[e].push(c as u32);
            }
        }
        Ok(Irm {
            relation,
            alpha,
            beta,
            offsets,
            incident,
        })
    }

    pub fn relation(&self) -> &Relation {
        &self.relation
    }

    pub fn num_types(&self) -> usize {
        self.relation.type_sizes.len()
    }

    /// `(type, index within type)` of a global entity.
    pub fn locate(&self, e: usize) -> (usize, usize) {
        let t = self.offsets.partition_point(|&o| o <= e) - 1;
        (t, e - self.offsets[t])
    }

    /// Labels of type `t` within a global assignment.
    pub fn type_labels<'a>(&self, x: &'a [usize], t: usize) -> &'a [usize] {
        &x[self.offsets[t]..self.offsets[t + 1]]
    }

    fn block_key(&self, x: &[usize], cell: &Cell) -> BlockKey {
        cell.index
            .iter()
            .zip(&self.relation.positions)
            .map(|(&i, &t)| x[self.offsets[t] + i] as u32)
            .collect()
    }

    fn block_term(&self, counts: [u32; 2]) -> f64 {
        ln_beta(counts[1] as f64 + self.beta, counts[0] as f64 + self.beta) - ln_beta(self.beta, self.beta)
    }

    /// Collapsed log-likelihood of the observed cells.
    pub fn block_log_lik(&self, stats: &IrmStats) -> f64 {
        let mut keys: Vec<&BlockKey> = stats.blocks.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| self.block_term(stats.blocks[k])).sum()
    }

    fn canonical(&self, x: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(x.len());
        for t in 0..self.num_types() {
            out.extend(relabel_first_appearance(self.type_labels(x, t)));
        }
        out
    }

    fn stats_of(&self, x: &[usize]) -> Result<IrmStats> {
        if x.len() != self.offsets[self.num_types()] {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} entities",
                x.len(),
                self.offsets[self.num_types()]
            )));
        }
        let x = self.canonical(x);
        let sizes = (0..self.num_types())
            .map(|t| {
                let labels = self.type_labels(&x, t);
                let mut s = vec![0; labels.iter().copied().max().map_or(0, |m| m + 1)];
                for &l in labels {
                    s[l] += 1;
                }
                s
            })
            .collect();
        let mut blocks: HashMap<BlockKey, [u32; 2]> = HashMap::new();
        for cell in &self.relation.cells {
            blocks.entry(self.block_key(&x, cell)).or_default()[usize::from(cell.value)] += 1;
        }
        Ok(IrmStats { sizes, blocks })
    }

    fn removal(&self, p: &Particle<IrmStats>, e: usize) -> (usize, Removal) {
        let (t, _) = self.locate(e);
        let own = p.assignment[e];
        (t, Removal::new(own, p.stats.sizes[t][own], p.stats.sizes[t].len()))
    }

    fn target(removal: &Removal, m: usize) -> usize {
        if removal.is_new(m) && !removal.singleton {
            removal.num_clusters
        } else {
            removal.original(m)
        }
    }

    /// Block count changes from moving entity `e` to label `to`.
    fn move_delta(&self, x: &[usize], e: usize, to: usize, delta: &mut HashMap<BlockKey, [i64; 2]>) {
        delta.clear();
        let (t, i) = self.locate(e);
        for &c in &self.incident[e] {
            let cell = &self.relation.cells[c as usize];
            let v = usize::from(cell.value);
            let old = self.block_key(x, cell);
            let new: BlockKey = old
                .iter()
                .zip(cell.index.iter().zip(&self.relation.positions))
                .map(|(&k, (&idx, &pt))| if pt == t && idx == i { to as u32 } else { k })
                .collect();
            delta.entry(old).or_default()[v] -= 1;
            delta.entry(new).or_default()[v] += 1;
        }
    }

    fn delta_log_lik(&self, stats: &IrmStats, delta: &HashMap<BlockKey, [i64; 2]>) -> f64 {
        let mut keys: Vec<&BlockKey> = delta.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| {
                let d = delta[k];
                if d == [0, 0] {
                    return 0.0;
                }
                let orig = stats.blocks.get(k).copied().unwrap_or_default();
                let updated = [(orig[0] as i64 + d[0]) as u32, (orig[1] as i64 + d[1]) as u32];
                self.block_term(updated) - self.block_term(orig)
            })
            .sum()
    }

    /// Log posterior-predictive probability of held-out cells under one
    /// particle.
    pub fn heldout_log_lik(&self, p: &Particle<IrmStats>, heldout: &[Cell]) -> Result<f64> {
        let mut total = 0.0;
        for cell in heldout {
            if cell.index.len() != self.relation.positions.len() {
                return Err(Error::ShapeMismatch("held-out cell arity differs from the relation".into()));
            }
            for (&i, &t) in cell.index.iter().zip(&self.relation.positions) {
                if i >= self.relation.type_sizes[t] {
                    return Err(Error::invalid(format!("held-out cell {:?} is out of range", cell.index)));
                }
            }
            let counts = p
                .stats
                .blocks
                .get(&self.block_key(&p.assignment, cell))
                .copied()
                .unwrap_or_default();
            let hit = counts[usize::from(cell.value)] as f64 + self.beta;
            total += (hit / ((counts[0] + counts[1]) as f64 + 2.0 * self.beta)).ln();
        }
        Ok(total)
    }
}

impl DiscreteModel for Irm {
    type Stats = IrmStats;

    fn num_vars(&self) -> usize {
        self.offsets[self.num_types()]
    }

    fn full_log_score(&self, x: &[usize]) -> Result<f64> {
        let stats = self.stats_of(x)?;
        let x = self.canonical(x);
        let prior: f64 = (0..self.num_types())
            .map(|t| crp_log_partition(self.type_labels(&x, t), self.alpha))
            .sum();
        Ok(prior + self.block_log_lik(&stats))
    }

    fn build_stats(&self, x: &[usize]) -> Result<IrmStats> {
        self.stats_of(x)
    }

    fn support(&self, p: &Particle<IrmStats>, e: usize) -> usize {
        self.removal(p, e).1.support()
    }

    fn candidate_log_scores(&self, p: &Particle<IrmStats>, e: usize) -> Result<Vec<f64>> {
        let (t, removal) = self.removal(p, e);
        let sizes = &p.stats.sizes[t];
        let weight = |c: usize| ((sizes[c] - usize::from(c == removal.own)) as f64).ln();
        let current = if removal.singleton {
            self.alpha.ln()
        } else {
            weight(removal.own)
        };
        let mut delta = HashMap::new();
        Ok((0..removal.support())
            .map(|m| {
                if removal.is_unchanged(m) {
                    return p.log_score;
                }
                let target = Self::target(&removal, m);
                let prior = if removal.is_new(m) {
                    self.alpha.ln()
                } else {
                    weight(target)
                };
                self.move_delta(&p.assignment, e, target, &mut delta);
                p.log_score - current + prior + self.delta_log_lik(&p.stats, &delta)
            })
            .collect())
    }

    fn candidate_assignment(&self, p: &Particle<IrmStats>, e: usize, m: usize) -> Vec<usize> {
        let (_, removal) = self.removal(p, e);
        let mut a = p.assignment.clone();
        a[e] = Self::target(&removal, m);
        self.canonical(&a)
    }

    fn materialize(&self, p: &Particle<IrmStats>, e: usize, m: usize, log_score: f64) -> Result<Particle<IrmStats>> {
        let (t, removal) = self.removal(p, e);
        if removal.is_unchanged(m) {
            return Ok(Particle {
                assignment: p.assignment.clone(),
                log_score,
                stats: p.stats.clone(),
            });
        }
        let target = Self::target(&removal, m);
        let mut delta = HashMap::new();
        self.move_delta(&p.assignment, e, target, &mut delta);
        let mut stats = p.stats.clone();
        for (key, d) in delta {
            if d == [0, 0] {
                continue;
            }
            let entry = stats.blocks.entry(key.clone()).or_default();
            for v in 0..2 {
                let updated = entry[v] as i64 + d[v];
                if updated < 0 {
                    return Err(Error::StatsUnderflow(format!("block {key:?} count went negative")));
                }
                entry[v] = updated as u32;
            }
            if *entry == [0, 0] {
                stats.blocks.remove(&key);
            }
        }
        let sizes = &mut stats.sizes[t];
        if target == sizes.len() {
            sizes.push(0);
        }
        sizes[removal.own] -= 1;
        sizes[target] += 1;

        let mut raw = p.assignment.clone();
        raw[e] = target;
        let range = self.offsets[t]..self.offsets[t + 1];
        let (relabeled, map) = relabel_with_map(&raw[range.clone()]);
        let identity = map.len() == sizes.len() && map.iter().enumerate().all(|(old, &new)| new == old);
        if !identity {
            let mut new_sizes = vec![0; relabeled.iter().copied().max().map_or(0, |v| v + 1)];
            for (old, &new) in map.iter().enumerate() {
                if new != usize::MAX {
                    new_sizes[new] = sizes[old];
                }
            }
            *sizes = new_sizes;
            let positions = &self.relation.positions;
            stats.blocks = stats
                .blocks
                .into_iter()
                .map(|(key, counts)| {
                    let key: BlockKey = key
                        .iter()
                        .zip(positions)
                        .map(|(&k, &pt)| if pt == t { map[k as usize] as u32 } else { k })
                        .collect();
                    (key, counts)
                })
                .collect();
            raw[range].copy_from_slice(&relabeled);
        }
        Ok(Particle {
            assignment: raw,
            log_score,
            stats,
        })
    }

    fn canonical_key(&self, x: &[usize]) -> CanonicalKey {
        CanonicalKey::from_values(&self.canonical(x))
    }

    fn enumeration_arity(&self, prefix: &[usize]) -> usize {
        let (t, _) = self.locate(prefix.len());
        let own = &prefix[self.offsets[t]..];
        own.iter().copied().max().map_or(0, |m| m + 1) + 1
    }

    fn enumeration_size(&self) -> Option<u128> {
        Some(
            self.relation
                .type_sizes
                .iter()
                .fold(1u128, |acc, &n| acc.saturating_mul(bell_number(n))),
        )
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut x = Vec::with_capacity(self.num_vars());
        for &n in &self.relation.type_sizes {
            x.extend(crp_sample(n, self.alpha, rng));
        }
        x
    }

    fn check_stats(&self, p: &Particle<IrmStats>) -> Result<()> {
        if self.stats_of(&p.assignment)? != p.stats {
            return Err(Error::InconsistentMultiplicity("cached block counts differ from the assignment".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use dpvi_core::audit_particle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Relation {
        Relation {
            type_sizes: vec![rows, cols],
            positions: vec![0, 1],
            cells: (0..rows)
                .flat_map(|i| (0..cols).map(move |j| (i, j)))
                .map(|(i, j)| Cell {
                    index: vec![i, j],
                    value: f(i, j),
                })
                .collect(),
        }
    }

    #[test]
    fn all_zero_block_is_a_beta_ratio() {
        let irm = Irm::new(dense(2, 2, |_, _| false), 1.0, 1.0).unwrap();
        let stats = irm.build_stats(&[0, 0, 0, 0]).unwrap();
        assert_abs_diff_eq!(irm.block_log_lik(&stats), ln_beta(1.0, 5.0) - ln_beta(1.0, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn no_observed_cells_means_zero_likelihood() {
        let mut rel = dense(2, 3, |_, _| true);
        rel.cells.clear();
        let irm = Irm::new(rel, 1.0, 1.0).unwrap();
        let stats = irm.build_stats(&[0, 1, 0, 0, 1]).unwrap();
        assert_eq!(irm.block_log_lik(&stats), 0.0);
    }

    #[test]
    fn likelihood_is_relabel_invariant() {
        let irm = Irm::new(dense(4, 3, |i, j| (i + j) % 2 == 0), 1.0, 1.0).unwrap();
        let a = irm.full_log_score(&[0, 1, 1, 2, 0, 0, 1]).unwrap();
        let b = irm.full_log_score(&[2, 0, 0, 1, 1, 1, 0]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn moves_match_rescoring_and_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let irm = Irm::new(dense(5, 4, |i, j| (i * 7 + j * 3) % 5 < 2), 1.0, 1.0).unwrap();
        let p = irm.particle(irm.prior_sample(&mut rng)).unwrap();
        for e in 0..irm.num_vars() {
            for (m, s) in irm.candidate_log_scores(&p, e).unwrap().into_iter().enumerate() {
                let q = irm.materialize(&p, e, m, s).unwrap();
                assert!(audit_particle(&irm, &q) < 1e-9);
                irm.check_stats(&q).unwrap();
                assert_eq!(q.assignment, irm.candidate_assignment(&p, e, m));
                // Moving back restores the original score exactly.
                let back = irm
                    .candidate_log_scores(&q, e)
                    .unwrap()
                    .into_iter()
                    .enumerate()
                    .find(|&(m2, _)| irm.canonical_key(&irm.candidate_assignment(&q, e, m2)) == irm.canonical_key(&p.assignment))
                    .unwrap();
                assert_abs_diff_eq!(back.1, p.log_score, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn empty_block_predicts_one_half() {
        let mut rel = dense(2, 2, |_, _| true);
        let heldout = vec![rel.cells.pop().unwrap()];
        rel.cells.clear();
        let irm = Irm::new(rel, 1.0, 1.0).unwrap();
        let p = irm.particle(vec![0, 0, 0, 0]).unwrap();
        assert_abs_diff_eq!(irm.heldout_log_lik(&p, &heldout).unwrap(), 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn split_holds_out_the_requested_fraction() {
        let rel = dense(10, 10, |i, j| i < j);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, test) = rel.split(0.2, &mut rng).unwrap();
        assert_eq!(test.cells.len(), 20);
        assert_eq!(train.cells.len(), 80);
    }

    #[test]
    fn ternary_relations_with_repeated_types() {
        let mut cells = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..2 {
                    cells.push(Cell {
                        index: vec![a, b, k],
                        value: (a + b + k) % 3 == 0,
                    });
                }
            }
        }
        let rel = Relation {
            type_sizes: vec![3, 2],
            positions: vec![0, 0, 1],
            cells,
        };
        let irm = Irm::new(rel, 1.0, 1.0).unwrap();
        let p = irm.particle(vec![0, 1, 0, 0, 1]).unwrap();
        for e in 0..irm.num_vars() {
            for (m, s) in irm.candidate_log_scores(&p, e).unwrap().into_iter().enumerate() {
                let q = irm.materialize(&p, e, m, s).unwrap();
                assert!(audit_particle(&irm, &q) < 1e-9);
                irm.check_stats(&q).unwrap();
            }
        }
    }
}
