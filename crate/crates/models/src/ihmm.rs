//! Infinite HMM with Chinese-restaurant-franchise transitions and collapsed
//! symmetric Dirichlet-multinomial emissions.
//!
//! With `t[j][c]` the number of `j -> c` transitions, `m_c` the column sums
//! and `T` the total, the next state after `j` is an existing cluster `c`
//! with weight `t[j][c] + alpha * m_c / (T + gamma)` and a new cluster with
//! weight `alpha * gamma / (T + gamma)`, normalized by `n_j + alpha`. The
//! first state is drawn from a virtual start state with the same rule.
//!
//! This predictive is not exchangeable in time, so the joint score of a
//! complete sequence is the chained product in time order, and re-scoring a
//! single position replays the transitions after it.

use dpvi_core::math::ln_gamma;
use dpvi_core::metrics::PointEstimateHmm;
use dpvi_core::partition::{bell_number, partition_key, relabel_first_appearance, restricted_growth_arity, Removal};
use dpvi_core::{CanonicalKey, DiscreteModel, Error, Particle, Result, SequentialModel};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IhmmHyper {
    pub alpha: f64,
    pub gamma: f64,
    /// Symmetric Dirichlet concentration of each emission row.
    pub eta: f64,
}

impl Default for IhmmHyper {
    fn default() -> Self {
        IhmmHyper {
            alpha: 1.0,
            gamma: 1.0,
            eta: 1.0,
        }
    }
}

/// Transition and emission counts of a (partial) state sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IhmmStats {
    /// `trans[0]` is the start row, `trans[j + 1][c]` counts `j -> c`.
    pub trans: Vec<Vec<u32>>,
    pub row_sums: Vec<u32>,
    pub col_sums: Vec<u32>,
    pub total: u32,
    /// `emit[c][s]`.
    pub emit: Vec<Vec<u32>>,
    pub emit_totals: Vec<u32>,
    /// Log-probability of the state sequence alone.
    pub trans_log_prob: f64,
}

impl IhmmStats {
    fn empty() -> Self {
        IhmmStats {
            trans: vec![Vec::new()],
            row_sums: vec![0],
            col_sums: Vec::new(),
            total: 0,
            emit: Vec::new(),
            emit_totals: Vec::new(),
            trans_log_prob: 0.0,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.col_sums.len()
    }

    fn open_cluster(&mut self, num_symbols: usize) {
        for row in self.trans.iter_mut() {
            row.push(0);
        }
        let c = self.col_sums.len() + 1;
        self.trans.push(vec![0; c]);
        self.row_sums.push(0);
        self.col_sums.push(0);
        self.emit.push(vec![0; num_symbols]);
        self.emit_totals.push(0);
    }

    /// Counts the transition `prev -> next`, opening `next` if it is new.
    fn count_transition(&mut self, prev: Option<usize>, next: usize, num_symbols: usize) {
        if next == self.num_clusters() {
            self.open_cluster(num_symbols);
        }
        let row = prev.map_or(0, |j| j + 1);
        self.trans[row][next] += 1;
        self.row_sums[row] += 1;
        self.col_sums[next] += 1;
        self.total += 1;
    }
}

#[derive(Debug, Clone)]
pub struct Ihmm {
    hyper: IhmmHyper,
    obs: Vec<usize>,
    num_symbols: usize,
}

/// Dense transition counts for replaying a raw labelling, with rows
/// `0..=C` for clusters and row `C + 1` for the start state.
struct Replay {
    width: usize,
    t: Vec<u32>,
    row: Vec<u32>,
    col: Vec<u32>,
    total: u32,
    seen: Vec<bool>,
}

impl Replay {
    fn new(labels: usize) -> Self {
        Replay {
            width: labels,
            t: vec![0; (labels + 1) * labels],
            row: vec![0; labels + 1],
            col: vec![0; labels],
            total: 0,
            seen: vec![false; labels],
        }
    }

    fn start(&self) -> usize {
        self.width
    }

    fn step(&mut self, hyper: &IhmmHyper, prev: usize, next: usize) -> f64 {
        let (a, g) = (hyper.alpha, hyper.gamma);
        let top = self.total as f64 + g;
        let w = if self.seen[next] {
            self.t[prev * self.width + next] as f64 + a * self.col[next] as f64 / top
        } else {
            a * g / top
        };
        let lp = w.ln() - (self.row[prev] as f64 + a).ln();
        self.t[prev * self.width + next] += 1;
        self.row[prev] += 1;
        self.col[next] += 1;
        self.total += 1;
        self.seen[next] = true;
        lp
    }

    fn run(&mut self, hyper: &IhmmHyper, labels: &[usize], from: usize) -> f64 {
        let mut lp = 0.0;
        for n in from..labels.len() {
            let prev = if n == 0 { self.start() } else { labels[n - 1] };
            lp += self.step(hyper, prev, labels[n]);
        }
        lp
    }
}

impl Ihmm {
    pub fn new(hyper: IhmmHyper, obs: Vec<usize>, num_symbols: usize) -> Result<Self> {
        if !(hyper.alpha > 0.0 && hyper.gamma > 0.0 && hyper.eta > 0.0) {
            return Err(Error::invalid("alpha, gamma and eta must be positive"));
        }
        if num_symbols == 0 {
            return Err(Error::invalid("alphabet is empty"));
        }
        if let Some(&bad) = obs.iter().find(|&&s| s >= num_symbols) {
            return Err(Error::invalid(format!("symbol {bad} outside alphabet of {num_symbols}")));
        }
        Ok(Ihmm {
            hyper,
            obs,
            num_symbols,
        })
    }

    pub fn hyper(&self) -> &IhmmHyper {
        &self.hyper
    }

    pub fn observations(&self) -> &[usize] {
        &self.obs
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// Log predictive of the transition `prev -> next` (`None` is the start
    /// state; `next == C` is a new cluster).
    pub fn transition_log_predictive(&self, stats: &IhmmStats, prev: Option<usize>, next: usize) -> Result<f64> {
        let c = stats.num_clusters();
        let row = match prev {
            None => 0,
            Some(j) if j < c => j + 1,
            Some(j) => return Err(Error::invalid(format!("cluster {j} is not active"))),
        };
        if next > c {
            return Err(Error::invalid(format!("cluster {next} beyond the {c} active clusters plus one")));
        }
        let (a, g) = (self.hyper.alpha, self.hyper.gamma);
        let top = stats.total as f64 + g;
        let w = if next < c {
            stats.trans[row][next] as f64 + a * stats.col_sums[next] as f64 / top
        } else {
            a * g / top
        };
        Ok(w.ln() - (stats.row_sums[row] as f64 + a).ln())
    }

    /// Log predictive of emitting `symbol` from cluster `c` (`c == C` is a
    /// new cluster).
    pub fn emission_log_predictive(&self, stats: &IhmmStats, c: usize, symbol: usize) -> Result<f64> {
        if symbol >= self.num_symbols {
            return Err(Error::invalid(format!("symbol {symbol} outside alphabet")));
        }
        let s = self.num_symbols as f64;
        let eta = self.hyper.eta;
        match c.cmp(&stats.num_clusters()) {
            std::cmp::Ordering::Less => {
                Ok(((stats.emit[c][symbol] as f64 + eta) / (stats.emit_totals[c] as f64 + s * eta)).ln())
            }
            std::cmp::Ordering::Equal => Ok(-s.ln()),
            std::cmp::Ordering::Greater => Err(Error::invalid(format!("cluster {c} is not active"))),
        }
    }

    fn emission_log_marginal(&self, stats: &IhmmStats) -> f64 {
        let eta = self.hyper.eta;
        let s_eta = self.num_symbols as f64 * eta;
        let ln_eta = ln_gamma(eta);
        stats
            .emit
            .iter()
            .zip(&stats.emit_totals)
            .map(|(row, &total)| {
                ln_gamma(s_eta) - ln_gamma(total as f64 + s_eta)
                    + row
                        .iter()
                        .filter(|&&k| k > 0)
                        .map(|&k| ln_gamma(k as f64 + eta) - ln_eta)
                        .sum::<f64>()
            })
            .sum()
    }

    fn stats_of(&self, x: &[usize]) -> Result<IhmmStats> {
        if x.len() > self.obs.len() {
            return Err(Error::ShapeMismatch(format!("{} states for {} observations", x.len(), self.obs.len())));
        }
        let labels = relabel_first_appearance(x);
        let mut stats = IhmmStats::empty();
        for (n, &l) in labels.iter().enumerate() {
            let prev = n.checked_sub(1).map(|p| labels[p]);
            let lp = self.transition_log_predictive(&stats, prev, l)?;
            self.push(&mut stats, n, prev, l, lp);
        }
        Ok(stats)
    }

    fn push(&self, stats: &mut IhmmStats, n: usize, prev: Option<usize>, m: usize, trans_lp: f64) {
        stats.count_transition(prev, m, self.num_symbols);
        stats.emit[m][self.obs[n]] += 1;
        stats.emit_totals[m] += 1;
        stats.trans_log_prob += trans_lp;
    }

    fn removal(&self, p: &Particle<IhmmStats>, n: usize) -> Removal {
        let own = p.assignment[n];
        Removal::new(own, p.stats.emit_totals[own] as usize, p.stats.num_clusters())
    }

    fn target(&self, removal: &Removal, m: usize) -> usize {
        if removal.is_new(m) && !removal.singleton {
            removal.num_clusters
        } else {
            removal.original(m)
        }
    }

    /// Point-estimate HMM over the visited states: posterior-mean
    /// transitions restricted to existing clusters, raw emission counts.
    pub fn point_estimate(&self, stats: &IhmmStats) -> PointEstimateHmm {
        let c = stats.num_clusters();
        let (a, g) = (self.hyper.alpha, self.hyper.gamma);
        let top = stats.total as f64 + g;
        let row = |r: usize| -> Vec<f64> {
            let w: Vec<f64> = (0..c)
                .map(|k| stats.trans[r][k] as f64 + a * stats.col_sums[k] as f64 / top)
                .collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        };
        PointEstimateHmm {
            initial: row(0),
            transition: (1..=c).map(row).collect(),
            emission_counts: stats
                .emit
                .iter()
                .map(|r| r.iter().map(|&k| k as f64).collect())
                .collect(),
        }
    }

    /// Draws a state sequence from the franchise prior.
    pub fn sample_states<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut stats = IhmmStats::empty();
        let mut x = Vec::with_capacity(len);
        for _ in 0..len {
            let prev = x.last().copied();
            let lp: Vec<f64> = (0..=stats.num_clusters())
                .map(|m| self.transition_log_predictive(&stats, prev, m).expect("valid cluster"))
                .collect();
            let m = dpvi_core::math::sample_log_categorical(&lp, rng);
            stats.count_transition(prev, m, 0);
            x.push(m);
        }
        x
    }
}

impl DiscreteModel for Ihmm {
    type Stats = IhmmStats;

    fn num_vars(&self) -> usize {
        self.obs.len()
    }

    fn full_log_score(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.obs.len() {
            return Err(Error::ShapeMismatch(format!("{} states for {} observations", x.len(), self.obs.len())));
        }
        self.prefix_log_score(x)
    }

    fn build_stats(&self, x: &[usize]) -> Result<IhmmStats> {
        self.stats_of(x)
    }

    fn support(&self, p: &Particle<IhmmStats>, n: usize) -> usize {
        self.removal(p, n).support()
    }

    fn candidate_log_scores(&self, p: &Particle<IhmmStats>, n: usize) -> Result<Vec<f64>> {
        let removal = self.removal(p, n);
        let x = &p.assignment;
        let y = self.obs[n];
        let s = self.num_symbols as f64;
        let eta = self.hyper.eta;
        let emit_rest = |c: usize| -> f64 {
            let (k, total) = if c < p.stats.num_clusters() {
                let own = u32::from(c == removal.own);
                (p.stats.emit[c][y] - own, p.stats.emit_totals[c] - own)
            } else {
                (0, 0)
            };
            ((k as f64 + eta) / (total as f64 + s * eta)).ln()
        };
        let current_emit = emit_rest(removal.own);

        // Transitions before n are shared by every candidate.
        let labels = removal.num_clusters + 1;
        let mut prefix = Replay::new(labels);
        let head = {
            let mut lp = 0.0;
            for t in 0..n {
                let prev = if t == 0 { prefix.start() } else { x[t - 1] };
                lp += prefix.step(&self.hyper, prev, x[t]);
            }
            lp
        };
        let mut raw = x.clone();
        let mut out = Vec::with_capacity(removal.support());
        for m in 0..removal.support() {
            if removal.is_unchanged(m) {
                out.push(p.log_score);
                continue;
            }
            let target = self.target(&removal, m);
            raw[n] = target;
            let mut replay = Replay {
                width: prefix.width,
                t: prefix.t.clone(),
                row: prefix.row.clone(),
                col: prefix.col.clone(),
                total: prefix.total,
                seen: prefix.seen.clone(),
            };
            let trans = head + replay.run(&self.hyper, &raw, n);
            let emit = emit_rest(if removal.is_new(m) { usize::MAX } else { target });
            out.push(p.log_score - p.stats.trans_log_prob + trans - current_emit + emit);
        }
        Ok(out)
    }

    fn candidate_assignment(&self, p: &Particle<IhmmStats>, n: usize, m: usize) -> Vec<usize> {
        let removal = self.removal(p, n);
        let mut a = p.assignment.clone();
        a[n] = self.target(&removal, m);
        relabel_first_appearance(&a)
    }

    fn materialize(&self, p: &Particle<IhmmStats>, n: usize, m: usize, log_score: f64) -> Result<Particle<IhmmStats>> {
        let assignment = self.candidate_assignment(p, n, m);
        let stats = if assignment == p.assignment {
            p.stats.clone()
        } else {
            self.stats_of(&assignment)?
        };
        Ok(Particle {
            assignment,
            log_score,
            stats,
        })
    }

    fn canonical_key(&self, x: &[usize]) -> CanonicalKey {
        partition_key(x)
    }

    fn enumeration_arity(&self, prefix: &[usize]) -> usize {
        restricted_growth_arity(prefix)
    }

    fn enumeration_size(&self) -> Option<u128> {
        Some(bell_number(self.obs.len()))
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.sample_states(self.obs.len(), rng)
    }

    fn check_stats(&self, p: &Particle<IhmmStats>) -> Result<()> {
        let fresh = self.stats_of(&p.assignment)?;
        if fresh.trans != p.stats.trans || fresh.emit != p.stats.emit {
            return Err(Error::InconsistentMultiplicity("cached counts differ from the assignment".into()));
        }
        Ok(())
    }
}

impl SequentialModel for Ihmm {
    fn empty_prefix(&self) -> Particle<IhmmStats> {
        Particle {
            assignment: Vec::new(),
            log_score: 0.0,
            stats: IhmmStats::empty(),
        }
    }

    fn prefix_log_scores(&self, prefix: &Particle<IhmmStats>) -> Result<Vec<f64>> {
        let n = prefix.len();
        let y = *self
            .obs
            .get(n)
            .ok_or_else(|| Error::invalid("prefix already covers the sequence"))?;
        let prev = prefix.assignment.last().copied();
        (0..=prefix.stats.num_clusters())
            .map(|m| {
                Ok(prefix.log_score
                    + self.transition_log_predictive(&prefix.stats, prev, m)?
                    + self.emission_log_predictive(&prefix.stats, m, y)?)
            })
            .collect()
    }

    fn extend(&self, prefix: &Particle<IhmmStats>, m: usize, log_score: f64) -> Result<Particle<IhmmStats>> {
        let n = prefix.len();
        let prev = prefix.assignment.last().copied();
        let lp = self.transition_log_predictive(&prefix.stats, prev, m)?;
        let mut stats = prefix.stats.clone();
        self.push(&mut stats, n, prev, m, lp);
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
        Ok(stats.trans_log_prob + self.emission_log_marginal(&stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use dpvi_core::math::log_sum_exp;
    use dpvi_core::{audit_particle, audit_prefix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(obs: Vec<usize>) -> Ihmm {
        Ihmm::new(IhmmHyper::default(), obs, 3).unwrap()
    }

    #[test]
    fn empty_state_opens_a_cluster() {
        let m = model(vec![0]);
        let s = IhmmStats::empty();
        assert_eq!(m.transition_log_predictive(&s, None, 0).unwrap(), 0.0);
        assert!(m.transition_log_predictive(&s, None, 1).is_err());
        assert_eq!(m.prefix_log_scores(&m.empty_prefix()).unwrap().len(), 1);
    }

    #[test]
    fn franchise_predictive_closed_form() {
        // Two clusters, cluster 0 has moved to itself twice; the start row
        // is empty.
        let mut s = IhmmStats::empty();
        s.open_cluster(3);
        s.open_cluster(3);
        s.trans[1][0] = 2;
        s.row_sums[1] = 2;
        s.col_sums[0] = 2;
        s.total = 2;
        let m = model(vec![0]);
        let p: Vec<f64> = (0..3)
            .map(|c| m.transition_log_predictive(&s, Some(0), c).unwrap().exp())
            .collect();
        assert_abs_diff_eq!(p[0], (2.0 + 2.0 / 3.0) / 3.0, epsilon = 1e-15);
        assert_eq!(p[1], 0.0);
        assert_abs_diff_eq!(p[2], (1.0 / 3.0) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn emission_predictive_examples() {
        let m = Ihmm::new(IhmmHyper::default(), vec![0, 0, 0, 1], 2).unwrap();
        let p = m.particle(vec![0, 0, 0, 0]).unwrap();
        assert_abs_diff_eq!(
            m.emission_log_predictive(&p.stats, 0, 0).unwrap(),
            (4.0f64 / 6.0).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            m.emission_log_predictive(&p.stats, 1, 1).unwrap(),
            0.5f64.ln(),
            epsilon = 1e-15
        );
        assert!(m.emission_log_predictive(&p.stats, 0, 2).is_err());
    }

    #[test]
    fn predictives_normalize_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let obs: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
            let m = model(obs);
            let x = m.prior_sample(&mut rng);
            let p = m.particle(x).unwrap();
            let c = p.stats.num_clusters();
            for prev in std::iter::once(None).chain((0..c).map(Some)) {
                let lp: Vec<f64> = (0..=c)
                    .map(|k| m.transition_log_predictive(&p.stats, prev, k).unwrap())
                    .collect();
                assert_abs_diff_eq!(log_sum_exp(&lp), 0.0, epsilon = 1e-12);
            }
            for k in 0..=c {
                let lp: Vec<f64> = (0..3).map(|s| m.emission_log_predictive(&p.stats, k, s).unwrap()).collect();
                assert_abs_diff_eq!(log_sum_exp(&lp), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn candidates_match_rescoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let obs: Vec<usize> = (0..15).map(|_| rng.random_range(0..3)).collect();
        let m = model(obs);
        let p = m.particle(m.prior_sample(&mut rng)).unwrap();
        for n in 0..15 {
            let scores = m.candidate_log_scores(&p, n).unwrap();
            assert_eq!(scores.len(), m.support(&p, n));
            for (v, s) in scores.into_iter().enumerate() {
                let q = m.materialize(&p, n, v, s).unwrap();
                assert!(audit_particle(&m, &q) < 1e-9, "n={n} v={v}");
                m.check_stats(&q).unwrap();
            }
        }
    }

    #[test]
    fn prefix_chain_reproduces_full_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let obs: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
        let m = model(obs);
        let x = m.prior_sample(&mut rng);
        let mut prefix = m.empty_prefix();
        for &v in &x {
            let scores = m.prefix_log_scores(&prefix).unwrap();
            assert_eq!(scores.len(), prefix.stats.num_clusters() + 1);
            prefix = m.extend(&prefix, v, scores[v]).unwrap();
            assert!(audit_prefix(&m, &prefix) < 1e-9);
        }
        assert_abs_diff_eq!(prefix.log_score, m.full_log_score(&x).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn remove_and_restore_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let obs: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
        let m = model(obs);
        let p = m.particle(m.prior_sample(&mut rng)).unwrap();
        for n in 0..12 {
            let scores = m.candidate_log_scores(&p, n).unwrap();
            let other = (0..scores.len()).find(|&v| !m.removal(&p, n).is_unchanged(v)).unwrap();
            let q = m.materialize(&p, n, other, scores[other]).unwrap();
            let back = (0..m.support(&q, n))
                .find(|&v| m.candidate_assignment(&q, n, v) == p.assignment)
                .unwrap();
            let r = m.materialize(&q, n, back, p.log_score).unwrap();
            assert_eq!(r.stats, p.stats);
        }
    }

    #[test]
    fn point_estimate_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let obs: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
        let m = model(obs);
        let p = m.particle(m.prior_sample(&mut rng)).unwrap();
        let est = m.point_estimate(&p.stats);
        assert_abs_diff_eq!(est.initial.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for row in &est.transition {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        let total: f64 = est.emission_counts.iter().flatten().sum();
        assert_eq!(total, 40.0);
    }
}
