//! Two-state HMM with binary observations and fixed parameters.

use dpvi_core::hmm::DenseHmm;
use dpvi_core::{DiscreteModel, Error, Particle, Result, SequentialModel};
use rand::Rng;

/// `alpha_s` = P(x_{n+1} = s | x_n = s), `beta_s` = P(y_n = s | x_n = s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryHmmParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub initial: [f64; 2],
}

impl BinaryHmmParams {
    pub fn new(alpha0: f64, alpha1: f64, beta0: f64, beta1: f64) -> Result<Self> {
        let p = BinaryHmmParams {
            alpha0,
            alpha1,
            beta0,
            beta1,
            initial: [0.5, 0.5],
        };
        p.validate()?;
        Ok(p)
    }

    /// alpha0 = 0.2, alpha1 = 0.1, beta0 = 0.3, beta1 = 0.2.
    pub fn reference() -> Self {
        BinaryHmmParams::new(0.2, 0.1, 0.3, 0.2).expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("beta0", self.beta0),
            ("beta1", self.beta1),
        ] {
            if !(v > 0.0 && v < 0.5) {
                return Err(Error::invalid(format!("{name} must lie in (0, 0.5), got {v}")));
            }
        }
        let [p0, p1] = self.initial;
        if !(p0 >= 0.0 && p1 >= 0.0 && ((p0 + p1) - 1.0).abs() < 1e-12) {
            return Err(Error::invalid("initial distribution must be a probability vector"));
        }
        Ok(())
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        let stay = if from == 0 { self.alpha0 } else { self.alpha1 };
        if from == to {
            stay
        } else {
            1.0 - stay
        }
    }

    pub fn emission(&self, state: usize, symbol: usize) -> f64 {
        let hit = if state == 0 { self.beta0 } else { self.beta1 };
        if state == symbol {
            hit
        } else {
            1.0 - hit
        }
    }

    pub fn to_dense(&self) -> DenseHmm {
        DenseHmm {
            initial: self.initial.to_vec(),
            transition: (0..2).map(|i| (0..2).map(|j| self.transition(i, j)).collect()).collect(),
            emission: (0..2).map(|i| (0..2).map(|s| self.emission(i, s)).collect()).collect(),
        }
    }

    /// Ancestral sample of `(hidden, observed)` sequences.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut hidden = Vec::with_capacity(len);
        let mut obs = Vec::with_capacity(len);
        for t in 0..len {
            let p1 = if t == 0 {
                self.initial[1]
            } else {
                self.transition(hidden[t - 1], 1)
            };
            let x = usize::from(rng.random::<f64>() < p1);
            let y = usize::from(rng.random::<f64>() < self.emission(x, 1));
            hidden.push(x);
            obs.push(y);
        }
        (hidden, obs)
    }
}

/// Posterior over hidden states of an observed binary sequence.
#[derive(Debug, Clone)]
pub struct BinaryHmm {
    params: BinaryHmmParams,
    obs: Vec<usize>,
    ln_initial: [f64; 2],
    ln_trans: [[f64; 2]; 2],
    ln_emit: [[f64; 2]; 2],
}

impl BinaryHmm {
    pub fn new(params: BinaryHmmParams, obs: Vec<usize>) -> Result<Self> {
        params.validate()?;
        if let Some(&bad) = obs.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("observation {bad} is not binary")));
        }
        let ln_trans = [
            [params.transition(0, 0).ln(), params.transition(0, 1).ln()],
            [params.transition(1, 0).ln(), params.transition(1, 1).ln()],
        ];
        let ln_emit = [
            [params.emission(0, 0).ln(), params.emission(0, 1).ln()],
            [params.emission(1, 0).ln(), params.emission(1, 1).ln()],
        ];
        Ok(BinaryHmm {
            params,
            obs,
            ln_initial: [params.initial[0].ln(), params.initial[1].ln()],
            ln_trans,
            ln_emit,
        })
    }

    pub fn params(&self) -> &BinaryHmmParams {
        &self.params
    }

    pub fn observations(&self) -> &[usize] {
        &self.obs
    }

    /// Terms of the joint that involve `x_n`, evaluated at `x_n = v`.
    fn local(&self, x: &[usize], n: usize, v: usize) -> f64 {
        let mut s = self.ln_emit[v][self.obs[n]];
        s += if n == 0 {
            self.ln_initial[v]
        } else {
            self.ln_trans[x[n - 1]][v]
        };
        if n + 1 < x.len() {
            s += self.ln_trans[v][x[n + 1]];
        }
        s
    }

    fn step(&self, prev: Option<usize>, n: usize, v: usize) -> f64 {
        let t = match prev {
            None => self.ln_initial[v],
            Some(p) => self.ln_trans[p][v],
        };
        t + self.ln_emit[v][self.obs[n]]
    }

    fn check_len(&self, x: &[usize]) -> Result<()> {
        if x.len() > self.obs.len() {
            return Err(Error::ShapeMismatch(format!(
                "assignment of length {} for {} observations",
                x.len(),
                self.obs.len()
            )));
        }
        if let Some(&bad) = x.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("hidden state {bad} is not binary")));
        }
        Ok(())
    }
}

impl DiscreteModel for BinaryHmm {
    type Stats = ();

    fn num_vars(&self) -> usize {
        self.obs.len()
    }

    fn full_log_score(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.obs.len() {
            return Err(Error::ShapeMismatch("assignment length differs from sequence length".into()));
        }
        self.prefix_log_score(x)
    }

    fn build_stats(&self, _: &[usize]) -> Result<()> {
        Ok(())
    }

    fn support(&self, _: &Particle<()>, _: usize) -> usize {
        2
    }

    fn candidate_log_scores(&self, p: &Particle<()>, n: usize) -> Result<Vec<f64>> {
        let x = &p.assignment;
        let current = self.local(x, n, x[n]);
        Ok((0..2)
            .map(|v| {
                if v == x[n] {
                    p.log_score
                } else {
                    p.log_score - current + self.local(x, n, v)
                }
            })
            .collect())
    }

    fn materialize(&self, p: &Particle<()>, n: usize, m: usize, log_score: f64) -> Result<Particle<()>> {
        let mut assignment = p.assignment.clone();
        assignment[n] = m;
        Ok(Particle {
            assignment,
            log_score,
            stats: (),
        })
    }

    fn enumeration_arity(&self, _: &[usize]) -> usize {
        2
    }

    fn enumeration_size(&self) -> Option<u128> {
        Some(1u128.checked_shl(self.obs.len() as u32).unwrap_or(u128::MAX))
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.params.sample(self.obs.len(), rng).0
    }
}

impl SequentialModel for BinaryHmm {
    fn empty_prefix(&self) -> Particle<()> {
        Particle {
            assignment: Vec::new(),
            log_score: 0.0,
            stats: (),
        }
    }

    fn prefix_log_scores(&self, prefix: &Particle<()>) -> Result<Vec<f64>> {
        let n = prefix.len();
        if n >= self.obs.len() {
            return Err(Error::invalid("prefix already covers the sequence"));
        }
        let prev = prefix.assignment.last().copied();
        Ok((0..2).map(|v| prefix.log_score + self.step(prev, n, v)).collect())
    }

    fn extend(&self, prefix: &Particle<()>, m: usize, log_score: f64) -> Result<Particle<()>> {
        let mut assignment = prefix.assignment.clone();
        assignment.push(m);
        Ok(Particle {
            assignment,
            log_score,
            stats: (),
        })
    }

    fn prefix_log_score(&self, x: &[usize]) -> Result<f64> {
        self.check_len(x)?;
        let mut s = 0.0;
        for (n, &v) in x.iter().enumerate() {
            s += self.step(n.checked_sub(1).map(|p| x[p]), n, v);
        }
        Ok(s)
    }
}
