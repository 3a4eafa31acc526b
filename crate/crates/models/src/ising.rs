//! Square-lattice Ising model. Value 0 is spin -1 and value 1 is spin +1;
//! the log-score is `beta * sum_{edges} s_i s_j + sum_i theta_i s_i`.

use dpvi_core::math::log_sum_exp;
use dpvi_core::{DiscreteModel, Error, Particle, Result, SequentialModel};
use rand::Rng;

/// Largest side for the transfer-matrix partition function.
pub const TRANSFER_MAX_SIDE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct IsingLattice {
    side: usize,
    beta: f64,
    theta: Vec<f64>,
}

fn spin(v: usize) -> f64 {
    if v == 0 {
        -1.0
    } else {
        1.0
    }
}

impl IsingLattice {
    /// Zero-field lattice of `side x side` spins in raster order.
    pub fn new(side: usize, beta: f64) -> Result<Self> {
        IsingLattice::with_field(side, beta, vec![0.0; side * side])
    }

    pub fn with_field(side: usize, beta: f64, theta: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("lattice side must be positive"));
        }
        if theta.len() != side * side {
            return Err(Error::ShapeMismatch(format!("field of length {} for {} spins", theta.len(), side * side)));
        }
        if !beta.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("coupling and field must be finite"));
        }
        Ok(IsingLattice { side, beta, theta })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn num_edges(&self) -> usize {
        2 * self.side * (self.side - 1)
    }

    /// Four-neighbourhood of site `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = (i / self.side, i % self.side);
        let l = self.side;
        [
            (r > 0).then(|| i - l),
            (r + 1 < l).then(|| i + l),
            (c > 0).then(|| i - 1),
            (c + 1 < l).then(|| i + 1),
        ]
        .into_iter()
        .flatten()
    }

    /// Neighbours of `i` that come earlier in raster order.
    fn earlier_neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (r, c) = (i / self.side, i % self.side);
        let l = self.side;
        [(r > 0).then(|| i - l), (c > 0).then(|| i - 1)].into_iter().flatten()
    }

    fn local_field(&self, x: &[usize], i: usize) -> f64 {
        self.beta * self.neighbors(i).map(|j| spin(x[j])).sum::<f64>() + self.theta[i]
    }

    fn check(&self, x: &[usize], full: bool) -> Result<()> {
        let n = self.side * self.side;
        if (full && x.len() != n) || x.len() > n {
            return Err(Error::ShapeMismatch(format!("{} spins for a lattice of {n}", x.len())));
        }
        if let Some(&bad) = x.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("spin value {bad} is not binary")));
        }
        Ok(())
    }

    /// Exact `log Z` by a row-to-row transfer matrix.
    pub fn exact_log_z(&self) -> Result<f64> {
        let l = self.side;
        if l > TRANSFER_MAX_SIDE {
            return Err(Error::CapExceeded {
                required: 1u128 << (2 * l).min(127),
                cap: 1u128 << (2 * TRANSFER_MAX_SIDE),
            });
        }
        let states = 1usize << l;
        let row_spin = |s: usize, c: usize| if (s >> c) & 1 == 1 { 1.0 } else { -1.0 };
        let row_energy = |s: usize, r: usize| -> f64 {
            let mut e = 0.0;
            for c in 0..l {
                e += self.theta[r * l + c] * row_spin(s, c);
                if c + 1 < l {
                    e += self.beta * row_spin(s, c) * row_spin(s, c + 1);
                }
            }
            e
        };
        let between = |a: usize, b: usize| -> f64 {
            // sum_c s_a(c) s_b(c) = l - 2 * (differing columns)
            self.beta * (l as f64 - 2.0 * (a ^ b).count_ones() as f64)
        };
        let mut msg: Vec<f64> = (0..states).map(|s| row_energy(s, 0)).collect();
        let mut terms = vec![0.0; states];
        for r in 1..l {
            msg = (0..states)
                .map(|b| {
                    for a in 0..states {
                        terms[a] = msg[a] + between(a, b);
                    }
                    log_sum_exp(&terms) + row_energy(b, r)
                })
                .collect();
        }
        Ok(log_sum_exp(&msg))
    }

    /// Both uniform configurations.
    pub fn ground_states(&self) -> [Vec<usize>; 2] {
        let n = self.side * self.side;
        [vec![0; n], vec![1; n]]
    }
}

impl DiscreteModel for IsingLattice {
    type Stats = ();

    fn num_vars(&self) -> usize {
        self.side * self.side
    }

    fn full_log_score(&self, x: &[usize]) -> Result<f64> {
        self.check(x, true)?;
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
        let field = self.local_field(x, n);
        let current = spin(x[n]);
        Ok((0..2)
            .map(|v| {
                if v == x[n] {
                    p.log_score
                } else {
                    p.log_score + (spin(v) - current) * field
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
        Some(1u128.checked_shl(self.num_vars() as u32).unwrap_or(u128::MAX))
    }

    /// Independent fair coins.
    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.num_vars()).map(|_| usize::from(rng.random::<bool>())).collect()
    }
}

impl SequentialModel for IsingLattice {
    fn empty_prefix(&self) -> Particle<()> {
        Particle {
            assignment: Vec::new(),
            log_score: 0.0,
            stats: (),
        }
    }

    fn prefix_log_scores(&self, prefix: &Particle<()>) -> Result<Vec<f64>> {
        let n = prefix.len();
        if n >= self.num_vars() {
            return Err(Error::invalid("prefix already covers the lattice"));
        }
        let x = &prefix.assignment;
        let field = self.beta * self.earlier_neighbors(n).map(|j| spin(x[j])).sum::<f64>() + self.theta[n];
        Ok((0..2).map(|v| prefix.log_score + spin(v) * field).collect())
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

    /// Energy of the edges and fields within the prefix.
    fn prefix_log_score(&self, x: &[usize]) -> Result<f64> {
        self.check(x, false)?;
        let mut s = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let si = spin(v);
            s += self.theta[i] * si;
            for j in self.earlier_neighbors(i) {
                s += self.beta * si * spin(x[j]);
            }
        }
        Ok(s)
    }
}
