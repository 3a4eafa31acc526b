//! Log-space numerics shared by the engine and the models.

pub use statrs::function::gamma::ln_gamma;

/// `log(sum(exp(xs)))` with max subtraction, summed in slice order.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for &x in xs {
        acc += (x - max).exp();
    }
    max + acc.ln()
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Normalizes log-weights in place so that they exponentiate to a
/// probability vector. Returns the log normalizer.
pub fn normalize_log(xs: &mut [f64]) -> f64 {
    let z = log_sum_exp(xs);
    if z.is_finite() {
        for x in xs.iter_mut() {
            *x -= z;
        }
    }
    z
}

/// Samples an index from unnormalized log-probabilities.
pub fn sample_log_categorical<R: rand::Rng + ?Sized>(log_p: &[f64], rng: &mut R) -> usize {
    let z = log_sum_exp(log_p);
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_finite = 0;
    for (i, &lp) in log_p.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        last_finite = i;
        acc += (lp - z).exp();
        if u < acc {
            return i;
        }
    }
    last_finite
}

/// Binary entropy of a Bernoulli(p) in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}
