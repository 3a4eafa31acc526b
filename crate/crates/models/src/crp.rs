//! Chinese restaurant process prior.

use dpvi_core::math::ln_gamma;
use dpvi_core::partition::{num_clusters, Removal};
use dpvi_core::{Error, Result};
use rand::Rng;

/// Log predictive of the next customer joining table `c` (or a new table
/// when `c == sizes.len()`), given the current table sizes.
pub fn crp_log_prior(sizes: &[usize], alpha: f64, c: usize) -> Result<f64> {
    let n: usize = sizes.iter().sum();
    let denom = (n as f64 + alpha).ln();
    match c.cmp(&sizes.len()) {
        std::cmp::Ordering::Less => {
            if sizes[c] == 0 {
                return Err(Error::invalid(format!("table {c} is empty")));
            }
            Ok((sizes[c] as f64).ln() - denom)
        }
        std::cmp::Ordering::Equal => Ok(alpha.ln() - denom),
        std::cmp::Ordering::Greater => Err(Error::invalid(format!(
            "table {c} beyond the {} occupied tables plus one",
            sizes.len()
        ))),
    }
}

/// Log probability of a whole partition under CRP(alpha).
pub fn crp_log_partition(labels: &[usize], alpha: f64) -> f64 {
    let c = num_clusters(labels);
    let mut sizes = vec![0usize; c];
    for &l in labels {
        sizes[l] += 1;
    }
    crp_log_sizes(&sizes, alpha)
}

/// [`crp_log_partition`] from the table sizes alone.
pub fn crp_log_sizes(sizes: &[usize], alpha: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    let occupied: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
    occupied.len() as f64 * alpha.ln() + occupied.iter().map(|&s| ln_gamma(s as f64)).sum::<f64>() + ln_gamma(alpha)
        - ln_gamma(alpha + n as f64)
}

/// Unnormalized log CRP weight of re-seating a customer currently at table
/// `removal.own`, for every reduced candidate value. The shared denominator
/// is omitted.
pub fn reseat_log_weights(sizes: &[usize], removal: &Removal, alpha: f64) -> Vec<f64> {
    (0..removal.support())
        .map(|m| {
            if removal.is_new(m) {
                alpha.ln()
            } else {
                let c = removal.original(m);
                let t = sizes[c] - usize::from(c == removal.own);
                (t as f64).ln()
            }
        })
        .collect()
}

/// Draws a labelling of `n` items from CRP(alpha), labels in order of first
/// appearance.
pub fn crp_sample<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<usize> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.random::<f64>() * (i as f64 + alpha);
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (c, &s) in sizes.iter().enumerate() {
            acc += s as f64;
            if u < acc {
                chosen = c;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(0);
        }
        sizes[chosen] += 1;
        labels.push(chosen);
    }
    labels
}
