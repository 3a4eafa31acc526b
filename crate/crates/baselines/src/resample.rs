//! Resampling schemes. Both return ancestor indices, one per output slot.

use rand::Rng;

/// Effective sample size `1 / sum w_k^2` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut c: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    if let Some(last) = c.last_mut() {
        *last = 1.0;
    }
    c
}

/// `k` iid categorical draws.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let c = cumulative(weights);
    (0..k).map(|_| pick(&c, rng.random::<f64>())).collect()
}

/// One draw per stratum `[(j + u_j) / k)`.
pub fn stratified_resample<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let c = cumulative(weights);
    (0..k)
        .map(|j| pick(&c, (j as f64 + rng.random::<f64>()) / k as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert_eq!(ess(&[0.0, 1.0, 0.0]), 1.0);
        assert!((ess(&[0.5, 0.5, 0.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_weights_copy_one_particle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(multinomial_resample(&w, 4, &mut rng), vec![2; 4]);
        assert_eq!(stratified_resample(&w, 4, &mut rng), vec![2; 4]);
    }

    #[test]
    fn stratified_uniform_keeps_each_particle_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(stratified_resample(&[0.2; 5], 5, &mut rng), vec![0, 1, 2, 3, 4]);
        }
    }
}
