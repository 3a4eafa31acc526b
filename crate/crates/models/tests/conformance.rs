//! Interface conformance checks run against every model.

use dpvi_core::{audit_particle, audit_prefix, DiscreteModel, SequentialModel};
use dpvi_models::{
    BinaryHmm, BinaryHmmParams, Cell, Dpmm, Ihmm, IhmmHyper, Irm, IsingLattice, Nig, Niw, Relation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_local<M: DiscreteModel>(model: &M, rng: &mut ChaCha8Rng) {
    let p = model.particle(model.prior_sample(rng)).unwrap();
    assert!(audit_particle(model, &p) < 1e-12);
    for n in 0..model.num_vars() {
        let support = model.support(&p, n);
        assert!(support >= 1);
        let scores = model.candidate_log_scores(&p, n).unwrap();
        assert_eq!(scores.len(), support);
        let mut unchanged = 0;
        for (m, &s) in scores.iter().enumerate() {
            let a = model.candidate_assignment(&p, n, m);
            let full = model.full_log_score(&a).unwrap();
            assert!((s - full).abs() < 1e-9, "var {n} value {m}: {s} vs {full}");
            if model.canonical_key(&a) == model.canonical_key(&p.assignment) {
                unchanged += 1;
                assert_eq!(s, p.log_score);
            }
            let key = model.canonical_key(&a);
            let q = model.materialize(&p, n, m, s).unwrap();
            assert_eq!(model.canonical_key(&q.assignment), key);
            model.check_stats(&q).unwrap();
        }
        assert_eq!(unchanged, 1, "exactly one candidate keeps the particle");
    }
}

fn check_prefix<M: SequentialModel>(model: &M, rng: &mut ChaCha8Rng) {
    let mut prefix = model.empty_prefix();
    for _ in 0..model.num_vars() {
        let scores = model.prefix_log_scores(&prefix).unwrap();
        assert!(!scores.is_empty());
        let finite: Vec<usize> = (0..scores.len()).filter(|&m| scores[m].is_finite()).collect();
        let m = finite[rng.random_range(0..finite.len())];
        prefix = model.extend(&prefix, m, scores[m]).unwrap();
        assert!(audit_prefix(model, &prefix) < 1e-9);
    }
    let full = model.full_log_score(&prefix.assignment).unwrap();
    assert!((prefix.log_score - full).abs() < 1e-9);
}

fn relabel_randomly(x: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let width = x.iter().copied().max().map_or(0, |m| m + 1);
    let mut perm: Vec<usize> = (0..width).collect();
    for i in (1..width).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    x.iter().map(|&v| perm[v]).collect()
}

fn points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..dim).map(|d| (i % 3) as f64 * (d as f64 + 1.0) + rng.random_range(-0.5..0.5)).collect())
        .collect()
}

fn relation(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Relation {
    Relation {
        type_sizes: vec![rows, cols],
        positions: vec![0, 1],
        cells: (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < 0.8)
            .map(|(i, j)| Cell {
                index: vec![i, j],
                value: (i + j) % 3 == 0,
            })
            .collect::<Vec<_>>(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_hmm_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = BinaryHmmParams::reference();
        let (_, obs) = params.sample(12, &mut rng);
        let model = BinaryHmm::new(params, obs).unwrap();
        check_local(&model, &mut rng);
        check_prefix(&model, &mut rng);
    }

    #[test]
    fn nig_mixture_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Dpmm::new(Nig::new(2, 25.0, 1.0, 1.0).unwrap(), 0.5, points(&mut rng, 10, 2)).unwrap();
        check_local(&model, &mut rng);
        check_prefix(&model, &mut rng);
        let x = model.prior_sample(&mut rng);
        prop_assert_eq!(model.canonical_key(&relabel_randomly(&x, &mut rng)), model.canonical_key(&x));
    }

    #[test]
    fn niw_mixture_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Dpmm::new(Niw::identity(3, 0.01).unwrap(), 0.1, points(&mut rng, 9, 3)).unwrap();
        check_local(&model, &mut rng);
        check_prefix(&model, &mut rng);
    }

    #[test]
    fn ihmm_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<usize> = (0..12).map(|_| rng.random_range(0..4)).collect();
        let model = Ihmm::new(IhmmHyper::default(), obs, 4).unwrap();
        check_local(&model, &mut rng);
        check_prefix(&model, &mut rng);
        let x = model.prior_sample(&mut rng);
        prop_assert_eq!(model.canonical_key(&relabel_randomly(&x, &mut rng)), model.canonical_key(&x));
        prop_assert!((model.full_log_score(&relabel_randomly(&x, &mut rng)).unwrap()
            - model.full_log_score(&x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn irm_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rel = relation(&mut rng, 5, 4);
        let model = Irm::new(rel, 1.0, 1.0).unwrap();
        check_local(&model, &mut rng);
        let x = model.prior_sample(&mut rng);
        let mut y = relabel_randomly(&x[..5], &mut rng);
        y.extend(relabel_randomly(&x[5..], &mut rng));
        prop_assert_eq!(model.canonical_key(&y), model.canonical_key(&x));
    }

    #[test]
    fn ising_conforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..16).map(|_| rng.random_range(-0.5..0.5)).collect();
        let model = IsingLattice::with_field(4, rng.random_range(-2.0..2.0), theta).unwrap();
        check_local(&model, &mut rng);
        check_prefix(&model, &mut rng);
    }
}
