use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slsrec::autodiff::{Graph, Matrix, Var};
use slsrec::objectives::{contrastive_loss, main_loss, triplet, ContrastInputs, CLAMP};

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// The four hinge terms written out by hand.
fn oracle_con(ul: &[f64], us: &[f64], hl: &[f64], hs: &[f64], m: f64, literal: bool) -> f64 {
    let f = |a: &[f64], p: &[f64], n: &[f64]| (sq(a, p) - sq(a, n) + m).max(0.0);
    let third = if literal { f(us, hl, hs) } else { f(us, hs, hl) };
    f(ul, hl, hs) + f(hl, ul, us) + third + f(hs, us, ul)
}

fn oracle_bce(p: &[f64], y: &[f64]) -> f64 {
    let n = p.len() as f64;
    -p.iter().zip(y).map(|(&p, &y)| y * p.ln() + (1.0 - y) * (1.0 - p).ln()).sum::<f64>() / n
}

fn con(vs: [&[f64]; 4], m: f64, literal: bool) -> f64 {
    let mut g = Graph::new();
    let [ul, us, hl, hs] = vs.map(|v| g.input(Matrix::row_vector(v.to_vec())));
    let x = ContrastInputs { u_long: ul, u_short: us, hat_long: hl, hat_short: hs };
    let l = contrastive_loss(&mut g, x, m, literal).unwrap();
    g.value(l).item()
}

fn vec_of(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn triplet_worked_examples() {
    let mut g = Graph::new();
    let mut row = |v: f64| g.input(Matrix::scalar(v));
    let (a, p, n) = (row(0.0), row(2.0), row(1.0));
    let t = triplet(&mut g, a, p, n, 0.1).unwrap();
    assert!((g.value(t).item() - 3.1).abs() < 1e-15);
    let t = triplet(&mut g, a, a, p, 0.5).unwrap();
    assert_eq!(g.value(t).item(), 0.0);
    let t = triplet(&mut g, a, p, p, 0.5).unwrap();
    assert_eq!(g.value(t).item(), 0.5);
}

#[test]
fn calibrated_and_separated_gives_zero() {
    let (ul, us) = ([0.0, 0.0, 0.0], [3.0, 0.0, 0.0]);
    assert_eq!(con([&ul, &us, &ul, &us], 0.5, false), 0.0);
}

#[test]
fn all_equal_gives_four_margins() {
    let v = [0.2, -0.7, 1.1];
    for m in [0.0, 0.5, 1.25] {
        assert!((con([&v, &v, &v, &v], m, false) - 4.0 * m).abs() < 1e-15);
        assert!((con([&v, &v, &v, &v], m, true) - 4.0 * m).abs() < 1e-15);
    }
}

#[test]
fn cross_entropy_at_one_half_is_ln2() {
    for n in [2usize, 5, 50] {
        let mut g = Graph::new();
        let s = g.input(Matrix::filled(n, 1, 0.5));
        let mut y = vec![0.0; n];
        y[0] = 1.0;
        let (l, _) = main_loss(&mut g, s, &y).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}

#[test]
fn exact_predictions_give_near_zero_loss() {
    let mut g = Graph::new();
    let s = g.input(Matrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]));
    let (l, clamped) = main_loss(&mut g, s, &[1.0, 0.0, 0.0]).unwrap();
    assert!(g.value(l).item() < 1e-11);
    assert_eq!(clamped, 3);
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 50 {
        let d = rng.gen_range(1..6);
        let vs: Vec<Vec<f64>> = (0..4).map(|_| vec_of(&mut rng, d)).collect();
        let m = 0.5;
        let hinge_args = {
            let f = |a: &[f64], p: &[f64], n: &[f64]| sq(a, p) - sq(a, n) + m;
            [f(&vs[0], &vs[2], &vs[3]), f(&vs[2], &vs[0], &vs[1]), f(&vs[1], &vs[3], &vs[2]), f(&vs[3], &vs[1], &vs[0])]
        };
        // resample near the kinks
        if hinge_args.iter().any(|a| a.abs() < 1e-3) {
            continue;
        }
        let mut g = Graph::new();
        let vars: Vec<Var> = vs.iter().map(|v| g.input(Matrix::row_vector(v.clone()))).collect();
        let x = ContrastInputs { u_long: vars[0], u_short: vars[1], hat_long: vars[2], hat_short: vars[3] };
        let l = contrastive_loss(&mut g, x, m, false).unwrap();
        let grads = g.backward(l).unwrap();
        for (i, var) in vars.iter().enumerate() {
            let analytic = grads.wrt(&g, *var);
            for j in 0..d {
                let eps = 1e-6;
                let mut plus = vs.clone();
                plus[i][j] += eps;
                let mut minus = vs.clone();
                minus[i][j] -= eps;
                let at = |w: &Vec<Vec<f64>>| oracle_con(&w[0], &w[1], &w[2], &w[3], m, false);
                let numeric = (at(&plus) - at(&minus)) / (2.0 * eps);
                let err = (analytic.data()[j] - numeric).abs() / numeric.abs().max(1.0);
                assert!(err < 1e-4, "input {i} coord {j}: {} vs {numeric}", analytic.data()[j]);
            }
        }
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn contrastive_matches_oracle(seed in any::<u64>(), d in 1usize..9, m in 0.0f64..2.0, literal in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<Vec<f64>> = (0..4).map(|_| vec_of(&mut rng, d)).collect();
        let got = con([&vs[0], &vs[1], &vs[2], &vs[3]], m, literal);
        let want = oracle_con(&vs[0], &vs[1], &vs[2], &vs[3], m, literal);
        prop_assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn contrastive_is_translation_invariant(seed in any::<u64>(), d in 1usize..9, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<Vec<f64>> = (0..4).map(|_| vec_of(&mut rng, d)).collect();
        let c: Vec<f64> = (0..d).map(|i| shift * (i as f64 + 1.0).sin()).collect();
        let moved: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().zip(&c).map(|(a, b)| a + b).collect()).collect();
        let a = con([&vs[0], &vs[1], &vs[2], &vs[3]], 0.5, false);
        let b = con([&moved[0], &moved[1], &moved[2], &moved[3]], 0.5, false);
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn cross_entropy_matches_oracle_and_ignores_order(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(CLAMP..1.0 - 1e-6)).collect();
        let mut y = vec![0.0; n];
        y[rng.gen_range(0..n)] = 1.0;
        let eval = |p: &[f64], y: &[f64]| {
            let mut g = Graph::new();
            let s = g.input(Matrix::from_vec(p.len(), 1, p.to_vec()));
            let (l, _) = main_loss(&mut g, s, y).unwrap();
            g.value(l).item()
        };
        let got = eval(&p, &y);
        prop_assert!((got - oracle_bce(&p, &y)).abs() <= 1e-12);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.reverse();
        idx.rotate_left(seed as usize % n);
        let (pp, yy): (Vec<f64>, Vec<f64>) = idx.iter().map(|&i| (p[i], y[i])).unzip();
        prop_assert!((eval(&pp, &yy) - got).abs() <= 1e-12);
    }
}
