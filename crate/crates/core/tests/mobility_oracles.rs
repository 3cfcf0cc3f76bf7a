use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srgbm_core::mobility::{generator_first_passage, stationary_distribution};
use srgbm_core::{
    embedded_chain, generator_matrix, tmfpt, tmfpt_continuous, Error, GeneratorMatrix, GeneratorVariant,
    TransitionMatrix,
};

fn random_chain(rng: &mut ChaCha8Rng, k: usize) -> TransitionMatrix {
    let mut a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() + 0.01);
    for i in 0..k {
        let s: f64 = a.row(i).sum();
        a.row_mut(i).unscale_mut(s);
    }
    TransitionMatrix::with_tolerance(a, 1.0, 1e-9, true).unwrap()
}

/// Expected hitting times of `target` from every state, by making it
/// absorbing and solving `(I - P_T) m = 1` on the remaining states.
fn absorbing_solve(p: &DMatrix<f64>, target: usize) -> Vec<f64> {
    let k = p.nrows();
    let others: Vec<usize> = (0..k).filter(|&i| i != target).collect();
    let n = others.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - p[(others[i], others[j])]
    });
    let m = a.lu().solve(&DVector::from_element(n, 1.0)).unwrap();
    let mut out = vec![0.0; k];
    for (i, &s) in others.iter().enumerate() {
        out[s] = m[i];
    }
    out
}

#[test]
fn uniform_chain_takes_k_steps() {
    let m = TransitionMatrix::new(DMatrix::from_element(10, 10, 0.1), 10.0).unwrap();
    let t = tmfpt(&m).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let expect = if i == j { 0.0 } else { 10.0 };
            assert!((t.get(i, j) - expect).abs() < 1e-12, "{i} {j} {}", t.get(i, j));
        }
    }
}

#[test]
fn two_state_chain() {
    let m = TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.75, 0.25]), 1.0).unwrap();
    let t = tmfpt(&m).unwrap();
    assert!((t.get(0, 1) - 2.0).abs() < 1e-12);
    assert!((t.get(1, 0) - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn fundamental_matrix_matches_absorbing_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let p = random_chain(&mut rng, 5);
        let t = tmfpt(&p).unwrap();
        for target in 0..5 {
            let brute = absorbing_solve(p.entries(), target);
            for from in 0..5 {
                let rel = (t.get(from, target) - brute[from]).abs() / brute[from].max(1.0);
                assert!(rel < 1e-9, "{from}->{target}: {} vs {}", t.get(from, target), brute[from]);
            }
        }
    }
}

#[test]
fn first_step_recurrence_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let p = random_chain(&mut rng, 6);
        let t = tmfpt(&p).unwrap();
        for k in 0..6 {
            for l in (0..6).filter(|&l| l != k) {
                let rhs: f64 = 1.0 + (0..6).filter(|&j| j != l).map(|j| p.get(k, j) * t.get(j, l)).sum::<f64>();
                assert!((t.get(k, l) - rhs).abs() < 1e-9 * rhs);
            }
        }
    }
}

#[test]
fn relabeling_permutes_first_passage_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = random_chain(&mut rng, 5);
    let perm = [3, 0, 4, 1, 2];
    let q = p.permuted(&perm).unwrap();
    let (tp, tq) = (tmfpt(&p).unwrap(), tmfpt(&q).unwrap());
    for i in 0..5 {
        for j in 0..5 {
            assert!((tq.get(perm[i], perm[j]) - tp.get(i, j)).abs() < 1e-9 * tp.get(i, j).max(1.0));
        }
    }
}

#[test]
fn stationary_vector_is_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = random_chain(&mut rng, 7);
    let pi = stationary_distribution(&p).unwrap();
    let moved = p.entries().transpose() * &pi;
    assert!((moved - &pi).amax() < 1e-12);
    assert!((pi.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn reducible_chain_is_rejected() {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
    let m = TransitionMatrix::new(a, 1.0).unwrap();
    assert!(matches!(tmfpt(&m), Err(Error::Reducible { .. })));
}

#[test]
fn generator_rows_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let k = rng.random_range(2..12);
        // Diagonal in (0, 1) strictly so the log is finite and nonzero.
        let mut a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>());
        for i in 0..k {
            a[(i, i)] += 0.5 * k as f64 * rng.random::<f64>();
            let s: f64 = a.row(i).sum();
            a.row_mut(i).unscale_mut(s);
        }
        let m = TransitionMatrix::with_tolerance(a, 5.0, 1e-9, true).unwrap();
        let q = generator_matrix(&m, GeneratorVariant::DiagonalAdjustment).unwrap();
        assert!(q.max_row_sum() < 1e-10, "{}", q.max_row_sum());
        assert!(q.min_off_diagonal() >= 0.0);
        assert!(q.is_valid());
    }
}

#[test]
fn both_continuous_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let k = rng.random_range(2..8);
        let mut q = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() * 2.0 + 1e-3);
        for i in 0..k {
            q[(i, i)] = 0.0;
            let s: f64 = q.row(i).sum();
            q[(i, i)] = -s;
        }
        let g = GeneratorMatrix::new(q, 1.0).unwrap();
        let c = generator_first_passage(&g).unwrap();
        assert!(c.route_discrepancy < 1e-8, "{}", c.route_discrepancy);
        for i in 0..k {
            for j in 0..k {
                let (a, b) = (c.periods.get(i, j), c.jump_route_periods.get(i, j));
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
            }
        }
    }
}

#[test]
fn embedded_chain_has_zero_diagonal() {
    let a = DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.1, 0.2, 0.7]);
    let m = TransitionMatrix::new(a, 10.0).unwrap();
    let q = generator_matrix(&m, GeneratorVariant::DiagonalAdjustment).unwrap();
    let e = embedded_chain(&q).unwrap();
    for i in 0..3 {
        assert_eq!(e.get(i, i), 0.0);
        assert!((e.rows()[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn continuous_years_scale_with_horizon() {
    let a = DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.1, 0.2, 0.7]);
    let one = tmfpt_continuous(&TransitionMatrix::new(a.clone(), 1.0).unwrap()).unwrap();
    let ten = tmfpt_continuous(&TransitionMatrix::new(a, 10.0).unwrap()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(one.periods.get(i, j), ten.periods.get(i, j));
            assert!((ten.years.get(i, j) - 10.0 * one.years.get(i, j)).abs() < 1e-12 * ten.years.get(i, j).max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tmfpt_positive_off_diagonal(seed in any::<u64>(), k in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_chain(&mut rng, k);
        let t = tmfpt(&p).unwrap();
        for i in 0..k {
            prop_assert_eq!(t.get(i, i), 0.0);
            for j in (0..k).filter(|&j| j != i) {
                prop_assert!(t.get(i, j) >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn kemeny_constant_is_row_independent(seed in any::<u64>(), k in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_chain(&mut rng, k);
        let t = tmfpt(&p).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        let kemeny: Vec<f64> = (0..k).map(|i| (0..k).map(|j| pi[j] * t.get(i, j)).sum()).collect();
        for v in &kemeny {
            prop_assert!((v - kemeny[0]).abs() < 1e-8 * kemeny[0].max(1.0));
        }
    }
}
