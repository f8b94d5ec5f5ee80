mod common;

use common::*;
use gltr::oracle::{kkt_residual, oracle_solve};
use gltr::subproblem::{self, SolutionStatus};
use gltr::tridiag::{gershgorin, inverse_iteration, ldlt_shifted, smallest_eig, solve_shifted};
use gltr::TriMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tri_strategy(max_n: usize) -> impl Strategy<Value = TriMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        let diag = prop::collection::vec(-3.0..3.0f64, n);
        let off = prop::collection::vec(
            prop_oneof![0.05..2.0f64, -2.0..-0.05f64],
            n - 1,
        );
        (diag, off).prop_map(|(d, o)| TriMatrix::new(d, o))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn factor_reconstructs(t in tri_strategy(30)) {
        let (_, hi) = gershgorin(&t);
        let shift = 1.0 - hi.min(0.0) + t.norm_estimate();
        let f = ldlt_shifted(&t, shift).unwrap();
        let r = f.reconstruct();
        let scale = t.norm_estimate().max(1.0) + shift;
        for (a, b) in r.diag().iter().zip(t.diag()) {
            prop_assert!((a - b - shift).abs() <= 1e-12 * scale);
        }
        for (a, b) in r.offdiag().iter().zip(t.offdiag()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn smallest_eig_matches_dense(t in tri_strategy(60)) {
        let expected = min_eig(&t.to_dense());
        let scale = t.norm_estimate().max(1.0);
        let got = smallest_eig(&t, None).unwrap();
        prop_assert!((got - expected).abs() <= 1e-10 * scale, "{} vs {}", got, expected);
        if t.len() > 1 {
            let lead = t.submatrix(0..t.len() - 1);
            let hat = smallest_eig(&lead, None).unwrap();
            let lifted = smallest_eig(&t, Some(hat)).unwrap();
            prop_assert!((lifted - expected).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn eigenvector_residual(t in tri_strategy(40)) {
        let theta = smallest_eig(&t, None).unwrap();
        let v = inverse_iteration(&t, theta).unwrap();
        let tv = t.matvec(&v);
        let r: Vec<f64> = tv.iter().zip(&v).map(|(a, b)| a - theta * b).collect();
        prop_assert!(norm(&r) <= 1e-9 * t.norm_estimate().max(1.0));
        prop_assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_subproblem_matches_oracle(
        t in tri_strategy(25),
        gamma0 in 0.01..10.0f64,
        log_delta in -2.0..1.5f64,
    ) {
        let delta = 10f64.powf(log_delta);
        let s = subproblem::solve(&t, gamma0, delta, None).unwrap();
        let dense = t.to_dense();
        let g = first_unit(t.len(), gamma0);
        let o = oracle_solve(&dense, &g, delta).unwrap();
        let scale = t.norm_estimate().max(gamma0).max(1.0);
        prop_assert!((s.obj - o.obj).abs() <= 1e-8 * o.obj.abs().max(1.0), "{} vs {}", s.obj, o.obj);
        if s.status != SolutionStatus::NearHardCase {
            let r = kkt_residual(&dense, None, &g, delta, &s.h, s.lambda).unwrap();
            prop_assert!(r.r_stat <= 1e-8 * scale, "{:?}", r);
            prop_assert!(r.min_eig_shift >= -1e-8 * scale);
        }
        let nh = norm(&s.h);
        if s.status == SolutionStatus::Interior {
            prop_assert!(nh <= delta * (1.0 + 1e-12));
        } else {
            prop_assert!((nh - delta).abs() <= 1e-8 * delta);
        }
    }
}

#[test]
fn easy_case_newton_kkt_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..50 {
        let t = random_irreducible(&mut rng, 30);
        let theta = smallest_eig(&t, None).unwrap();
        // Radius small enough that the solution is on the boundary.
        let delta = 0.05;
        let lambda0 = subproblem::newton_init(&t, None, 1.0, delta).unwrap();
        assert!(lambda0 >= (-theta).max(0.0) - 1e-12);
        let s = subproblem::solve_easy(&t, 1.0, delta, lambda0).unwrap();
        let r = kkt_residual(&t.to_dense(), None, &first_unit(30, 1.0), delta, &s.h, s.lambda).unwrap();
        assert!(r.r_stat <= 1e-8 && r.r_comp <= 1e-8, "{r:?}");
        assert!(s.lambda >= (-theta).max(0.0));
    }
}

#[test]
fn block_hard_case_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut first, mut second) = (0, 0);
    for _ in 0..200 {
        let n1 = rand::Rng::gen_range(&mut rng, 1..6);
        let n2 = rand::Rng::gen_range(&mut rng, 1..6);
        let r1 = random_irreducible(&mut rng, n1);
        let r2 = random_irreducible(&mut rng, n2);
        let t = TriMatrix::from_blocks(&[r1.clone(), r2.clone()]);
        let delta = 10f64.powf(rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let s = subproblem::solve(&t, 1.0, delta, None).unwrap();
        let o = oracle_solve(&t.to_dense(), &first_unit(t.len(), 1.0), delta).unwrap();
        assert!((s.obj - o.obj).abs() <= 1e-8 * o.obj.abs().max(1.0), "{} vs {}", s.obj, o.obj);
        let th1 = smallest_eig(&r1, None).unwrap();
        let th2 = smallest_eig(&r2, None).unwrap();
        if th2 < th1 && s.status == SolutionStatus::HardCase {
            if (s.lambda + th2).abs() < 1e-12 {
                second += 1;
            } else {
                first += 1;
            }
        }
    }
    assert!(first > 0 && second > 0, "branches {first} / {second}");
}

#[test]
fn shifted_solve_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let n = rand::Rng::gen_range(&mut rng, 1..40);
        let t = random_irreducible(&mut rng, n);
        let lambda = -smallest_eig(&t, None).unwrap() + rand::Rng::gen_range(&mut rng, 0.01..2.0);
        let rhs = random_vec(&mut rng, n);
        let x = solve_shifted(&t, lambda, &rhs).unwrap();
        let tx = t.matvec(&x);
        let r: Vec<f64> = (0..n).map(|i| tx[i] + lambda * x[i] - rhs[i]).collect();
        let scale = (t.norm_estimate() + lambda.abs()) * norm(&x) + norm(&rhs);
        assert!(norm(&r) <= 1e-12 * scale);
    }
}
