use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trbench::control::{control_problem, state_control_norm, Stiffness};
use trbench::outer::{outer_loop, IterRecord, OuterConfig, RunOutcome};
use trbench::profile::{profile, rho_at, ratios, CostTable, ProfileError};
use trbench::registry::{GltrSolver, Registry};
use trbench::suite::{self, hard_case_quartic, suite};
use trbench::NlpProblem;

fn dense_hessian(p: &NlpProblem, x: &[f64]) -> DMatrix<f64> {
    let n = p.n;
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        (p.hess_vec)(x, &e, &mut col);
        e[j] = 0.0;
        h.set_column(j, &DVector::from_column_slice(&col));
    }
    h
}

fn check_radius_updates(trace: &[IterRecord], cfg: &OuterConfig) {
    for w in trace.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let expected = if a.rho >= cfg.rho_inc {
            cfg.gamma_inc * a.delta
        } else if a.rho >= cfg.rho_acc {
            a.delta
        } else {
            cfg.gamma_dec * a.delta
        };
        assert_eq!(b.delta, expected);
        assert_eq!(a.accepted, a.rho >= cfg.rho_acc);
    }
}

#[test]
fn suite_registers_checked_problems() {
    let problems = suite(0).unwrap();
    assert!(problems.len() >= 8);
    for p in &problems {
        assert!(p.gradient_error(&p.x0) <= suite::GRADIENT_CHECK_TOL, "{}", p.name);
        assert_eq!(p.x0.len(), p.n);
    }
}

#[test]
fn hard_case_family_gradient_is_orthogonal_to_leftmost_eigenvector() {
    for seed in 0..5 {
        let p = hard_case_quartic(&mut ChaCha8Rng::seed_from_u64(seed), 15);
        let h = dense_hessian(&p, &p.x0);
        let eig = h.symmetric_eigen();
        let i = eig.eigenvalues.imin();
        let g = DVector::from_column_slice(&p.gradient(&p.x0));
        assert!(eig.eigenvalues[i] < 0.0);
        assert!(eig.eigenvectors.column(i).dot(&g).abs() <= 1e-12 * g.norm());
    }
}

#[test]
fn every_run_obeys_the_acceptance_rule_and_radius_update() {
    let cfg = OuterConfig::default();
    let registry = Registry::standard();
    for p in suite(1).unwrap() {
        for name in ["gltr", "st"] {
            let r = outer_loop(&p, registry.get(name).unwrap(), &cfg);
            assert_eq!(r.record.outcome, RunOutcome::Converged, "{} {}", p.name, name);
            assert!(r.record.grad_norm <= cfg.tol_abs);
            assert_eq!(r.record.outer_iters, r.trace.len());
            check_radius_updates(&r.trace, &cfg);
            for it in &r.trace {
                assert!(it.step_norm <= it.delta * (1.0 + 1e-8), "{} {}: {it:?}", p.name, name);
            }
        }
    }
}

#[test]
fn convex_quadratic_has_exact_model() {
    let p = suite::convex_quadratic(&mut ChaCha8Rng::seed_from_u64(3), 12);
    let r = outer_loop(&p, &GltrSolver::default(), &OuterConfig::default());
    assert_eq!(r.record.outcome, RunOutcome::Converged);
    for it in &r.trace {
        assert!(it.accepted);
        // Below this the difference of f values is rounding noise.
        if it.model.abs() > 1e-8 * it.f.abs() {
            assert!((it.rho - 1.0).abs() < 1e-6, "{it:?}");
        }
    }
    for w in r.trace.windows(2) {
        assert!(w[1].f < w[0].f);
    }
    assert!((r.f - p.optimum.unwrap()).abs() < 1e-10);
}

#[test]
fn small_initial_radius_on_indefinite_problem() {
    let p = suite::indefinite_quartic(&mut ChaCha8Rng::seed_from_u64(4), 10);
    let cfg = OuterConfig {
        delta0: Some(1e-3),
        ..Default::default()
    };
    let r = outer_loop(&p, &GltrSolver::default(), &cfg);
    assert_eq!(r.record.outcome, RunOutcome::Converged);
    assert!(r.trace.iter().filter(|i| i.accepted).all(|i| i.rho >= cfg.rho_acc));
}

#[test]
fn oversized_radius_triggers_hotstart_resolves() {
    let p = suite::rosenbrock(2);
    let cfg = OuterConfig {
        delta0: Some(10.0),
        ..Default::default()
    };
    let r = outer_loop(&p, &GltrSolver::default(), &cfg);
    assert_eq!(r.record.outcome, RunOutcome::Converged);
    assert!(r.trace.iter().any(|i| i.resolved));
}

#[test]
fn control_metric_inverse_and_norm() {
    let mesh = 32;
    let p = control_problem(mesh, 1e-4);
    let m = p.metric.as_ref().unwrap();
    let a = Stiffness::new(mesh);
    let h = a.h;
    let ad = DMatrix::from_fn(mesh, mesh, |i, j| {
        if i == j {
            a.diag[i]
        } else if i + 1 == j {
            a.off[i]
        } else if j + 1 == i {
            a.off[j]
        } else {
            0.0
        }
    });
    let ainv = ad.clone().try_inverse().unwrap();
    let w = DMatrix::identity(mesh, mesh) * h + &ainv * &ainv * (h * h * h);
    let x: Vec<f64> = (0..mesh).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
    let mut y = vec![0.0; mesh];
    m.apply(&x, &mut y);
    let expected = &w * DVector::from_column_slice(&x);
    assert!((DVector::from_column_slice(&y) - &expected).norm() <= 1e-12 * expected.norm());
    let mut z = vec![0.0; mesh];
    m.solve(&y, &mut z);
    let err: f64 = z.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-10 * DVector::from_column_slice(&x).norm());
    let wn = DVector::from_column_slice(&x).dot(&expected).sqrt();
    assert!((state_control_norm(mesh, &x) - wn).abs() <= 1e-12 * wn);
    // Hessian is H = MA⁻¹MA⁻¹M + βM.
    let hd = dense_hessian(&p, &x);
    let href = &ainv * &ainv * (h * h * h) + DMatrix::identity(mesh, mesh) * (1e-4 * h);
    assert!((hd - href).norm() <= 1e-12);
    assert!(p.gradient_error(&x) <= 1e-5);
}

#[test]
fn control_mesh_and_regularization() {
    let cfg = OuterConfig::default();
    let gltr = GltrSolver::default();
    let coarse = outer_loop(&control_problem(64, 1e-4), &gltr, &cfg);
    let fine = outer_loop(&control_problem(512, 1e-4), &gltr, &cfg);
    assert_eq!(coarse.record.outcome, RunOutcome::Converged);
    assert_eq!(fine.record.outcome, RunOutcome::Converged);
    assert!(coarse.record.outer_iters.abs_diff(fine.record.outer_iters) <= 1);
    let heavy = outer_loop(&control_problem(128, 1.0), &gltr, &cfg);
    assert!((1..=2).contains(&heavy.record.outer_iters), "{:?}", heavy.record);
    for r in [&coarse, &fine, &heavy] {
        for it in &r.trace {
            assert!(it.step_norm <= it.delta * (1.0 + 1e-8));
        }
    }
}

fn table(rows: &[(&str, &[(&str, f64)])]) -> CostTable {
    rows.iter()
        .map(|(p, cs)| (p.to_string(), cs.iter().map(|(s, c)| (s.to_string(), *c)).collect()))
        .collect()
}

#[test]
fn profile_small_examples() {
    let t = table(&[("p", &[("a", 1.0), ("b", 2.0)])]);
    let r = ratios(&t).unwrap();
    assert_eq!(rho_at(&r["a"], 1.0), 1.0);
    assert_eq!(rho_at(&r["b"], 1.0), 0.0);
    assert_eq!(rho_at(&r["b"], 2.0), 1.0);
    // Ratios can drop below one with the min-over-others denominator.
    assert_eq!(r["a"], vec![0.5]);

    let t = table(&[
        ("p", &[("a", 3.0), ("fail", f64::INFINITY)]),
        ("q", &[("a", 1.0), ("fail", f64::INFINITY)]),
    ]);
    let pts = profile(&t).unwrap();
    assert!(pts.iter().filter(|p| p.solver == "fail").all(|p| p.rho == 0.0));
    let a: Vec<_> = pts.iter().filter(|p| p.solver == "a").collect();
    assert_eq!(a.last().unwrap().rho, 1.0);
    for w in a.windows(2) {
        assert!(w[1].rho >= w[0].rho);
    }

    assert_eq!(profile(&CostTable::new()), Err(ProfileError::Empty));
    assert_eq!(profile(&table(&[("p", &[("a", 1.0)])])), Err(ProfileError::TooFewSolvers(1)));
}

#[test]
fn cli_run_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let cfg = dir.path().join("outer.cfg");
    std::fs::write(&cfg, "max_outer = 200\n").unwrap();
    let exe = env!("CARGO_BIN_EXE_trbench");
    let status = Command::new(exe)
        .args(["run", "--solver", "gltr,st", "--seed", "2", "--out"])
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "problem,solver,grad_norm,hv_count,outer_iters,wall_ms,outcome");
    assert_eq!(lines.count(), 2 * suite(2).unwrap().len());
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("rosenbrock__gltr.json")).unwrap()).unwrap();
    let mut keys: Vec<_> = rec.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["grad_norm", "hv_count", "outcome", "outer_iters", "problem", "solver", "wall_ms"]);

    let prof = dir.path().join("profile.csv");
    let status = Command::new(exe)
        .args(["profile", "--metric", "hv", "--in"])
        .arg(&out)
        .arg("--out")
        .arg(&prof)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&prof).unwrap();
    assert!(text.starts_with("tau,solver,rho\n"));
    assert!(text.contains("inf,gltr,1"));

    let bad = Command::new(exe).args(["run", "--solver", "nope", "--out"]).arg(&out).status().unwrap();
    assert!(!bad.success());
}
