//! Seeded synthetic problem suite.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::control_problem;
use crate::problem::{dot, NlpProblem};

/// Relative finite-difference tolerance for the registration self-check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
#[error("gradient of {name} disagrees with finite differences ({err:e})")]
pub struct RegistrationError {
    pub name: String,
    pub err: f64,
}

fn register(p: NlpProblem) -> Result<NlpProblem, RegistrationError> {
    let err = p.gradient_error(&p.x0);
    if err > GRADIENT_CHECK_TOL {
        return Err(RegistrationError { name: p.name, err });
    }
    Ok(p)
}

/// The standard suite: Rosenbrock (2-d and extended), Beale, seeded convex,
/// indefinite, hard-case and ill-conditioned families, and the control
/// problem on 64 cells.
pub fn suite(seed: u64) -> Result<Vec<NlpProblem>, RegistrationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [
        rosenbrock(2),
        rosenbrock(10),
        beale(),
        convex_quadratic(&mut rng, 30),
        indefinite_quartic(&mut rng, 20),
        hard_case_quartic(&mut rng, 20),
        ill_conditioned_quadratic(&mut rng, 20),
        control_problem(64, 1e-4),
    ]
    .into_iter()
    .map(register)
    .collect()
}

/// Extended Rosenbrock from `(−1.2, 1, −1.2, 1, …)`.
pub fn rosenbrock(n: usize) -> NlpProblem {
    assert!(n >= 2 && n % 2 == 0);
    let f = |x: &[f64]| {
        x.chunks(2)
            .map(|p| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (1.0 - p[0]).powi(2))
            .sum()
    };
    let grad = |x: &[f64], g: &mut [f64]| {
        for (p, q) in x.chunks(2).zip(g.chunks_mut(2)) {
            let r = p[1] - p[0] * p[0];
            q[0] = -400.0 * p[0] * r - 2.0 * (1.0 - p[0]);
            q[1] = 200.0 * r;
        }
    };
    let hess_vec = |x: &[f64], v: &[f64], out: &mut [f64]| {
        for ((p, w), o) in x.chunks(2).zip(v.chunks(2)).zip(out.chunks_mut(2)) {
            let h11 = 1200.0 * p[0] * p[0] - 400.0 * p[1] + 2.0;
            let h12 = -400.0 * p[0];
            o[0] = h11 * w[0] + h12 * w[1];
            o[1] = h12 * w[0] + 200.0 * w[1];
        }
    };
    NlpProblem {
        name: if n == 2 { "rosenbrock".into() } else { format!("rosenbrock_{n}") },
        n,
        x0: (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect(),
        f: Arc::new(f),
        grad: Arc::new(grad),
        hess_vec: Arc::new(hess_vec),
        metric: None,
        delta0: None,
        optimum: Some(0.0),
    }
}

const BEALE_C: [f64; 3] = [1.5, 2.25, 2.625];

pub fn beale() -> NlpProblem {
    let f = |x: &[f64]| {
        (1..=3)
            .map(|k| (BEALE_C[k - 1] - x[0] * (1.0 - x[1].powi(k as i32))).powi(2))
            .sum()
    };
    let grad = |x: &[f64], g: &mut [f64]| {
        g[0] = 0.0;
        g[1] = 0.0;
        for k in 1..=3 {
            let yk = x[1].powi(k as i32);
            let r = BEALE_C[k - 1] - x[0] * (1.0 - yk);
            g[0] += 2.0 * r * -(1.0 - yk);
            g[1] += 2.0 * r * x[0] * k as f64 * x[1].powi(k as i32 - 1);
        }
    };
    let hess_vec = |x: &[f64], v: &[f64], out: &mut [f64]| {
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for k in 1..=3 {
            let kf = k as f64;
            let yk = x[1].powi(k as i32);
            let r = BEALE_C[k - 1] - x[0] * (1.0 - yk);
            let dr0 = -(1.0 - yk);
            let dr1 = x[0] * kf * x[1].powi(k as i32 - 1);
            let d2r01 = kf * x[1].powi(k as i32 - 1);
            let d2r11 = if k >= 2 { x[0] * kf * (kf - 1.0) * x[1].powi(k as i32 - 2) } else { 0.0 };
            h00 += 2.0 * dr0 * dr0;
            h01 += 2.0 * (dr0 * dr1 + r * d2r01);
            h11 += 2.0 * (dr1 * dr1 + r * d2r11);
        }
        out[0] = h00 * v[0] + h01 * v[1];
        out[1] = h01 * v[0] + h11 * v[1];
    };
    NlpProblem {
        name: "beale".into(),
        n: 2,
        x0: vec![1.0, 1.0],
        f: Arc::new(f),
        grad: Arc::new(grad),
        hess_vec: Arc::new(hess_vec),
        metric: None,
        delta0: None,
        optimum: Some(0.0),
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

fn with_spectrum(rng: &mut ChaCha8Rng, theta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = random_orthogonal(rng, theta.len());
    let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(theta)) * q.transpose();
    (0.5 * (&a + a.transpose()), q)
}

/// `½xᵀAx + bᵀx + (μ/4)‖x‖⁴`.
fn quartic(name: String, a: DMatrix<f64>, b: Vec<f64>, mu: f64, x0: Vec<f64>, optimum: Option<f64>) -> NlpProblem {
    let n = b.len();
    let a = Arc::new(a);
    let b = Arc::new(b);
    let (af, bf) = (a.clone(), b.clone());
    let f = move |x: &[f64]| {
        let xv = DVector::from_column_slice(x);
        let s = dot(x, x);
        0.5 * xv.dot(&(&*af * &xv)) + dot(&bf, x) + 0.25 * mu * s * s
    };
    let (ag, bg) = (a.clone(), b.clone());
    let grad = move |x: &[f64], g: &mut [f64]| {
        let ax = &*ag * DVector::from_column_slice(x);
        let s = dot(x, x);
        for i in 0..x.len() {
            g[i] = ax[i] + bg[i] + mu * s * x[i];
        }
    };
    let hess_vec = move |x: &[f64], v: &[f64], out: &mut [f64]| {
        let av = &*a * DVector::from_column_slice(v);
        let s = dot(x, x);
        let xv = dot(x, v);
        for i in 0..v.len() {
            out[i] = av[i] + mu * (s * v[i] + 2.0 * xv * x[i]);
        }
    };
    NlpProblem {
        name,
        n,
        x0,
        f: Arc::new(f),
        grad: Arc::new(grad),
        hess_vec: Arc::new(hess_vec),
        metric: None,
        delta0: None,
        optimum,
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn convex_quadratic(rng: &mut ChaCha8Rng, n: usize) -> NlpProblem {
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
    let (a, _) = with_spectrum(rng, &theta);
    let b = random_vec(rng, n);
    let xs = a.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&b));
    let opt = -0.5 * xs.dot(&DVector::from_column_slice(&b));
    quartic(format!("convex_quadratic_{n}"), a, b, 0.0, vec![0.0; n], Some(opt))
}

pub fn indefinite_quartic(rng: &mut ChaCha8Rng, n: usize) -> NlpProblem {
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (a, _) = with_spectrum(rng, &theta);
    let b = random_vec(rng, n);
    quartic(format!("indefinite_quartic_{n}"), a, b, 1.0, vec![0.0; n], None)
}

/// Indefinite quartic whose gradient at `x⁰ = 0` is orthogonal to the
/// leftmost eigenvector of the Hessian there.
pub fn hard_case_quartic(rng: &mut ChaCha8Rng, n: usize) -> NlpProblem {
    let mut theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..4.0)).collect();
    theta[0] = -2.0;
    let (a, q) = with_spectrum(rng, &theta);
    let mut b = DVector::zeros(n);
    for k in 1..n {
        b += q.column(k) * rng.gen_range(-1.0..1.0);
    }
    quartic(format!("hard_case_quartic_{n}"), a, b.iter().copied().collect(), 1.0, vec![0.0; n], None)
}

/// Convex quadratic with eigenvalues spread log-uniformly over
/// `[10⁻¹⁰, 1]`.
pub fn ill_conditioned_quadratic(rng: &mut ChaCha8Rng, n: usize) -> NlpProblem {
    let theta: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(-10.0 * i as f64 / (n - 1) as f64))
        .collect();
    let (a, q) = with_spectrum(rng, &theta);
    // Keep the minimizer bounded: weight gradient components by √θ.
    let mut b = DVector::zeros(n);
    for k in 0..n {
        b += q.column(k) * (theta[k].sqrt() * rng.gen_range(-1.0..1.0));
    }
    quartic(format!("ill_conditioned_{n}"), a, b.iter().copied().collect(), 0.0, vec![0.0; n], None)
}
