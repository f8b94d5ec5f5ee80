//! Distributed control on the unit interval, reduced to the control
//! variable.
//!
//! Cell-centred finite differences with Neumann boundary give `M = hI` and
//! `A = K + M` tridiagonal. With `y = A⁻¹Mu` the objective is
//! `½‖y − y_d‖²_M + (β/2)‖u − u_d‖²_M`, and the trust region
//! `‖y‖²_M + ‖u‖²_M ≤ Δ²` becomes the metric `W = M + MA⁻¹MA⁻¹M`.

use std::f64::consts::PI;
use std::sync::Arc;

use gltr::Metric;
use num_complex::Complex64;

use crate::problem::{dot, NlpProblem};

/// Symmetric tridiagonal `A` from the 1-d Neumann Laplacian plus mass.
#[derive(Debug, Clone)]
pub struct Stiffness {
    pub h: f64,
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Stiffness {
    pub fn new(mesh: usize) -> Self {
        let h = 1.0 / mesh as f64;
        let mut diag = vec![2.0 / h + h; mesh];
        diag[0] = 1.0 / h + h;
        diag[mesh - 1] = 1.0 / h + h;
        Self {
            h,
            diag,
            off: vec![-1.0 / h; mesh - 1],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Solves `(A + shift·I)x = b` by Thomas elimination.
    fn solve_c(&self, shift: Complex64, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut x = b.to_vec();
        let mut piv = Complex64::new(self.diag[0], 0.0) + shift;
        x[0] /= piv;
        for i in 1..n {
            c[i - 1] = self.off[i - 1] / piv;
            piv = Complex64::new(self.diag[i], 0.0) + shift - self.off[i - 1] * c[i - 1];
            x[i] = (x[i] - self.off[i - 1] * x[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c[i] * next;
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let bc: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.solve_c(Complex64::new(0.0, 0.0), &bc).iter().map(|z| z.re).collect()
    }

    /// `(A² + h²I)⁻¹b = Im[(A − ihI)⁻¹b]/h`.
    pub fn solve_squared_shift(&self, b: &[f64]) -> Vec<f64> {
        let bc: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let h = self.h;
        self.solve_c(Complex64::new(0.0, -h), &bc).iter().map(|z| z.im / h).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

/// `W = hI + h³A⁻²`, applied and inverted through the tridiagonal `A`.
#[derive(Debug, Clone)]
pub struct ControlMetric {
    a: Stiffness,
}

impl Metric for ControlMetric {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let h = self.a.h;
        let z = self.a.solve(&self.a.solve(x));
        for i in 0..x.len() {
            y[i] = h * x[i] + h * h * h * z[i];
        }
    }

    // W⁻¹ = (1/h)(I − h²(A² + h²I)⁻¹)
    fn solve(&self, r: &[f64], y: &mut [f64]) {
        let h = self.a.h;
        let z = self.a.solve_squared_shift(r);
        for i in 0..r.len() {
            y[i] = (r[i] - h * h * z[i]) / h;
        }
    }
}

pub fn desired_state(t: f64) -> f64 {
    (PI * t).cos()
}

/// Quadratic reduced control problem on `mesh` cells with `Δ⁰ = 1` in the
/// `W`-norm.
pub fn control_problem(mesh: usize, beta: f64) -> NlpProblem {
    assert!(mesh >= 8, "mesh must have at least 8 cells");
    assert!(beta > 0.0, "beta must be positive");
    let a = Arc::new(Stiffness::new(mesh));
    let h = a.h;
    let yd: Arc<Vec<f64>> = Arc::new((0..mesh).map(|i| desired_state((i as f64 + 0.5) * h)).collect());
    let ud = Arc::new(vec![0.0; mesh]);

    let (af, ydf, udf) = (a.clone(), yd.clone(), ud.clone());
    let f = move |u: &[f64]| {
        let y = af.solve(&u.iter().map(|v| h * v).collect::<Vec<_>>());
        let ey: f64 = y.iter().zip(ydf.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let eu: f64 = u.iter().zip(udf.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * h * ey + 0.5 * beta * h * eu
    };
    let (ag, ydg, udg) = (a.clone(), yd.clone(), ud.clone());
    let grad = move |u: &[f64], g: &mut [f64]| {
        let y = ag.solve(&u.iter().map(|v| h * v).collect::<Vec<_>>());
        let r: Vec<f64> = y.iter().zip(ydg.iter()).map(|(a, b)| h * (a - b)).collect();
        let z = ag.solve(&r);
        for i in 0..g.len() {
            g[i] = h * z[i] + beta * h * (u[i] - udg[i]);
        }
    };
    let ah = a.clone();
    let hess_vec = move |_: &[f64], v: &[f64], out: &mut [f64]| {
        let w = ah.solve(&ah.solve(v));
        for i in 0..v.len() {
            out[i] = h * h * h * w[i] + beta * h * v[i];
        }
    };
    NlpProblem {
        name: format!("control_1d_{mesh}"),
        n: mesh,
        x0: vec![0.0; mesh],
        f: Arc::new(f),
        grad: Arc::new(grad),
        hess_vec: Arc::new(hess_vec),
        metric: Some(Arc::new(ControlMetric { a: (*a).clone() })),
        delta0: Some(1.0),
        optimum: None,
    }
}

/// `‖(y(u), u)‖_M` for a control step `u`.
pub fn state_control_norm(mesh: usize, u: &[f64]) -> f64 {
    let a = Stiffness::new(mesh);
    let h = a.h;
    let y = a.solve(&u.iter().map(|v| h * v).collect::<Vec<_>>());
    (h * dot(&y, &y) + h * dot(u, u)).sqrt()
}
