//! Unconstrained test problems.

use std::sync::Arc;

use gltr::Metric;

pub type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
/// `(x, v, out)` with `out ← ∇²f(x)v`.
pub type HessVecFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub struct NlpProblem {
    pub name: String,
    pub n: usize,
    pub x0: Vec<f64>,
    pub f: Arc<ValueFn>,
    pub grad: Arc<GradFn>,
    pub hess_vec: Arc<HessVecFn>,
    /// Trust-region metric; `None` means the Euclidean norm.
    pub metric: Option<Arc<dyn Metric + Send>>,
    /// Overrides the default initial radius `1/√n`.
    pub delta0: Option<f64>,
    pub optimum: Option<f64>,
}

impl std::fmt::Debug for NlpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NlpProblem").field("name", &self.name).field("n", &self.n).finish()
    }
}

impl NlpProblem {
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        (self.grad)(x, &mut g);
        g
    }

    /// Dual norm `‖g‖_{M⁻¹}`; Euclidean without a metric.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        match &self.metric {
            Some(m) => {
                let mut z = vec![0.0; g.len()];
                m.solve(g, &mut z);
                dot(g, &z).max(0.0).sqrt()
            }
            None => dot(g, g).sqrt(),
        }
    }

    /// Largest relative deviation between the gradient and central
    /// differences of the objective at `x`, measured against `‖∇f(x)‖∞`.
    pub fn gradient_error(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut xp = x.to_vec();
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = self.value(&xp);
            xp[i] = x[i] - h;
            let fm = self.value(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / scale);
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
