//! Dense reference solver for small trust-region problems.
//!
//! Everything here goes through a full eigendecomposition, so it is only
//! meant for verification at desk scale (a few hundred unknowns).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Relative size below which the gradient's component on the leftmost
/// eigenspace counts as zero.
const HARD_CASE_TOL: f64 = 1e-13;
/// Eigenvalues within this (relative) distance of θ_min share its eigenspace.
const CLUSTER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metric is not positive definite")]
    MetricNotPositiveDefinite,
    #[error("trust-region radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleCase {
    Interior,
    Easy,
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub obj: f64,
    pub case: OracleCase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖(H + λM)x + g‖_{M⁻¹}`
    pub r_stat: f64,
    /// `max{0, ‖x‖_M − Δ}`
    pub r_feas: f64,
    /// `|λ(‖x‖_M − Δ)|`
    pub r_comp: f64,
    /// Smallest eigenvalue of `M^{-1/2}(H + λM)M^{-1/2}`.
    pub min_eig_shift: f64,
}

fn check_dims(h: &DMatrix<f64>, g: &[f64]) -> Result<usize, OracleError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(OracleError::DimensionMismatch {
            expected: n,
            got: h.nrows(),
        });
    }
    Ok(n)
}

/// `½⟨x, Hx⟩ + ⟨g, x⟩`
pub fn objective(h: &DMatrix<f64>, g: &[f64], x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    0.5 * xv.dot(&(h * &xv)) + xv.dot(&DVector::from_column_slice(g))
}

/// Solves `min ½⟨x, Hx⟩ + ⟨g, x⟩ s.t. ‖x‖₂ ≤ Δ` exactly.
pub fn oracle_solve(h: &DMatrix<f64>, g: &[f64], delta: f64) -> Result<OracleSolution, OracleError> {
    let n = check_dims(h, g)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(OracleError::InvalidRadius(delta));
    }
    let sym = 0.5 * (h + h.transpose());
    let eig = sym.clone().symmetric_eigen();
    let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let q = &eig.eigenvectors;
    let gv = DVector::from_column_slice(g);
    let c: Vec<f64> = (q.transpose() * &gv).iter().copied().collect();
    let gnorm = gv.norm();

    let theta_min = theta.iter().copied().fold(f64::INFINITY, f64::min);
    let theta_absmax = theta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let scale = theta_absmax.max(gnorm / delta).max(f64::MIN_POSITIVE);

    // x(λ) in eigen-coordinates, skipping the indices in `skip`.
    let coords = |lambda: f64, skip: &[bool]| -> Vec<f64> {
        (0..n)
            .map(|k| if skip[k] { 0.0 } else { -c[k] / (theta[k] + lambda) })
            .collect()
    };
    let to_x = |y: &[f64]| -> Vec<f64> {
        (q * DVector::from_column_slice(y)).iter().copied().collect()
    };
    let norm = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let no_skip = vec![false; n];

    if theta_min > 0.0 {
        let y = coords(0.0, &no_skip);
        if norm(&y) <= delta {
            let x = to_x(&y);
            return Ok(OracleSolution {
                obj: objective(&sym, g, &x),
                x,
                lambda: 0.0,
                case: OracleCase::Interior,
            });
        }
    }

    let lo0 = (-theta_min).max(0.0);
    let cluster: Vec<bool> = theta
        .iter()
        .map(|t| (t - theta_min).abs() <= CLUSTER_TOL * scale)
        .collect();
    let cluster_mass = c
        .iter()
        .zip(&cluster)
        .filter(|(_, &k)| k)
        .map(|(ci, _)| ci * ci)
        .sum::<f64>()
        .sqrt();

    // x(−θ_min) on the complement of the leftmost eigenspace, completed to
    // the boundary along an eigenvector.
    let hard = |case: OracleCase| -> Option<OracleSolution> {
        let y = coords(lo0, &cluster);
        let ny = norm(&y);
        if ny > delta {
            return None;
        }
        let alpha = (delta * delta - ny * ny).max(0.0).sqrt();
        let v = canonical_eigvec(q, &cluster);
        let base = to_x(&y);
        let candidates = [alpha, -alpha]
            .map(|a| base.iter().zip(&v).map(|(b, vi)| b + a * vi).collect::<Vec<f64>>());
        let objs = candidates.clone().map(|x| objective(&sym, g, &x));
        let pick = if objs[1] < objs[0] { 1 } else { 0 };
        Some(OracleSolution {
            x: candidates[pick].clone(),
            lambda: lo0,
            obj: objs[pick],
            case,
        })
    };

    if cluster_mass <= HARD_CASE_TOL * gnorm && theta_min <= 0.0 {
        if let Some(sol) = hard(OracleCase::Hard) {
            return Ok(sol);
        }
    }

    // Bisection on ‖x(λ)‖ − Δ; ‖x(λ)‖ ≤ ‖g‖/(λ + θ_min) bounds the right end.
    let mut lo = lo0;
    let mut hi = (gnorm / delta - theta_min).max(lo0) + scale * 1e-12 + f64::MIN_POSITIVE;
    while norm(&coords(hi, &no_skip)) > delta {
        hi = lo0 + 2.0 * (hi - lo0);
    }
    for _ in 0..3000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 * scale {
            break;
        }
        if norm(&coords(mid, &no_skip)) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = if lo > lo0 { 0.5 * (lo + hi) } else { hi };
    let y = coords(lambda, &no_skip);
    if (norm(&y) - delta).abs() > 1e-9 * delta {
        // λ* is not representable apart from −θ_min.
        if let Some(sol) = hard(OracleCase::Hard) {
            return Ok(sol);
        }
    }
    let x = to_x(&y);
    Ok(OracleSolution {
        obj: objective(&sym, g, &x),
        x,
        lambda,
        case: OracleCase::Easy,
    })
}

/// Unit vector in the eigenspace flagged by `cluster`, chosen as the
/// normalized projection of the first coordinate vector with the largest
/// projection, with a positive component at that coordinate.
fn canonical_eigvec(q: &DMatrix<f64>, cluster: &[bool]) -> Vec<f64> {
    let n = q.nrows();
    let cols: Vec<usize> = (0..n).filter(|&k| cluster[k]).collect();
    let mut best = (0, -1.0);
    for j in 0..n {
        let p: f64 = cols.iter().map(|&k| q[(j, k)] * q[(j, k)]).sum();
        if p > best.1 * (1.0 + 1e-12) {
            best = (j, p);
        }
    }
    let j = best.0;
    let mut v = vec![0.0; n];
    for &k in &cols {
        let w = q[(j, k)];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi += w * q[(i, k)];
        }
    }
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

fn metric_factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, OracleError> {
    Cholesky::new(m.clone()).ok_or(OracleError::MetricNotPositiveDefinite)
}

/// Solves `min ½⟨x, Hx⟩ + ⟨g, x⟩ s.t. ‖x‖_M ≤ Δ` through `M = LLᵀ` and
/// the substitution `y = Lᵀx`.
pub fn oracle_solve_metric(
    h: &DMatrix<f64>,
    m: &DMatrix<f64>,
    g: &[f64],
    delta: f64,
) -> Result<OracleSolution, OracleError> {
    check_dims(h, g)?;
    check_dims(m, g)?;
    let chol = metric_factor(m)?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(OracleError::MetricNotPositiveDefinite)?;
    let ht = &linv * h * linv.transpose();
    let gt: Vec<f64> = (&linv * DVector::from_column_slice(g)).iter().copied().collect();
    let sol = oracle_solve(&ht, &gt, delta)?;
    let x: Vec<f64> = (linv.transpose() * DVector::from_column_slice(&sol.x))
        .iter()
        .copied()
        .collect();
    Ok(OracleSolution {
        obj: objective(h, g, &x),
        x,
        ..sol
    })
}

/// Optimality residuals of `(x, λ)`; `m = None` means the Euclidean norm.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    m: Option<&DMatrix<f64>>,
    g: &[f64],
    delta: f64,
    x: &[f64],
    lambda: f64,
) -> Result<KktResiduals, OracleError> {
    let n = check_dims(h, g)?;
    if x.len() != n {
        return Err(OracleError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let m = match m {
        Some(m) => {
            check_dims(m, g)?;
            m.clone()
        }
        None => DMatrix::identity(n, n),
    };
    let chol = metric_factor(&m)?;
    let xv = DVector::from_column_slice(x);
    let shifted = h + lambda * &m;
    let r = &shifted * &xv + DVector::from_column_slice(g);
    let r_stat = r.dot(&chol.solve(&r)).max(0.0).sqrt();
    let xnorm = xv.dot(&(&m * &xv)).max(0.0).sqrt();
    let linv = chol
        .l()
        .try_inverse()
        .ok_or(OracleError::MetricNotPositiveDefinite)?;
    let sandwich = &linv * shifted * linv.transpose();
    let sandwich = 0.5 * (&sandwich + sandwich.transpose());
    let min_eig_shift = sandwich.symmetric_eigen().eigenvalues.min();
    Ok(KktResiduals {
        r_stat,
        r_feas: (xnorm - delta).max(0.0),
        r_comp: (lambda * (xnorm - delta)).abs(),
        min_eig_shift,
    })
}
