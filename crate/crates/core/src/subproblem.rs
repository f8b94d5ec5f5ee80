//! Exact solution of the coordinate trust-region problem
//!
//! ```text
//! min ½⟨h, T h⟩ + γ₀ h₀   s.t.  ‖h‖₂ ≤ Δ
//! ```
//!
//! for a symmetric tridiagonal `T`. An irreducible `T` is always in the easy
//! case: either the unconstrained minimizer is interior, or Newton's method
//! on `1/‖x(λ)‖ − 1/Δ` finds the boundary multiplier. A `T` made of several
//! irreducible blocks (from restarted Lanczos runs) is solved exactly in the
//! hard case by combining the first block's solution with an eigenvector of
//! the block holding the leftmost eigenvalue.

use thiserror::Error;

use crate::tridiag::{
    dot, inverse_iteration, ldlt_shifted, norm2, smallest_eig, solve_shifted, LdlFactor, TriError,
    TriMatrix,
};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const BAND_MAX_ITER: usize = 200;
/// Relative regularization of the pseudo-inverse solve at `λ = −θ_min`.
const NEAR_HARD_SHIFT: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubproblemError {
    #[error("trust-region radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("gradient norm must be nonnegative and finite, got {0}")]
    InvalidGradient(f64),
    #[error("band must satisfy 0 < lower <= upper, got [{0}, {1}]")]
    InvalidBand(f64, f64),
    #[error(transparent)]
    Tri(#[from] TriError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionStatus {
    Interior,
    Boundary,
    HardCase,
    NearHardCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    /// Solution in the Lanczos coordinates.
    pub h: Vec<f64>,
    pub lambda: f64,
    pub obj: f64,
    pub status: SolutionStatus,
    pub newton_iters: usize,
    /// Smallest eigenvalue of `T`, when it had to be computed.
    pub theta_min: Option<f64>,
}

/// Data carried from a previous solve to speed up the next one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    /// Multiplier of the previous solve (previous Krylov iteration or the
    /// same `T` at another radius).
    pub prev_lambda: Option<f64>,
    /// Smallest eigenvalue of this very `T`, if already known.
    pub theta_min: Option<f64>,
    /// Smallest eigenvalue of `T` with its last row and column removed,
    /// i.e. of the previous Krylov iteration's matrix. Enables the lifted
    /// last-pivot function.
    pub hat_theta_min: Option<f64>,
}

impl WarmStart {
    /// Warm start for re-solving the same `T` after `sol`.
    pub fn from_solution(sol: &SubproblemSolution) -> Self {
        Self {
            prev_lambda: Some(sol.lambda),
            theta_min: sol.theta_min,
            hat_theta_min: None,
        }
    }
}

fn check_inputs(gamma0: f64, delta: f64) -> Result<(), SubproblemError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SubproblemError::InvalidRadius(delta));
    }
    if !(gamma0 >= 0.0 && gamma0.is_finite()) {
        return Err(SubproblemError::InvalidGradient(gamma0));
    }
    Ok(())
}

fn first_unit(n: usize, gamma0: f64) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r[0] = -gamma0;
    r
}

/// Solves `TR(T, γ₀e₁, I, Δ)`.
///
/// Multi-block matrices go through [`solve_blocks`]; irreducible ones get the
/// interior test followed by [`solve_easy`], falling back to [`near_hard`]
/// when no admissible multiplier reaches the boundary in floating point.
pub fn solve(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
    warm: Option<&WarmStart>,
) -> Result<SubproblemSolution, SubproblemError> {
    check_inputs(gamma0, delta)?;
    if t.is_empty() {
        return Err(TriError::Empty.into());
    }
    if t.is_irreducible() {
        solve_irreducible(t, gamma0, delta, warm)
    } else {
        solve_blocks(t, gamma0, delta)
    }
}

fn solve_irreducible(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
    warm: Option<&WarmStart>,
) -> Result<SubproblemSolution, SubproblemError> {
    let rhs = first_unit(t.len(), gamma0);
    if let Ok(f) = ldlt_shifted(t, 0.0) {
        if f.is_positive_definite() {
            let h = f.solve(&rhs)?;
            if norm2(&h) <= delta {
                return Ok(SubproblemSolution {
                    obj: t.quadratic(gamma0, &h),
                    h,
                    lambda: 0.0,
                    status: SolutionStatus::Interior,
                    newton_iters: 0,
                    theta_min: warm.and_then(|w| w.theta_min),
                });
            }
        }
    }
    let start = newton_start(t, warm, gamma0, delta)?;
    match newton_boundary(t, gamma0, delta, start.lambda, None) {
        Ok(mut sol) => {
            sol.theta_min = start.theta_min;
            Ok(sol)
        }
        Err(NewtonFailure::NoBoundaryLambda) => {
            let theta_min = match start.theta_min {
                Some(th) => th,
                None => smallest_eig(t, warm.and_then(|w| w.hat_theta_min))?,
            };
            near_hard(t, gamma0, delta, theta_min)
        }
        Err(NewtonFailure::Tri(e)) => Err(e.into()),
    }
}

struct NewtonStart {
    lambda: f64,
    theta_min: Option<f64>,
}

fn boundary_candidate_ok(t: &TriMatrix, lambda: f64, rhs: &[f64], delta: f64) -> bool {
    match ldlt_shifted(t, lambda) {
        Ok(f) if f.is_positive_definite() => f
            .solve(rhs)
            .map(|x| norm2(&x) >= delta)
            .unwrap_or(false),
        _ => false,
    }
}

fn newton_start(
    t: &TriMatrix,
    warm: Option<&WarmStart>,
    gamma0: f64,
    delta: f64,
) -> Result<NewtonStart, SubproblemError> {
    let rhs = first_unit(t.len(), gamma0);
    let cheap = warm
        .and_then(|w| w.prev_lambda)
        .filter(|l| *l >= 0.0 && l.is_finite())
        .into_iter()
        .chain(std::iter::once(0.0));
    for lambda in cheap {
        if boundary_candidate_ok(t, lambda, &rhs, delta) {
            return Ok(NewtonStart {
                lambda,
                theta_min: warm.and_then(|w| w.theta_min),
            });
        }
    }
    let theta_min = match warm.and_then(|w| w.theta_min) {
        Some(th) => th,
        None => smallest_eig(t, warm.and_then(|w| w.hat_theta_min))?,
    };
    Ok(NewtonStart {
        lambda: (-theta_min).max(0.0),
        theta_min: Some(theta_min),
    })
}

/// Initial multiplier for the boundary Newton iteration.
///
/// Tries the previous multiplier, then zero, accepting the first value at
/// which `T + λI` is positive definite and `‖x(λ)‖ ≥ Δ`. Otherwise returns
/// `max{0, −θ_min}` with `θ_min` from the last-pivot root finder (lifted when
/// `warm.hat_theta_min` is known).
pub fn newton_init(
    t: &TriMatrix,
    warm: Option<&WarmStart>,
    gamma0: f64,
    delta: f64,
) -> Result<f64, SubproblemError> {
    check_inputs(gamma0, delta)?;
    Ok(newton_start(t, warm, gamma0, delta)?.lambda)
}

enum NewtonFailure {
    NoBoundaryLambda,
    Tri(TriError),
}

fn lambda_scale(t: &TriMatrix, gamma0: f64, delta: f64) -> f64 {
    t.norm_estimate()
        .max(gamma0 / delta)
        .max(f64::MIN_POSITIVE)
}

/// Smallest `λ ≥ λ₀` on a doubling grid at which `T + λI` factors as
/// positive definite.
fn first_definite(t: &TriMatrix, lambda0: f64, base: f64) -> Option<(f64, LdlFactor)> {
    if let Ok(f) = ldlt_shifted(t, lambda0) {
        if f.is_positive_definite() {
            return Some((lambda0, f));
        }
    }
    let mut step = base;
    for _ in 0..400 {
        let lambda = lambda0 + step;
        if let Ok(f) = ldlt_shifted(t, lambda) {
            if f.is_positive_definite() {
                return Some((lambda, f));
            }
        }
        step *= 2.0;
    }
    None
}

/// Safeguarded Newton iteration on `σ(λ) = 1/‖x(λ)‖ − 1/Δ`.
fn newton_boundary(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
    lambda0: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SubproblemSolution, NewtonFailure> {
    let rhs = first_unit(t.len(), gamma0);
    let base = NEAR_HARD_SHIFT * lambda_scale(t, gamma0, delta);
    let (mut lambda, mut fac) =
        first_definite(t, lambda0, base).ok_or(NewtonFailure::NoBoundaryLambda)?;
    let mut x = fac.solve(&rhs).map_err(NewtonFailure::Tri)?;
    if norm2(&x) < delta * (1.0 - NEWTON_TOL) {
        if lambda > lambda0 || lambda0 == 0.0 {
            // Already inside at the left end of the admissible ray.
            return Err(NewtonFailure::NoBoundaryLambda);
        }
    }

    // Safeguard bracket: ‖x‖ > Δ at `lo`, ‖x‖ < Δ at `hi`.
    let mut lo = lambda;
    let mut hi = f64::INFINITY;
    let mut iters = 0;
    loop {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(lambda);
        }
        let nx = norm2(&x);
        if (nx - delta).abs() <= NEWTON_TOL * delta {
            break;
        }
        if nx > delta {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let collapsed = hi - lo <= 8.0 * f64::EPSILON * lo.abs().max(1.0);
        if collapsed || iters >= NEWTON_MAX_ITER {
            // λ* is not representable apart from −θ_min.
            return Err(NewtonFailure::NoBoundaryLambda);
        }
        let w2 = fac.inverse_quadratic(&x);
        let mut next = lambda + (nx * nx / w2) * ((nx - delta) / delta);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                lo + 2.0 * (next - lambda).abs().max(base)
            };
        }
        iters += 1;
        match ldlt_shifted(t, next) {
            Ok(f) if f.is_positive_definite() => {
                x = f.solve(&rhs).map_err(NewtonFailure::Tri)?;
                fac = f;
                lambda = next;
            }
            _ => {
                // Left of −θ_min: the bracket's lower end moves up.
                lo = next;
                continue;
            }
        }
    }
    Ok(SubproblemSolution {
        obj: t.quadratic(gamma0, &x),
        h: x,
        lambda,
        status: SolutionStatus::Boundary,
        newton_iters: iters,
        theta_min: None,
    })
}

/// Boundary solve of an irreducible `T` by Newton's method on `σ₋₁`,
/// starting from `lambda0` (typically from [`newton_init`]).
///
/// When no admissible multiplier produces `‖x(λ)‖ ≥ Δ` in floating point
/// the problem is numerically in the hard case and [`near_hard`] is used.
pub fn solve_easy(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
    lambda0: f64,
) -> Result<SubproblemSolution, SubproblemError> {
    check_inputs(gamma0, delta)?;
    match newton_boundary(t, gamma0, delta, lambda0, None) {
        Ok(s) => Ok(s),
        Err(NewtonFailure::NoBoundaryLambda) => {
            let theta_min = smallest_eig(t, None)?;
            near_hard(t, gamma0, delta, theta_min)
        }
        Err(NewtonFailure::Tri(e)) => Err(e.into()),
    }
}

/// Picks the sign of `α` in `x + αv` giving the smaller objective; ties go
/// to `α > 0`.
fn best_sign(t: &TriMatrix, gamma0: f64, x: &[f64], v: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let make = |a: f64| -> Vec<f64> { x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect() };
    let plus = make(alpha);
    let minus = make(-alpha);
    let (qp, qm) = (t.quadratic(gamma0, &plus), t.quadratic(gamma0, &minus));
    if qm < qp {
        (minus, qm)
    } else {
        (plus, qp)
    }
}

/// Near-hard-case heuristic: `λ* = max{0, −θ_min}` and
/// `h = x(λ*) + αv` with `v` the leftmost eigenvector and `‖h‖ = Δ`.
pub fn near_hard(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
    theta_min: f64,
) -> Result<SubproblemSolution, SubproblemError> {
    check_inputs(gamma0, delta)?;
    let n = t.len();
    let v = inverse_iteration(t, theta_min)?;
    let mut rhs = first_unit(n, gamma0);
    let c = dot(&rhs, &v);
    rhs.iter_mut().zip(&v).for_each(|(r, vi)| *r -= c * vi);

    let lambda = (-theta_min).max(0.0);
    let base = NEAR_HARD_SHIFT * t.norm_estimate().max(f64::MIN_POSITIVE);
    let (_, fac) = first_definite(t, lambda, base).ok_or(TriError::Indefinite(n - 1))?;
    let mut x = fac.solve(&rhs)?;
    let c = dot(&x, &v);
    x.iter_mut().zip(&v).for_each(|(xi, vi)| *xi -= c * vi);

    let nx = norm2(&x);
    if nx > delta {
        x.iter_mut().for_each(|xi| *xi *= delta / nx);
    }
    let alpha = (delta * delta - dot(&x, &x)).max(0.0).sqrt();
    let (h, obj) = best_sign(t, gamma0, &x, &v, alpha);
    Ok(SubproblemSolution {
        h,
        lambda,
        obj,
        status: SolutionStatus::NearHardCase,
        newton_iters: 0,
        theta_min: Some(theta_min),
    })
}

/// Exact hard-case solve over the irreducible blocks `R₁, …, R_k` of `T`.
///
/// With `θ_ℓ` the leftmost eigenvalue (first block attaining it) and
/// `(x₁*, λ₁*)` the solution restricted to `R₁`: if `λ₁* ≥ −θ_ℓ` the padded
/// `x₁*` is optimal; otherwise `h = (x₁(−θ_ℓ), 0, …, αṽ, …, 0)` with `ṽ` an
/// eigenvector of `R_ℓ` and `α` filling the radius.
pub fn solve_blocks(
    t: &TriMatrix,
    gamma0: f64,
    delta: f64,
) -> Result<SubproblemSolution, SubproblemError> {
    check_inputs(gamma0, delta)?;
    let ranges = t.block_ranges();
    let mut ell = 0;
    let mut theta_l = f64::INFINITY;
    for (k, r) in ranges.iter().enumerate() {
        let th = smallest_eig(&t.submatrix(r.clone()), None)?;
        if th < theta_l {
            theta_l = th;
            ell = k;
        }
    }
    let r1 = t.submatrix(ranges[0].clone());
    let first = solve_irreducible(&r1, gamma0, delta, None)?;
    let n = t.len();
    let mut h = vec![0.0; n];

    if first.lambda >= -theta_l || ell == 0 {
        h[..r1.len()].copy_from_slice(&first.h);
        let status = if first.status == SolutionStatus::Boundary {
            SolutionStatus::HardCase
        } else {
            first.status
        };
        return Ok(SubproblemSolution {
            obj: t.quadratic(gamma0, &h),
            h,
            lambda: first.lambda,
            status,
            newton_iters: first.newton_iters,
            theta_min: Some(theta_l),
        });
    }

    let x1 = solve_shifted(&r1, -theta_l, &first_unit(r1.len(), gamma0))?;
    h[..r1.len()].copy_from_slice(&x1);
    let block = ranges[ell].clone();
    let vb = inverse_iteration(&t.submatrix(block.clone()), theta_l)?;
    let mut v = vec![0.0; n];
    v[block].copy_from_slice(&vb);
    let alpha = (delta * delta - dot(&x1, &x1)).max(0.0).sqrt();
    let (h, obj) = best_sign(t, gamma0, &h, &v, alpha);
    Ok(SubproblemSolution {
        h,
        lambda: -theta_l,
        obj,
        status: SolutionStatus::HardCase,
        newton_iters: first.newton_iters,
        theta_min: Some(theta_l),
    })
}

/// Diagonal shift `D ≥ 0` making every pivot of `T + D` at least `eps`.
///
/// Pivots are monitored along the `LDLᵀ` recurrence; a pivot `π̂ⱼ < ε` is
/// lifted by `σ·|γⱼ²/πⱼ₋₁ − δⱼ|` (`σ|δ₀|` in the first row), with a floor of
/// `ε − π̂ⱼ` so that tiny negative pivots also end up at `ε`.
pub fn convexify(t: &TriMatrix, eps: f64, sigma: f64) -> Vec<f64> {
    assert!(eps > 0.0 && sigma > 0.0, "convexify needs eps > 0 and sigma > 0");
    let n = t.len();
    let mut d = vec![0.0; n];
    let mut prev = 0.0;
    for j in 0..n {
        let coupling = if j == 0 {
            0.0
        } else {
            let g = t.coupling(j);
            g * g / prev
        };
        let hat = t.diag()[j] - coupling;
        if hat < eps {
            d[j] = (sigma * (coupling - t.diag()[j]).abs()).max(eps - hat);
        }
        prev = hat + d[j];
    }
    d
}

/// Default convexification constants.
pub const CONVEXIFY_EPS: f64 = 1e-12;
pub const CONVEXIFY_SIGMA: f64 = 10.0;

/// Re-solves the same `T` with a new radius, reusing `warm` data.
pub fn resolve_radius(
    t: &TriMatrix,
    gamma0: f64,
    delta_new: f64,
    warm: Option<&WarmStart>,
) -> Result<SubproblemSolution, SubproblemError> {
    solve(t, gamma0, delta_new, warm)
}

/// Minimizer of `½⟨h, (T + λI)h⟩ + γ₀h₀` for positive definite `T + λI`.
pub fn trace_shifted_min(t: &TriMatrix, gamma0: f64, lambda: f64) -> Result<Vec<f64>, SubproblemError> {
    Ok(solve_shifted(t, lambda, &first_unit(t.len(), gamma0))?)
}

fn leftmost_eig(t: &TriMatrix) -> Result<f64, TriError> {
    t.block_ranges()
        .into_iter()
        .map(|r| smallest_eig(&t.submatrix(r), None))
        .try_fold(f64::INFINITY, |m, th| th.map(|th| m.min(th)))
}

/// Finds `λ ≥ max{0, −θ_min}` with `σ_l ≤ λ/‖x(λ)‖ ≤ σ_u`.
///
/// Safeguarded Newton on `λ/‖x(λ)‖ − σ` with `σ` the band midpoint, stopped
/// as soon as the ratio enters the band.
pub fn trace_band(
    t: &TriMatrix,
    gamma0: f64,
    sigma_l: f64,
    sigma_u: f64,
) -> Result<(f64, Vec<f64>), SubproblemError> {
    if !(sigma_l > 0.0 && sigma_l <= sigma_u && sigma_u.is_finite()) {
        return Err(SubproblemError::InvalidBand(sigma_l, sigma_u));
    }
    if t.is_empty() {
        return Err(TriError::Empty.into());
    }
    let rhs = first_unit(t.len(), gamma0);
    let target = 0.5 * (sigma_l + sigma_u);
    let theta_min = leftmost_eig(t)?;
    let mut lo = (-theta_min).max(0.0);
    let scale = t.norm_estimate().max(gamma0).max(f64::MIN_POSITIVE);

    // ratio, derivative, x
    let eval = |lambda: f64| -> Option<(f64, f64, Vec<f64>)> {
        let f = ldlt_shifted(t, lambda).ok().filter(|f| f.is_positive_definite())?;
        let x = f.solve(&rhs).ok()?;
        let nx = norm2(&x);
        let w2 = f.inverse_quadratic(&x);
        let ratio = lambda / nx;
        let slope = 1.0 / nx + lambda * w2 / (nx * nx * nx);
        Some((ratio, slope, x))
    };
    let in_band = |r: f64| r >= sigma_l && r <= sigma_u;

    // Grow an upper end where the ratio exceeds the target.
    let mut hi = lo.max(scale);
    let mut hi_eval = loop {
        match eval(hi) {
            Some(e) if e.0 >= target => break e,
            Some(e) => {
                if in_band(e.0) {
                    return Ok((hi, e.2));
                }
                lo = hi;
                hi *= 2.0;
            }
            None => hi *= 2.0,
        }
        if !hi.is_finite() {
            return Err(TriError::NoConvergence(BAND_MAX_ITER).into());
        }
    };
    if in_band(hi_eval.0) {
        return Ok((hi, hi_eval.2));
    }

    let mut lambda = hi;
    for _ in 0..BAND_MAX_ITER {
        let (ratio, slope, _) = &hi_eval;
        let mut next = lambda - (ratio - target) / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        match eval(next) {
            Some(e) => {
                if in_band(e.0) {
                    return Ok((next, e.2));
                }
                if e.0 > target {
                    hi = next;
                } else {
                    lo = next;
                }
                lambda = next;
                hi_eval = e;
            }
            None => {
                lo = next;
            }
        }
    }
    Err(TriError::NoConvergence(BAND_MAX_ITER).into())
}
