//! Symmetric tridiagonal matrices built up by Krylov iterations.
//!
//! The matrix is stored as its diagonal and first off-diagonal. A zero
//! off-diagonal entry marks the start of a new irreducible block, which is
//! how a restarted Lanczos process records an exhausted invariant subspace.
//!
//! Everything here is a pure function of its inputs.

use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

/// Errors raised by tridiagonal factorizations and eigen routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriError {
    #[error("tridiagonal matrix is empty")]
    Empty,
    #[error("indefinite at index {0}")]
    Indefinite(usize),
    #[error("eigenvalue bracketing did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("inverse iteration did not converge after {0} iterations")]
    InverseIterationFailed(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Symmetric tridiagonal matrix with recorded irreducible-block boundaries.
///
/// `offdiag[j - 1]` couples rows `j - 1` and `j`. Within a block every
/// coupling is nonzero; the coupling in front of a block start is zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMatrix {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    block_starts: Vec<usize>,
}

impl TriMatrix {
    /// Builds a matrix from its diagonal and off-diagonal. Exact zeros in
    /// `offdiag` split the matrix into irreducible blocks.
    ///
    /// Panics if `offdiag.len() + 1 != diag.len()` for nonempty `diag`.
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Self {
        if diag.is_empty() {
            assert!(offdiag.is_empty(), "off-diagonal given for empty matrix");
            return Self::default();
        }
        assert_eq!(
            offdiag.len() + 1,
            diag.len(),
            "off-diagonal must be one shorter than the diagonal"
        );
        let mut block_starts = vec![0];
        block_starts.extend(
            offdiag
                .iter()
                .enumerate()
                .filter(|(_, g)| **g == 0.0)
                .map(|(j, _)| j + 1),
        );
        Self {
            diag,
            offdiag,
            block_starts,
        }
    }

    /// Block-diagonal matrix assembled from irreducible pieces.
    pub fn from_blocks(blocks: &[TriMatrix]) -> Self {
        let mut t = TriMatrix::default();
        for b in blocks {
            for (j, &d) in b.diag.iter().enumerate() {
                if j == 0 {
                    t.push_block(d);
                } else {
                    t.push(b.offdiag[j - 1], d);
                }
            }
        }
        t
    }

    /// Appends a diagonal entry `delta` coupled to the previous row by
    /// `coupling`. A zero coupling (or an empty matrix) starts a new block.
    pub fn push(&mut self, coupling: f64, delta: f64) {
        if self.diag.is_empty() {
            self.diag.push(delta);
            self.block_starts.push(0);
            return;
        }
        if coupling == 0.0 {
            self.push_block(delta);
            return;
        }
        self.offdiag.push(coupling);
        self.diag.push(delta);
    }

    /// Appends a diagonal entry that opens a new irreducible block.
    pub fn push_block(&mut self, delta: f64) {
        if !self.diag.is_empty() {
            self.offdiag.push(0.0);
        }
        self.block_starts.push(self.diag.len());
        self.diag.push(delta);
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn block_starts(&self) -> &[usize] {
        &self.block_starts
    }

    pub fn num_blocks(&self) -> usize {
        self.block_starts.len()
    }

    pub fn is_irreducible(&self) -> bool {
        self.block_starts.len() <= 1
    }

    /// Index ranges of the irreducible blocks.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let n = self.len();
        self.block_starts
            .iter()
            .enumerate()
            .map(|(k, &s)| s..self.block_starts.get(k + 1).copied().unwrap_or(n))
            .collect()
    }

    /// Principal submatrix over `range`.
    pub fn submatrix(&self, range: Range<usize>) -> TriMatrix {
        let diag = self.diag[range.clone()].to_vec();
        let offdiag = if range.len() > 1 {
            self.offdiag[range.start..range.end - 1].to_vec()
        } else {
            Vec::new()
        };
        TriMatrix::new(diag, offdiag)
    }

    /// `T + diag(shift)`.
    pub fn add_diagonal(&self, shift: &[f64]) -> TriMatrix {
        assert_eq!(shift.len(), self.len());
        let mut t = self.clone();
        for (d, s) in t.diag.iter_mut().zip(shift) {
            *d += s;
        }
        t
    }

    /// Coupling between rows `j - 1` and `j` (zero for `j == 0`).
    #[inline]
    pub fn coupling(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.offdiag[j - 1]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|j| {
                let mut y = self.diag[j] * x[j];
                if j > 0 {
                    y += self.offdiag[j - 1] * x[j - 1];
                }
                if j + 1 < n {
                    y += self.offdiag[j] * x[j + 1];
                }
                y
            })
            .collect()
    }

    /// `½⟨h, T h⟩ + γ₀ h₀`.
    pub fn quadratic(&self, gamma0: f64, h: &[f64]) -> f64 {
        let th = self.matvec(h);
        0.5 * dot(h, &th) + gamma0 * h.first().copied().unwrap_or(0.0)
    }

    /// Max-abs Gershgorin bound, a cheap estimate of the spectral norm.
    pub fn norm_estimate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let (lo, hi) = gershgorin(self);
        lo.abs().max(hi.abs())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(j, j)] = self.diag[j];
            if j + 1 < n {
                a[(j, j + 1)] = self.offdiag[j];
                a[(j + 1, j)] = self.offdiag[j];
            }
        }
        a
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `L·diag(pivots)·Lᵀ` factorization of a shifted tridiagonal matrix, with
/// `L` unit lower bidiagonal (`multipliers` is its subdiagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactor {
    pub pivots: Vec<f64>,
    pub multipliers: Vec<f64>,
}

impl LdlFactor {
    /// All pivots, including the last one, are strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        self.pivots.iter().all(|&d| d > 0.0)
    }

    pub fn last_pivot(&self) -> f64 {
        *self.pivots.last().expect("factor is never empty")
    }

    /// Solves `L y = rhs` in place.
    fn forward(&self, y: &mut [f64]) {
        for j in 1..y.len() {
            y[j] -= self.multipliers[j - 1] * y[j - 1];
        }
    }

    /// Solves `(L D Lᵀ) w = rhs`. Fails when the factored matrix is not
    /// positive definite.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, TriError> {
        let n = self.pivots.len();
        if rhs.len() != n {
            return Err(TriError::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        if let Some(j) = self.pivots.iter().position(|&d| d <= 0.0) {
            return Err(TriError::Indefinite(j));
        }
        let mut w = rhs.to_vec();
        self.forward(&mut w);
        for (wj, d) in w.iter_mut().zip(&self.pivots) {
            *wj /= d;
        }
        for j in (0..n.saturating_sub(1)).rev() {
            w[j] -= self.multipliers[j] * w[j + 1];
        }
        Ok(w)
    }

    /// `⟨x, (L D Lᵀ)⁻¹ x⟩ = Σ yⱼ²/dⱼ` with `L y = x`.
    pub fn inverse_quadratic(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        self.forward(&mut y);
        y.iter().zip(&self.pivots).map(|(v, d)| v * v / d).sum()
    }

    /// Rebuilds the factored matrix as a [`TriMatrix`].
    pub fn reconstruct(&self) -> TriMatrix {
        let n = self.pivots.len();
        let mut diag = Vec::with_capacity(n);
        let mut offdiag = Vec::with_capacity(n.saturating_sub(1));
        for j in 0..n {
            let mut d = self.pivots[j];
            if j > 0 {
                let l = self.multipliers[j - 1];
                d += l * l * self.pivots[j - 1];
                offdiag.push(l * self.pivots[j - 1]);
            }
            diag.push(d);
        }
        TriMatrix {
            diag,
            offdiag,
            block_starts: vec![0],
        }
    }
}

/// Factors `T + shift·I = L D Lᵀ`.
///
/// The sign convention is fixed library-wide: a positive `shift` moves the
/// spectrum up, so `shift = λ` factors the multiplier-shifted matrix
/// `T + λI`. An interior pivot `≤ 0` is reported as
/// [`TriError::Indefinite`]; the last pivot may take any sign.
pub fn ldlt_shifted(t: &TriMatrix, shift: f64) -> Result<LdlFactor, TriError> {
    let n = t.len();
    if n == 0 {
        return Err(TriError::Empty);
    }
    let mut pivots = Vec::with_capacity(n);
    let mut multipliers = Vec::with_capacity(n - 1);
    let mut prev = 0.0;
    for j in 0..n {
        let mut d = t.diag[j] + shift;
        if j > 0 {
            let g = t.offdiag[j - 1];
            let l = g / prev;
            multipliers.push(l);
            d -= l * g;
        }
        if j + 1 < n && !(d > 0.0) {
            return Err(TriError::Indefinite(j));
        }
        pivots.push(d);
        prev = d;
    }
    Ok(LdlFactor {
        pivots,
        multipliers,
    })
}

/// Value of the last-pivot function and, on request, its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LastPivot {
    /// Some leading pivot left `(0, ∞)`.
    NegInf,
    Value {
        d: f64,
        d1: Option<f64>,
        d2: Option<f64>,
    },
}

impl LastPivot {
    pub fn value(&self) -> Option<f64> {
        match self {
            LastPivot::NegInf => None,
            LastPivot::Value { d, .. } => Some(*d),
        }
    }

    /// Sign test used by eigenvalue bracketing: `NegInf` counts as negative.
    pub fn is_nonnegative(&self) -> bool {
        matches!(self, LastPivot::Value { d, .. } if *d >= 0.0)
    }
}

/// Last pivot `d(θ)` of `T − θI = L diag(d₀..dᵢ) Lᵀ`, forward-differentiated
/// through the pivot recurrence up to `order` (0, 1 or 2).
pub fn last_pivot(t: &TriMatrix, theta: f64, order: u8) -> LastPivot {
    let n = t.len();
    assert!(n > 0, "last pivot of an empty matrix");
    let (mut d, mut d1, mut d2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for j in 0..n {
        let base = t.diag[j] - theta;
        if j == 0 {
            d = base;
            d1 = -1.0;
            d2 = 0.0;
        } else {
            let g2 = t.offdiag[j - 1] * t.offdiag[j - 1];
            let (p, p1, p2) = (d, d1, d2);
            d = base - g2 / p;
            d1 = -1.0 + g2 * p1 / (p * p);
            d2 = g2 * (p2 / (p * p) - 2.0 * p1 * p1 / (p * p * p));
        }
        if j + 1 < n && !(d > 0.0) {
            return LastPivot::NegInf;
        }
    }
    LastPivot::Value {
        d,
        d1: (order >= 1).then_some(d1),
        d2: (order >= 2).then_some(d2),
    }
}

/// Gershgorin interval containing the whole spectrum of `T`.
pub fn gershgorin(t: &TriMatrix) -> (f64, f64) {
    let n = t.len();
    assert!(n > 0, "gershgorin bounds of an empty matrix");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..n {
        let r = t.coupling(j).abs() + if j + 1 < n { t.offdiag[j].abs() } else { 0.0 };
        lo = lo.min(t.diag[j] - r);
        hi = hi.max(t.diag[j] + r);
    }
    (lo, hi)
}

const EIG_MAX_ITER: usize = 200;

/// Value and derivatives of the root-finding target: the last pivot, or the
/// lifted `(θ − θ̂)·d(θ)` when the pole location `θ̂` is known.
fn target(t: &TriMatrix, theta: f64, pole: Option<f64>) -> (LastPivot, Option<(f64, f64, f64)>) {
    let lp = last_pivot(t, theta, 2);
    let derivs = match lp {
        LastPivot::NegInf => None,
        LastPivot::Value { d, d1, d2 } => {
            let (d1, d2) = (d1.unwrap_or(0.0), d2.unwrap_or(0.0));
            Some(match pole {
                None => (d, d1, d2),
                Some(p) => {
                    let s = theta - p;
                    (s * d, d + s * d1, 2.0 * d1 + s * d2)
                }
            })
        }
    };
    (lp, derivs)
}

/// Root of the model closest to `theta` that lies strictly inside `(lo, hi)`.
fn pick_root(roots: &[f64], theta: f64, lo: f64, hi: f64) -> Option<f64> {
    roots
        .iter()
        .copied()
        .filter(|r| r.is_finite() && *r > lo && *r < hi)
        .min_by(|a, b| (a - theta).abs().total_cmp(&(b - theta).abs()))
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    // a x² + b x + c
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = Vec::with_capacity(2);
    if q != 0.0 {
        r.push(c / q);
    }
    r.push(q / a);
    r
}

/// Model-based candidate step from a point where the target is finite.
///
/// Wide brackets use a model with the global asymptotics of the target
/// (`−θ² + aθ + b` for the lifted function, the Newton line otherwise);
/// narrow brackets use the second-order Taylor model.
fn model_candidate(
    theta: f64,
    (f, f1, f2): (f64, f64, f64),
    lifted: bool,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let newton = || (f1 != 0.0).then(|| theta - f / f1);
    let wide = hi - lo >= 0.1 * theta.abs().max(1.0);
    let roots = if wide {
        if lifted {
            // m(t) = −t² + a t + b with m(θ) = f, m'(θ) = f'.
            let a = f1 + 2.0 * theta;
            let b = f + theta * theta - a * theta;
            quadratic_roots(-1.0, a, b)
        } else {
            newton().into_iter().collect()
        }
    } else {
        // f + f'(t−θ) + ½f''(t−θ)² in the offset s = t − θ.
        let s = quadratic_roots(0.5 * f2, f1, f);
        s.into_iter().map(|s| theta + s).collect()
    };
    pick_root(&roots, theta, lo, hi).or_else(|| newton().filter(|r| *r > lo && *r < hi))
}

/// Smallest eigenvalue of an irreducible `T` as the root of the last-pivot
/// function, by safeguarded bracketing on the Gershgorin interval.
///
/// When `hat_theta_min`, the smallest eigenvalue of `T` with its last row and
/// column removed, is supplied, model steps are computed on the lifted
/// function `(θ − θ̂_min)·d(θ)`, which has no pole there.
pub fn smallest_eig(t: &TriMatrix, hat_theta_min: Option<f64>) -> Result<f64, TriError> {
    let n = t.len();
    if n == 0 {
        return Err(TriError::Empty);
    }
    if n == 1 {
        return Ok(t.diag[0]);
    }
    let pole = hat_theta_min.filter(|p| p.is_finite());
    let (glo, ghi) = gershgorin(t);
    let pad = 1e-12 * glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (glo - pad, ghi + pad);
    let tol = |th: f64| 1e-14 * th.abs().max(1.0);

    let mut theta = lo;
    let (_, mut derivs) = target(t, theta, pole);
    let mut widths = [f64::INFINITY; 2];

    for _ in 0..EIG_MAX_ITER {
        let width = hi - lo;
        let mid = 0.5 * (lo + hi);
        if width <= tol(mid) {
            return Ok(mid);
        }
        // Bisect whenever the previous step failed to halve the bracket.
        let force_bisect = width > 0.5 * widths[0];
        let candidate = match (force_bisect, derivs) {
            (false, Some(fd)) => model_candidate(theta, fd, pole.is_some(), lo, hi),
            _ => None,
        };
        let next = candidate.unwrap_or(mid);
        let (lp, nd) = target(t, next, pole);
        if lp.value() == Some(0.0) {
            return Ok(next);
        }
        if lp.is_nonnegative() {
            lo = next;
        } else {
            hi = next;
        }
        // A tiny model step leaves the bracket one-sided; probe just below
        // the upper end to close it.
        if candidate.is_some() && (next - theta).abs() < 0.5 * tol(next) && hi - lo > tol(next) {
            let probe = hi - 0.5 * tol(next);
            if last_pivot(t, probe, 0).is_nonnegative() {
                lo = probe;
            } else {
                hi = probe;
            }
        }
        widths = [widths[1], hi - lo];
        theta = next;
        derivs = nd;
    }
    Err(TriError::NoConvergence(EIG_MAX_ITER))
}

/// LU factorization with partial pivoting of a general tridiagonal matrix,
/// in the layout of LAPACK's `gttrf`.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(sub: &[f64], diag: &[f64], sup: &[f64], zero_floor: f64) -> Self {
        let n = diag.len();
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                } else {
                    dl[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for p in d.iter_mut() {
            if *p == 0.0 {
                *p = zero_floor;
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

const INVERSE_ITER_MAX: usize = 50;

/// Unit eigenvector of an irreducible `T` for the eigenvalue closest to
/// `theta`, by inverse iteration on `T − θI`.
///
/// The sign is fixed so that the first numerically nonzero component is
/// positive.
pub fn inverse_iteration(t: &TriMatrix, theta: f64) -> Result<Vec<f64>, TriError> {
    let n = t.len();
    if n == 0 {
        return Err(TriError::Empty);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = t.norm_estimate().max(theta.abs()).max(f64::MIN_POSITIVE);
    let shifted: Vec<f64> = t.diag.iter().map(|d| d - theta).collect();
    let lu = TridiagLu::factor(&t.offdiag, &shifted, &t.offdiag, f64::EPSILON * scale);

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..INVERSE_ITER_MAX {
        lu.solve_in_place(&mut v);
        let nv = norm2(&v);
        if !nv.is_finite() || nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let tv = t.matvec(&v);
        let rho = dot(&v, &tv);
        let res = tv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if res <= 1e-12 * scale {
            fix_sign(&mut v);
            return Ok(v);
        }
    }
    Err(TriError::InverseIterationFailed(INVERSE_ITER_MAX))
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * vmax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Solves `(T + λI) w = rhs` through the `LDLᵀ` factorization.
pub fn solve_shifted(t: &TriMatrix, lambda: f64, rhs: &[f64]) -> Result<Vec<f64>, TriError> {
    ldlt_shifted(t, lambda)?.solve(rhs)
}
