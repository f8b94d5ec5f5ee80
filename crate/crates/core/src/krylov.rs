//! Vector-free reverse-communication driver for the generalized Lanczos
//! trust-region method.
//!
//! The solver never touches a vector. Each call to [`KrylovSolver::step`]
//! returns an [`Action`] telling the caller which vector operation to
//! perform, and the caller answers with the requested scalar in a [`Reply`].
//! The caller owns six vectors:
//!
//! * `s`: the conjugate-gradient iterate (only meaningful in the CG phase),
//! * `g`, `g_prev`: the current and previous gradient-like vectors,
//! * `v`: the preconditioned `M⁻¹g`,
//! * `p`: the search or Lanczos direction,
//! * `Hp`: the latest Hessian product,
//!
//! plus whatever it needs to retransform the coordinate solution `h` into
//! `x = Σⱼ hⱼqⱼ`. Basis vectors `qⱼ` are announced through
//! [`Action::StoreBasis`].
//!
//! ```text
//!  InitPrecond ─► StoreBasis ─► CgDir ─► HessProd ─► CgUpdate ─┐
//!                    ▲   │                   │                 │
//!                    │   │   (crossover)     ▼                 │
//!                    │   └─► LanczosDir ─► HessProd ─► LanczosGrad
//!                    │                                         │
//!                    └────────── not converged ◄───────────────┘
//!                                    │ converged
//!                                    ▼
//!                      Retransform ─► [ObjValue] ─► Done
//! ```

use thiserror::Error;

use crate::subproblem::{
    self, convexify, SolutionStatus, SubproblemError, SubproblemSolution, WarmStart,
    CONVEXIFY_EPS, CONVEXIFY_SIGMA,
};
use crate::tridiag::TriMatrix;

const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KrylovError {
    #[error("invalid termination config: {0}")]
    InvalidConfig(&'static str),
    #[error("trust-region radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("preconditioner is not positive definite (<g, M^-1 g> = {0})")]
    PreconditionerIndefinite(f64),
    #[error("reply {got} does not answer action {expected}")]
    UnexpectedReply {
        expected: &'static str,
        got: &'static str,
    },
    #[error("solver is not waiting for a reply")]
    NotRunning,
    #[error("reentry requires a finished solve with intact data")]
    InvalidReentry,
    #[error("restart vector has zero M-norm")]
    ZeroRestartVector,
    #[error("CG breakdown: alpha[{0}] is zero")]
    Breakdown(usize),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
}

/// Stopping tolerances.
///
/// The Lagrangian gradient norm `γᵢ₊₁|hᵢ|` is compared against
/// `max{tol_abs, tol_rel·γ₀}` with the interior pair when `λ = 0` and the
/// boundary pair otherwise. With `gradient_scaled` set, the relative
/// tolerances are tightened for small gradients to `min{tol_rel_i, γ₀}` and
/// `max{10⁻⁶, min{tol_rel_b, √γ₀}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminationConfig {
    pub tol_abs_i: f64,
    pub tol_rel_i: f64,
    pub tol_abs_b: f64,
    pub tol_rel_b: f64,
    pub gradient_scaled: bool,
    /// Relative curvature `|⟨p,Hp⟩|/(⟨p,Mp⟩‖T‖)` below which CG hands over
    /// to Lanczos.
    pub tol_curvature: f64,
    /// Relative size of `γᵢ₊₁` below which the Krylov space is treated as
    /// invariant.
    pub tol_invariant: f64,
    pub max_iter: Option<usize>,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            tol_abs_i: 0.0,
            tol_rel_i: 0.5,
            tol_abs_b: 0.0,
            tol_rel_b: 0.5,
            gradient_scaled: true,
            tol_curvature: f64::EPSILON.sqrt(),
            tol_invariant: 1e-10,
            max_iter: None,
        }
    }
}

impl TerminationConfig {
    /// Fixed relative tolerance `rel` for both interior and boundary.
    pub fn tight(rel: f64) -> Self {
        Self {
            tol_rel_i: rel,
            tol_rel_b: rel,
            gradient_scaled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), KrylovError> {
        let tols = [
            self.tol_abs_i,
            self.tol_rel_i,
            self.tol_abs_b,
            self.tol_rel_b,
            self.tol_curvature,
            self.tol_invariant,
        ];
        if tols.iter().any(|t| !(*t >= 0.0) || t.is_infinite()) {
            return Err(KrylovError::InvalidConfig("tolerances must be finite and >= 0"));
        }
        if self.max_iter == Some(0) {
            return Err(KrylovError::InvalidConfig("max_iter must be positive"));
        }
        Ok(())
    }

    pub fn interior_tol(&self, gamma0: f64) -> f64 {
        let rel = if self.gradient_scaled {
            self.tol_rel_i.min(gamma0)
        } else {
            self.tol_rel_i
        };
        self.tol_abs_i.max(rel * gamma0)
    }

    pub fn boundary_tol(&self, gamma0: f64) -> f64 {
        let rel = if self.gradient_scaled {
            1e-6_f64.max(self.tol_rel_b.min(gamma0.sqrt()))
        } else {
            self.tol_rel_b
        };
        self.tol_abs_b.max(rel * gamma0)
    }
}

/// `γᵢ₊₁|hᵢ| ≤ max{tol_abs, tol_rel·γ₀}` with the interior or boundary pair.
pub fn check_convergence(
    cfg: &TerminationConfig,
    gamma0: f64,
    gamma_next: f64,
    h_last: f64,
    lambda: f64,
) -> bool {
    let r = gamma_next * h_last.abs();
    let tol = if lambda == 0.0 {
        cfg.interior_tol(gamma0)
    } else {
        cfg.boundary_tol(gamma0)
    };
    r <= tol
}

/// Tridiagonal Lanczos data equivalent to a run of preconditioned CG.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedLanczos {
    /// `γ⁰ = ‖g⁰‖_{M⁻¹}` followed by the couplings `γ¹, γ², …`.
    pub gammas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Sign relating the Lanczos vector `qⁱ` to `vⁱ/‖vⁱ‖_M`.
    pub signs: Vec<f64>,
}

/// Converts CG step lengths `α` and ratios `β` into Lanczos coefficients:
/// `γⁱ = √βⁱ⁻¹/|αⁱ⁻¹|`, `δ⁰ = 1/α⁰`, `δⁱ = 1/αⁱ + βⁱ⁻¹/αⁱ⁻¹`.
pub fn cg_to_lanczos(alpha: &[f64], beta: &[f64], vnorm0: f64) -> Result<ConvertedLanczos, KrylovError> {
    if let Some(j) = alpha.iter().position(|a| *a == 0.0) {
        return Err(KrylovError::Breakdown(j));
    }
    let mut gammas = vec![vnorm0];
    let mut deltas = Vec::with_capacity(alpha.len());
    let mut signs = vec![1.0];
    for (i, a) in alpha.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { beta[i - 1] / alpha[i - 1] };
        deltas.push(1.0 / a + prev);
        if let Some(b) = beta.get(i) {
            gammas.push(b.sqrt() / a.abs());
        }
        signs.push(signs[i] * -a.signum());
    }
    signs.truncate(alpha.len().max(1));
    Ok(ConvertedLanczos {
        gammas,
        deltas,
        signs,
    })
}

/// Whether the boundary solution qualifies for the objective consistency
/// check: `λ ≥ 10⁻²·max{1, ρ_max}` and `|ρ_min| ≤ 10⁻⁸·ρ_max`.
pub fn gate_applies(lambda: f64, rho_min: f64, rho_max: f64) -> bool {
    lambda >= 1e-2 * rho_max.max(1.0) && rho_min.abs() <= 1e-8 * rho_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Proceed,
    ConvexifyResolve,
}

/// Compares the tridiagonal objective `q_h` with the true objective `q_x`
/// of the retransformed step.
pub fn ill_conditioning_gate(q_h: f64, q_x: f64) -> GateDecision {
    if q_x > 0.0 || (q_x - q_h).abs() > 1e-7 * q_x.abs().max(1.0) {
        GateDecision::ConvexifyResolve
    } else {
        GateDecision::Proceed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cg,
    Lanczos,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    InteriorConverged,
    BoundaryConverged,
    MaxIter,
    /// `γᵢ₊₁ = 0`: the Krylov space is invariant. The solution is optimal
    /// over everything explored; the caller may continue via
    /// [`KrylovSolver::request_new_krylov`].
    HardCaseInvariantSubspace,
    ConvexifiedResolve,
    NumericalFailure,
}

impl Outcome {
    pub fn tag(self) -> u8 {
        match self {
            Outcome::InteriorConverged => 0,
            Outcome::BoundaryConverged => 1,
            Outcome::MaxIter => 2,
            Outcome::HardCaseInvariantSubspace => 3,
            Outcome::ConvexifiedResolve => 4,
            Outcome::NumericalFailure => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::InteriorConverged => "interior_converged",
            Outcome::BoundaryConverged => "boundary_converged",
            Outcome::MaxIter => "max_iter",
            Outcome::HardCaseInvariantSubspace => "hard_case_invariant_subspace",
            Outcome::ConvexifiedResolve => "convexified_resolve",
            Outcome::NumericalFailure => "numerical_failure",
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Outcome::InteriorConverged
                | Outcome::BoundaryConverged
                | Outcome::HardCaseInvariantSubspace
                | Outcome::ConvexifiedResolve
        )
    }
}

/// Instruction for the caller. The reply each action expects is noted.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// `v ← M⁻¹g`. Reply [`Reply::Dot`] with `⟨g, v⟩`.
    InitPrecond,
    /// Append `scale·v` to the basis (its `M`-image is `scale·g`).
    /// Reply [`Reply::Ack`].
    StoreBasis { scale: f64 },
    /// `p ← −v + βp`. Reply [`Reply::Ack`].
    CgDir { beta: f64 },
    /// `Hp ← H·p`. Reply [`Reply::Curvature`] with `⟨p,Hp⟩` and `⟨p,Mp⟩`.
    HessProd,
    /// `s ← s + αp`, `g_prev ← g`, `g ← g + αHp`, `v ← M⁻¹g`.
    /// Reply [`Reply::Dot`] with `⟨g, v⟩`.
    CgUpdate { alpha: f64 },
    /// `p ← scale·v`. Reply [`Reply::Ack`].
    LanczosDir { scale: f64 },
    /// `t ← Hp − c_g·g − c_gprev·g_prev`, `g_prev ← g`, `g ← t`,
    /// `v ← M⁻¹g`. Reply [`Reply::Dot`] with `⟨g, v⟩`.
    LanczosGrad { c_g: f64, c_gprev: f64 },
    /// `x ← Σⱼ hⱼqⱼ` over the stored basis. Reply [`Reply::Ack`].
    Retransform { h: Vec<f64> },
    /// Set `v` to a fresh vector `w` that is `M`-orthogonal to the stored
    /// basis and `g ← Mw`. Reply [`Reply::Dot`] with `⟨w, Mw⟩`.
    NewKrylov,
    /// Reply [`Reply::Objective`] with `½⟨x,Hx⟩ + ⟨g⁰,x⟩` at the current `x`.
    ObjValue,
    Done(Outcome),
}

impl Action {
    /// Stable integer tag for foreign callers.
    pub fn tag(&self) -> u8 {
        match self {
            Action::InitPrecond => 1,
            Action::HessProd => 2,
            Action::CgUpdate { .. } => 3,
            Action::CgDir { .. } => 4,
            Action::LanczosGrad { .. } => 5,
            Action::Retransform { .. } => 6,
            Action::NewKrylov => 7,
            Action::ObjValue => 8,
            Action::Done(_) => 9,
            Action::StoreBasis { .. } => 10,
            Action::LanczosDir { .. } => 11,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Action::InitPrecond => "InitPrecond",
            Action::StoreBasis { .. } => "StoreBasis",
            Action::CgDir { .. } => "CgDir",
            Action::HessProd => "HessProd",
            Action::CgUpdate { .. } => "CgUpdate",
            Action::LanczosDir { .. } => "LanczosDir",
            Action::LanczosGrad { .. } => "LanczosGrad",
            Action::Retransform { .. } => "Retransform",
            Action::NewKrylov => "NewKrylov",
            Action::ObjValue => "ObjValue",
            Action::Done(_) => "Done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reply {
    Ack,
    Dot(f64),
    Curvature { php: f64, pmp: f64 },
    Objective(f64),
}

impl Reply {
    fn name(&self) -> &'static str {
        match self {
            Reply::Ack => "Ack",
            Reply::Dot(_) => "Dot",
            Reply::Curvature { .. } => "Curvature",
            Reply::Objective(_) => "Objective",
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Reply::Ack => true,
            Reply::Dot(a) | Reply::Objective(a) => a.is_finite(),
            Reply::Curvature { php, pmp } => php.is_finite() && pmp.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Init,
    StoreAck,
    CgDirAck,
    CgCurvature,
    CgUpdate { alpha: f64 },
    LanczosDirAck,
    LanczosCurvature,
    LanczosGrad { delta: f64 },
    RetransformAck { outcome: Outcome, gate: bool },
    Objective { outcome: Outcome },
    NewKrylov,
    Done,
}

/// Reverse-communication state of one trust-region subproblem solve.
///
/// Owned by one solve at a time; it is `Send` and may move between threads
/// between calls.
#[derive(Debug, Clone)]
pub struct KrylovSolver {
    cfg: TerminationConfig,
    delta: f64,
    lanczos_only: bool,
    phase: Phase,
    pending: Pending,
    last_action: &'static str,

    t: TriMatrix,
    gamma0: f64,
    alpha_hist: Vec<f64>,
    beta_hist: Vec<f64>,

    /// `⟨g, v⟩` of the caller's current `g`.
    gv: f64,
    /// Sign relating the current `v` to the Lanczos vector.
    sign: f64,
    /// `‖gᴸ‖_{M⁻¹}` of the Lanczos gradients matching the caller's current
    /// and previous `g`.
    norm_cur: f64,
    norm_prev: f64,
    /// Scales mapping the caller's `g`, `g_prev` to Lanczos gradients.
    g_scale: f64,
    gprev_scale: f64,
    row_starts_block: bool,

    rho_min: f64,
    rho_max: f64,

    sol: Option<SubproblemSolution>,
    /// Coupling to the next (not yet computed) row.
    gamma_next: f64,
    iters_since_entry: usize,
    hess_products: usize,
    outcome: Option<Outcome>,
    convexified: bool,
}

impl KrylovSolver {
    /// Starts a solve. The first action is always [`Action::InitPrecond`].
    pub fn new(cfg: TerminationConfig, delta: f64) -> Result<(Self, Action), KrylovError> {
        cfg.validate()?;
        check_radius(delta)?;
        let solver = Self {
            cfg,
            delta,
            lanczos_only: false,
            phase: Phase::Cg,
            pending: Pending::Init,
            last_action: "InitPrecond",
            t: TriMatrix::default(),
            gamma0: 0.0,
            alpha_hist: Vec::new(),
            beta_hist: Vec::new(),
            gv: 0.0,
            sign: 1.0,
            norm_cur: 0.0,
            norm_prev: 0.0,
            g_scale: 1.0,
            gprev_scale: 0.0,
            row_starts_block: true,
            rho_min: f64::INFINITY,
            rho_max: f64::NEG_INFINITY,
            sol: None,
            gamma_next: 0.0,
            iters_since_entry: 0,
            hess_products: 0,
            outcome: None,
            convexified: false,
        };
        Ok((solver, Action::InitPrecond))
    }

    /// Resets every history and starts over with radius `delta`.
    pub fn reinit(&mut self, delta: f64) -> Result<Action, KrylovError> {
        let lanczos_only = self.lanczos_only;
        let (fresh, action) = Self::new(self.cfg.clone(), delta)?;
        *self = fresh;
        self.lanczos_only = lanczos_only;
        Ok(action)
    }

    /// Skip conjugate gradients and run Lanczos from the start. Only takes
    /// effect before the first reply.
    pub fn set_lanczos_only(&mut self, on: bool) {
        if self.pending == Pending::Init {
            self.lanczos_only = on;
        }
    }

    pub fn config(&self) -> &TerminationConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tridiagonal(&self) -> &TriMatrix {
        &self.t
    }

    /// `‖g⁰‖_{M⁻¹}`.
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Coupling `γᵢ₊₁` between the last row of `T` and the next one.
    pub fn gamma_next(&self) -> f64 {
        self.gamma_next
    }

    /// Scale `c` such that `c·g` is the next Lanczos gradient `gᵢ₊₁`, where
    /// `g` is the caller's current gradient vector.
    pub fn next_gradient_scale(&self) -> f64 {
        self.g_scale
    }

    pub fn alpha_history(&self) -> &[f64] {
        &self.alpha_hist
    }

    pub fn beta_history(&self) -> &[f64] {
        &self.beta_hist
    }

    pub fn solution(&self) -> Option<&SubproblemSolution> {
        self.sol.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.sol.as_ref().map_or(0.0, |s| s.lambda)
    }

    /// Extremes of the Rayleigh quotients `⟨p,Hp⟩/⟨p,Mp⟩` seen so far.
    pub fn rayleigh_range(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Lagrangian gradient norm `γᵢ₊₁|hᵢ|` of the current solution.
    pub fn residual_estimate(&self) -> f64 {
        self.sol
            .as_ref()
            .and_then(|s| s.h.last())
            .map_or(0.0, |h| self.gamma_next * h.abs())
    }

    pub fn hess_products(&self) -> usize {
        self.hess_products
    }

    /// Completed iterations, i.e. rows of `T`.
    pub fn iterations(&self) -> usize {
        self.t.len()
    }

    pub fn is_done(&self) -> bool {
        self.pending == Pending::Done
    }

    /// Advances the state machine with the reply to the last action.
    pub fn step(&mut self, reply: Reply) -> Result<Action, KrylovError> {
        let expected = self.last_action;
        let mismatch = |got: &Reply| KrylovError::UnexpectedReply {
            expected,
            got: got.name(),
        };
        if self.pending == Pending::Done {
            return Err(KrylovError::NotRunning);
        }
        if !reply.is_finite() {
            return Ok(self.emit_done(Outcome::NumericalFailure));
        }
        let action = match (self.pending, reply) {
            (Pending::Init, Reply::Dot(gv)) => self.on_init(gv)?,
            (Pending::StoreAck, Reply::Ack) => self.after_store(),
            (Pending::CgDirAck, Reply::Ack) | (Pending::LanczosDirAck, Reply::Ack) => {
                self.hess_products += 1;
                self.pending = if self.phase == Phase::Cg {
                    Pending::CgCurvature
                } else {
                    Pending::LanczosCurvature
                };
                Action::HessProd
            }
            (Pending::CgCurvature, Reply::Curvature { php, pmp }) => self.on_cg_curvature(php, pmp),
            (Pending::CgUpdate { alpha }, Reply::Dot(gv)) => self.on_cg_update(alpha, gv)?,
            (Pending::LanczosCurvature, Reply::Curvature { php, pmp }) => {
                self.track_rayleigh(php, pmp);
                self.pending = Pending::LanczosGrad { delta: php };
                let c_g = php * self.g_scale / self.norm_cur;
                let c_gprev = if self.row_starts_block {
                    0.0
                } else {
                    self.norm_cur * self.gprev_scale / self.norm_prev
                };
                Action::LanczosGrad { c_g, c_gprev }
            }
            (Pending::LanczosGrad { delta }, Reply::Dot(gv)) => self.on_lanczos_grad(delta, gv)?,
            (Pending::RetransformAck { outcome, gate }, Reply::Ack) => {
                let (lo, hi) = self.rayleigh_range();
                if gate && gate_applies(self.lambda(), lo, hi) {
                    self.pending = Pending::Objective { outcome };
                    Action::ObjValue
                } else {
                    self.emit_done(outcome)
                }
            }
            (Pending::Objective { outcome }, Reply::Objective(q_x)) => self.on_objective(outcome, q_x)?,
            (Pending::NewKrylov, Reply::Dot(w2)) => self.on_new_krylov(w2)?,
            (_, r) => return Err(mismatch(&r)),
        };
        self.last_action = action.name();
        Ok(action)
    }

    fn emit(&mut self, action: Action) -> Action {
        self.last_action = action.name();
        action
    }

    fn emit_done(&mut self, outcome: Outcome) -> Action {
        self.pending = Pending::Done;
        self.phase = Phase::Done;
        self.outcome = Some(outcome);
        Action::Done(outcome)
    }

    fn on_init(&mut self, gv: f64) -> Result<Action, KrylovError> {
        if gv < 0.0 {
            return Err(KrylovError::PreconditionerIndefinite(gv));
        }
        self.gamma0 = gv.sqrt();
        if gv == 0.0 {
            self.sol = Some(SubproblemSolution {
                h: Vec::new(),
                lambda: 0.0,
                obj: 0.0,
                status: SolutionStatus::Interior,
                newton_iters: 0,
                theta_min: None,
            });
            self.pending = Pending::RetransformAck {
                outcome: Outcome::InteriorConverged,
                gate: false,
            };
            return Ok(Action::Retransform { h: Vec::new() });
        }
        self.gv = gv;
        self.norm_cur = self.gamma0;
        self.g_scale = 1.0;
        self.phase = if self.lanczos_only {
            Phase::Lanczos
        } else {
            Phase::Cg
        };
        Ok(self.begin_iteration())
    }

    fn max_iter(&self) -> usize {
        self.cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER)
    }

    fn begin_iteration(&mut self) -> Action {
        if self.iters_since_entry >= self.max_iter() {
            return self.finish(Outcome::MaxIter);
        }
        self.iters_since_entry += 1;
        self.pending = Pending::StoreAck;
        Action::StoreBasis {
            scale: self.sign / self.gv.sqrt(),
        }
    }

    fn after_store(&mut self) -> Action {
        match self.phase {
            Phase::Cg => {
                self.pending = Pending::CgDirAck;
                let beta = if self.row_starts_block {
                    0.0
                } else {
                    *self.beta_hist.last().unwrap_or(&0.0)
                };
                Action::CgDir { beta }
            }
            _ => {
                self.pending = Pending::LanczosDirAck;
                Action::LanczosDir {
                    scale: self.sign / self.gv.sqrt(),
                }
            }
        }
    }

    fn track_rayleigh(&mut self, php: f64, pmp: f64) {
        if pmp > 0.0 {
            let rho = php / pmp;
            self.rho_min = self.rho_min.min(rho);
            self.rho_max = self.rho_max.max(rho);
        }
    }

    fn on_cg_curvature(&mut self, php: f64, pmp: f64) -> Action {
        self.track_rayleigh(php, pmp);
        let scale = self.t.norm_estimate();
        if php.abs() <= self.cfg.tol_curvature * pmp * scale {
            // CG breaks down on this direction; continue with Lanczos from
            // the current preconditioned gradient.
            self.phase = Phase::Lanczos;
            self.g_scale = self.sign * self.norm_cur / self.gv.sqrt();
            self.pending = Pending::LanczosDirAck;
            return Action::LanczosDir {
                scale: self.sign / self.gv.sqrt(),
            };
        }
        let alpha = self.gv / php;
        self.pending = Pending::CgUpdate { alpha };
        Action::CgUpdate { alpha }
    }

    fn on_cg_update(&mut self, alpha: f64, gv_new: f64) -> Result<Action, KrylovError> {
        if gv_new < 0.0 {
            return Err(KrylovError::PreconditionerIndefinite(gv_new));
        }
        let beta = gv_new / self.gv;
        let prev = if self.row_starts_block {
            0.0
        } else {
            self.beta_hist.last().unwrap() / self.alpha_hist.last().unwrap()
        };
        let delta = 1.0 / alpha + prev;
        self.alpha_hist.push(alpha);
        self.beta_hist.push(beta);
        let gamma_next = beta.sqrt() / alpha.abs();

        self.push_row(delta);
        self.gprev_scale = self.g_scale;
        self.sign *= -alpha.signum();
        self.norm_prev = self.norm_cur;
        self.norm_cur = gamma_next;
        self.gv = gv_new;
        self.g_scale = if gv_new > 0.0 {
            self.sign * gamma_next / gv_new.sqrt()
        } else {
            0.0
        };
        self.gamma_next = gamma_next;
        self.after_row()
    }

    fn on_lanczos_grad(&mut self, delta: f64, gv_new: f64) -> Result<Action, KrylovError> {
        if gv_new < 0.0 {
            return Err(KrylovError::PreconditionerIndefinite(gv_new));
        }
        let gamma_next = gv_new.sqrt();
        self.push_row(delta);
        self.gprev_scale = self.g_scale;
        self.g_scale = 1.0;
        self.sign = 1.0;
        self.norm_prev = self.norm_cur;
        self.norm_cur = gamma_next;
        self.gv = gv_new;
        self.gamma_next = gamma_next;
        self.after_row()
    }

    fn push_row(&mut self, delta: f64) {
        if self.row_starts_block {
            self.t.push_block(delta);
        } else {
            self.t.push(self.norm_cur, delta);
        }
        self.row_starts_block = false;
    }

    fn warm_start(&self) -> WarmStart {
        WarmStart {
            prev_lambda: self.sol.as_ref().map(|s| s.lambda),
            theta_min: None,
            hat_theta_min: self.sol.as_ref().and_then(|s| s.theta_min),
        }
    }

    fn after_row(&mut self) -> Result<Action, KrylovError> {
        let warm = self.warm_start();
        match subproblem::solve(&self.t, self.gamma0, self.delta, Some(&warm)) {
            Ok(sol) => self.sol = Some(sol),
            Err(_) => return Ok(self.emit_done(Outcome::NumericalFailure)),
        }
        Ok(self.test_termination())
    }

    fn invariant(&self) -> bool {
        let scale = self
            .rho_max
            .abs()
            .max(self.rho_min.abs())
            .max(self.t.norm_estimate());
        self.gamma_next <= self.cfg.tol_invariant * scale
    }

    fn test_termination(&mut self) -> Action {
        let sol = self.sol.as_ref().expect("solution after row");
        let h_last = *sol.h.last().unwrap_or(&0.0);
        if self.invariant() {
            return self.finish(Outcome::HardCaseInvariantSubspace);
        }
        if check_convergence(&self.cfg, self.gamma0, self.gamma_next, h_last, sol.lambda) {
            let outcome = if sol.lambda == 0.0 {
                Outcome::InteriorConverged
            } else {
                Outcome::BoundaryConverged
            };
            return self.finish(outcome);
        }
        self.begin_iteration()
    }

    fn finish(&mut self, outcome: Outcome) -> Action {
        let h = self.sol.as_ref().map(|s| s.h.clone()).unwrap_or_default();
        self.pending = Pending::RetransformAck {
            outcome,
            gate: outcome == Outcome::BoundaryConverged,
        };
        Action::Retransform { h }
    }

    fn on_objective(&mut self, outcome: Outcome, q_x: f64) -> Result<Action, KrylovError> {
        let q_h = self.sol.as_ref().map_or(0.0, |s| s.obj);
        if ill_conditioning_gate(q_h, q_x) == GateDecision::Proceed {
            return Ok(self.emit_done(outcome));
        }
        let d = convexify(&self.t, CONVEXIFY_EPS, CONVEXIFY_SIGMA);
        let convex = self.t.add_diagonal(&d);
        let sol = subproblem::solve(&convex, self.gamma0, self.delta, None)?;
        let h = sol.h.clone();
        self.sol = Some(sol);
        self.convexified = true;
        self.pending = Pending::RetransformAck {
            outcome: Outcome::ConvexifiedResolve,
            gate: false,
        };
        Ok(Action::Retransform { h })
    }

    /// True when the current solution came from the convexified matrix.
    pub fn convexified(&self) -> bool {
        self.convexified
    }

    /// Re-solves the current `T` with a new radius. Emits `Done` straight
    /// away when the new solution passes the termination test, otherwise
    /// resumes the iteration where it stopped.
    pub fn reenter_radius(&mut self, delta_new: f64) -> Result<Action, KrylovError> {
        check_radius(delta_new)?;
        let resumable = matches!(
            self.outcome,
            Some(
                Outcome::InteriorConverged
                    | Outcome::BoundaryConverged
                    | Outcome::MaxIter
                    | Outcome::HardCaseInvariantSubspace
                    | Outcome::ConvexifiedResolve
            )
        );
        if self.pending != Pending::Done || !resumable {
            return Err(KrylovError::InvalidReentry);
        }
        self.delta = delta_new;
        self.iters_since_entry = 0;
        self.convexified = false;
        self.outcome = None;
        self.phase = if self.alpha_hist.len() == self.t.len() && !self.lanczos_only {
            Phase::Cg
        } else {
            Phase::Lanczos
        };
        if self.t.is_empty() {
            self.pending = Pending::RetransformAck {
                outcome: Outcome::InteriorConverged,
                gate: false,
            };
            return Ok(self.emit(Action::Retransform { h: Vec::new() }));
        }
        let warm = self.sol.as_ref().map(WarmStart::from_solution);
        let sol = subproblem::resolve_radius(&self.t, self.gamma0, delta_new, warm.as_ref())?;
        self.sol = Some(sol);
        let action = self.test_termination();
        Ok(self.emit(action))
    }

    /// Opens a new Krylov block after the current one was found invariant
    /// (or on any converged solve, at the caller's discretion).
    pub fn request_new_krylov(&mut self) -> Result<Action, KrylovError> {
        let ok = matches!(
            self.outcome,
            Some(
                Outcome::HardCaseInvariantSubspace
                    | Outcome::InteriorConverged
                    | Outcome::BoundaryConverged
            )
        );
        if self.pending != Pending::Done || !ok {
            return Err(KrylovError::InvalidReentry);
        }
        self.pending = Pending::NewKrylov;
        self.outcome = None;
        Ok(self.emit(Action::NewKrylov))
    }

    fn on_new_krylov(&mut self, w2: f64) -> Result<Action, KrylovError> {
        if !(w2 > 0.0) {
            self.pending = Pending::Done;
            self.outcome = Some(Outcome::HardCaseInvariantSubspace);
            return Err(KrylovError::ZeroRestartVector);
        }
        self.phase = Phase::Lanczos;
        self.row_starts_block = true;
        self.gv = w2;
        self.sign = 1.0;
        self.norm_cur = w2.sqrt();
        self.norm_prev = 0.0;
        self.g_scale = 1.0;
        self.gprev_scale = 0.0;
        self.iters_since_entry = 0;
        Ok(self.begin_iteration())
    }
}

fn check_radius(delta: f64) -> Result<(), KrylovError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(KrylovError::InvalidRadius(delta))
    }
}
