//! One incremental growth step: closed-form projected-gradient updates and
//! a numerical proximal projected-gradient solver that also enforces the
//! accretion constraint, plus KKT certificates for both.
//!
//! Every step minimizes `Ψ(γ_prev + Δ) + (inv2tau/2) LΔ·Δ` subject to the
//! mass balance (and, on the numerical path, `c(Δ) ≤ 0`).

use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::constraints::{
    c_vector, lambda_min_2x2, project_feasible_increment, project_psd_weighted, BalanceMode,
    BalanceRelation, GrowthField, MassBalance,
};
use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::objectives::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverPath {
    #[default]
    Analytic,
    Numerical,
}

/// Where the analytic path evaluates `∇Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientLinearization {
    /// At `γ_prev` (explicit).
    #[default]
    Previous,
    /// Iterate the closed form until `∇Ψ` is evaluated at its own output.
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub path: SolverPath,
    pub inv2tau: f64,
    pub max_inner_iterations: usize,
    /// Relative projected-gradient tolerance of the numerical path.
    pub tolerance: f64,
    pub gradient_linearization: GradientLinearization,
    pub fixed_point_tolerance: f64,
    pub fixed_point_max_sweeps: usize,
}

impl SolverConfig {
    pub fn new(path: SolverPath, inv2tau: f64) -> Result<Self> {
        if !(inv2tau > 0.0 && inv2tau.is_finite()) {
            return Err(Error::InvalidInput(format!("inv2tau must be positive, got {inv2tau}")));
        }
        Ok(Self {
            path,
            inv2tau,
            max_inner_iterations: 2000,
            tolerance: 1e-6,
            gradient_linearization: GradientLinearization::Previous,
            fixed_point_tolerance: 1e-8,
            fixed_point_max_sweeps: 50,
        })
    }
}

/// Lagrange multiplier of the mass balance.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Global(f64),
    Local(Vec<f64>),
}

impl Multiplier {
    pub fn norm(&self) -> f64 {
        match self {
            Multiplier::Global(l) => l.abs(),
            Multiplier::Local(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub gamma: GrowthField,
    pub delta: Vec<f64>,
    /// Full `2N` displacement at the new state.
    pub displacement: Vec<f64>,
    pub multiplier: Multiplier,
    pub kkt: KktReport,
    pub kkt_residual: f64,
    /// `Ψ(γ) + (inv2tau/2) LΔ·Δ`.
    pub objective_value: f64,
    /// `Ψ(γ)` alone.
    pub psi_value: f64,
    /// Elements whose accretion constraint is active (numerical) or violated (analytic).
    pub psd_active: Vec<bool>,
    pub max_psd_violation: f64,
    pub converged: bool,
    pub inner_iterations: usize,
}

/// Diagonal `√L⁻¹`.
pub fn sqrt_l_inv(sys: &AssembledSystem) -> Vec<f64> {
    sys.l_diag().iter().map(|l| 1.0 / l.sqrt()).collect()
}

/// Closed-form step under a global equality balance for a given `∇Ψ`.
/// Returns `(Δ, λ)`.
pub fn analytic_increment_global(sys: &AssembledSystem, grad: &[f64], gamma: f64, inv2tau: f64) -> (Vec<f64>, f64) {
    let a = sys.trace_weights();
    let l = sys.l_diag();
    let target = gamma * sys.domain_area();
    let aa: f64 = a.iter().zip(l).map(|(a, l)| a * a / l).sum();
    let ag: f64 = a.iter().zip(l).zip(grad).map(|((a, l), g)| a * g / l).sum();
    let tau2 = 1.0 / inv2tau;
    let delta = (0..grad.len())
        .map(|i| {
            let li = 1.0 / l[i];
            -tau2 * (li * grad[i] - li * a[i] * ag / aa) + target * li * a[i] / aa
        })
        .collect();
    let lambda = -(ag + inv2tau * target) / aa;
    (delta, lambda)
}

/// Closed-form step under a local equality balance with per-element targets.
/// Returns `(Δ, 𝛌)`.
pub fn analytic_increment_local(
    sys: &AssembledSystem,
    grad: &[f64],
    targets: &[f64],
    inv2tau: f64,
) -> (Vec<f64>, Vec<f64>) {
    let l = sys.l_diag();
    let tau2 = 1.0 / inv2tau;
    let mut delta = vec![0.0; grad.len()];
    let mut lambda = vec![0.0; targets.len()];
    for (e, &t) in targets.iter().enumerate() {
        let i = 3 * e;
        let (l1, l2, l3) = (l[i], l[i + 1], l[i + 2]);
        let m = 1.0 / l1 + 1.0 / l2;
        let ug = (grad[i] / l1 + grad[i + 1] / l2) / m;
        // (I − P) removes the trace-direction component in the √L⁻¹ frame
        delta[i] = -tau2 * (grad[i] - ug) / l1 + t / (l1 * m);
        delta[i + 1] = -tau2 * (grad[i + 1] - ug) / l2 + t / (l2 * m);
        delta[i + 2] = -tau2 * grad[i + 2] / l3;
        lambda[e] = -(ug + inv2tau * t / m);
    }
    (delta, lambda)
}

/// The block-diagonal operators `P`, `U`, `V` of the local closed form, built
/// as sparse matrices together with `A` and `√L⁻¹`.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub p: CscMatrix<f64>,
    pub u: CscMatrix<f64>,
    pub v: CscMatrix<f64>,
    pub a: CscMatrix<f64>,
    pub sqrt_l_inv: CscMatrix<f64>,
}

impl LocalOperators {
    pub fn new(sys: &AssembledSystem) -> Self {
        let ne = sys.n_elements();
        let n = 3 * ne;
        let s = sqrt_l_inv(sys);
        let mut p = CooMatrix::new(n, n);
        let mut u = CooMatrix::new(ne, n);
        let mut v = CooMatrix::new(n, ne);
        let mut a = CooMatrix::new(ne, n);
        let mut sq = CooMatrix::new(n, n);
        for e in 0..ne {
            let (s1, s2) = (s[3 * e], s[3 * e + 1]);
            let m = s1 * s1 + s2 * s2;
            let sv = [s1, s2];
            for i in 0..2 {
                for j in 0..2 {
                    p.push(3 * e + i, 3 * e + j, sv[i] * sv[j] / m);
                }
                u.push(e, 3 * e + i, sv[i] / m);
                v.push(3 * e + i, e, sv[i] / m);
                a.push(e, 3 * e + i, 1.0);
            }
            for k in 0..3 {
                sq.push(3 * e + k, 3 * e + k, s[3 * e + k]);
            }
        }
        Self {
            p: CscMatrix::from(&p),
            u: CscMatrix::from(&u),
            v: CscMatrix::from(&v),
            a: CscMatrix::from(&a),
            sqrt_l_inv: CscMatrix::from(&sq),
        }
    }
}

/// Largest absolute entry of a sparse matrix.
pub fn sparse_max_abs(m: &CscMatrix<f64>) -> f64 {
    m.values().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn penalty(sys: &AssembledSystem, delta: &[f64], inv2tau: f64) -> f64 {
    0.5 * inv2tau * sys.l_norm_sq(delta)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Per-element classification used by the KKT certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ConeState {
    Interior,
    /// Rank-one boundary; gradient of `λ_min` in vector form.
    Face([f64; 3]),
    Apex,
}

fn cone_state(g: [f64; 3], tol: f64) -> ConeState {
    let m = 0.5 * (g[0] + g[1]);
    let h = 0.5 * (g[0] - g[1]);
    let o = 0.5 * g[2];
    let rad = h.hypot(o);
    let (l1, l2) = (m + rad, m - rad);
    if l2 > tol {
        ConeState::Interior
    } else if l1 > tol {
        // unit eigenvector of the smaller eigenvalue
        let w = if rad == 0.0 {
            [0.0, 1.0]
        } else if h >= 0.0 {
            let (x, y) = (o, l2 - g[0]);
            let n = x.hypot(y);
            [x / n, y / n]
        } else {
            let (x, y) = (l2 - g[1], o);
            let n = x.hypot(y);
            [x / n, y / n]
        };
        ConeState::Face([w[0] * w[0], w[1] * w[1], w[0] * w[1]])
    } else {
        ConeState::Apex
    }
}

/// Components of the KKT certificate; [`KktReport::residual`] is their max.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `‖G + λ a − Σ σ_e n_e‖` in the `L⁻¹` norm, with `G` the gradient of the step objective.
    pub stationarity: f64,
    pub mass: f64,
    pub psd_violation: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
    pub multiplier: Multiplier,
}

impl KktReport {
    pub fn residual(&self) -> f64 {
        self.stationarity
            .max(self.mass)
            .max(self.psd_violation)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

/// `L⁻¹`-metric projection of a dual element vector onto the normal cone
/// of the PSD constraint at a point in `state`.
fn project_normal(r: [f64; 3], l: [f64; 3], state: ConeState) -> [f64; 3] {
    match state {
        ConeState::Interior => [0.0; 3],
        ConeState::Face(n) => {
            let num: f64 = (0..3).map(|k| r[k] * n[k] / l[k]).sum();
            let den: f64 = (0..3).map(|k| n[k] * n[k] / l[k]).sum();
            let s = (num / den).max(0.0);
            [s * n[0], s * n[1], s * n[2]]
        }
        ConeState::Apex => {
            // dual vectors (S11, S22, S12) of a PSD S; in the growth layout
            // (S11, S22, 2 S12) the metric ratio becomes l1/(4 l3)
            let beta = 2.0 * l[0] / (4.0 * l[2]);
            let g = project_psd_weighted([r[0], r[1], 2.0 * r[2]], beta);
            [g[0], g[1], 0.5 * g[2]]
        }
    }
}

/// Squared `L⁻¹` distance of `r_e + λ a_e` to the element normal cone and its
/// derivative in `λ`, summed over `elems`.
fn dist_sq_and_slope(
    grad: &[f64],
    sys: &AssembledSystem,
    states: &[ConeState],
    elems: &[usize],
    lambda: f64,
    trace_weight: &dyn Fn(usize) -> [f64; 3],
) -> (f64, f64) {
    let l = sys.l_diag();
    let mut v = 0.0;
    let mut d = 0.0;
    for &e in elems {
        let a = trace_weight(e);
        let le = [l[3 * e], l[3 * e + 1], l[3 * e + 2]];
        let r = [
            grad[3 * e] + lambda * a[0],
            grad[3 * e + 1] + lambda * a[1],
            grad[3 * e + 2] + lambda * a[2],
        ];
        let pr = project_normal(r, le, states[e]);
        for k in 0..3 {
            let diff = r[k] - pr[k];
            v += diff * diff / le[k];
            d += 2.0 * diff * a[k] / le[k];
        }
    }
    (v, d)
}

/// Minimizes the convex `h(λ)` over `λ` (or `λ ≥ 0`) by bisection on `h'`.
fn best_multiplier(h: impl Fn(f64) -> (f64, f64), nonneg: bool, guess: f64) -> f64 {
    let clamp = |x: f64| if nonneg { x.max(0.0) } else { x };
    let mut lo = clamp(guess);
    let mut hi = lo;
    let mut step = 1.0 + guess.abs();
    let mut k = 0;
    while h(lo).1 > 0.0 && k < 1100 {
        if nonneg && lo == 0.0 {
            return 0.0;
        }
        lo = clamp(lo - step);
        step *= 2.0;
        k += 1;
    }
    step = 1.0 + guess.abs();
    k = 0;
    while h(hi).1 < 0.0 && k < 1100 {
        hi += step;
        step *= 2.0;
        k += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid).1 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// KKT certificate of an increment `Δ` with step-objective gradient
/// `G = ∇Ψ(γ_prev + Δ) + inv2tau LΔ`. With `enforce_psd = false` the
/// accretion constraint is ignored (the closed-form problem).
pub fn kkt_report(
    sys: &AssembledSystem,
    delta: &[f64],
    step_grad: &[f64],
    balance: &MassBalance,
    enforce_psd: bool,
) -> Result<KktReport> {
    let ne = sys.n_elements();
    let scale = delta.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(balance.gamma.abs());
    let act_tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let states: Vec<ConeState> = if enforce_psd {
        delta
            .chunks_exact(3)
            .map(|g| cone_state([g[0], g[1], g[2]], act_tol))
            .collect()
    } else {
        vec![ConeState::Interior; ne]
    };
    let ineq = balance.relation == BalanceRelation::Inequality;
    let mass = balance.residual(delta, sys)?;
    let psd_violation = if enforce_psd {
        c_vector(delta).into_iter().fold(0.0, f64::max)
    } else {
        0.0
    };
    let l = sys.l_diag();

    match balance.mode {
        BalanceMode::Global => {
            let areas = sys.element_areas();
            let tw = |e: usize| [areas[e], areas[e], 0.0];
            let all: Vec<usize> = (0..ne).collect();
            let h = |lam: f64| dist_sq_and_slope(step_grad, sys, &states, &all, lam, &tw);
            let a = sys.trace_weights();
            let aa: f64 = a.iter().zip(l).map(|(a, l)| a * a / l).sum();
            let ag: f64 = a.iter().zip(l).zip(step_grad).map(|((a, l), g)| a * g / l).sum();
            let lambda = best_multiplier(h, ineq, -ag / aa);
            let stationarity = h(lambda).0.sqrt();
            let slack = sys.total_trace(delta) - balance.global_target(sys);
            Ok(KktReport {
                stationarity,
                mass,
                psd_violation,
                dual_feasibility: if ineq { (-lambda).max(0.0) } else { 0.0 },
                complementarity: if ineq { (lambda * slack).abs() } else { 0.0 },
                multiplier: Multiplier::Global(lambda),
            })
        }
        BalanceMode::Local => {
            let targets = balance.local_targets(ne)?;
            let tw = |_e: usize| [1.0, 1.0, 0.0];
            let mut total = 0.0;
            let mut lambdas = Vec::with_capacity(ne);
            let mut comp: f64 = 0.0;
            let mut dual: f64 = 0.0;
            for e in 0..ne {
                let one = [e];
                let h = |lam: f64| dist_sq_and_slope(step_grad, sys, &states, &one, lam, &tw);
                let m = 1.0 / l[3 * e] + 1.0 / l[3 * e + 1];
                let guess = -(step_grad[3 * e] / l[3 * e] + step_grad[3 * e + 1] / l[3 * e + 1]) / m;
                let lam = best_multiplier(h, ineq, guess);
                total += h(lam).0;
                if ineq {
                    let slack = delta[3 * e] + delta[3 * e + 1] - targets[e];
                    comp = comp.max((lam * slack).abs());
                    dual = dual.max((-lam).max(0.0));
                }
                lambdas.push(lam);
            }
            Ok(KktReport {
                stationarity: total.sqrt(),
                mass,
                psd_violation,
                dual_feasibility: dual,
                complementarity: comp,
                multiplier: Multiplier::Local(lambdas),
            })
        }
    }
}

/// Gradient of the step objective at `γ_prev + Δ` given `∇Ψ` there.
fn step_gradient(sys: &AssembledSystem, grad_psi: &[f64], delta: &[f64], inv2tau: f64) -> Vec<f64> {
    grad_psi
        .iter()
        .zip(sys.l_diag())
        .zip(delta)
        .map(|((g, l), d)| g + inv2tau * l * d)
        .collect()
}

fn require_equality(balance: &MassBalance) -> Result<()> {
    if balance.relation == BalanceRelation::Inequality {
        return Err(Error::InvalidInput(
            "the closed-form step requires an equality mass balance; use the numerical path".into(),
        ));
    }
    Ok(())
}

fn closed_form(sys: &AssembledSystem, grad: &[f64], balance: &MassBalance, inv2tau: f64) -> Result<(Vec<f64>, Multiplier)> {
    Ok(match balance.mode {
        BalanceMode::Global => {
            let (d, l) = analytic_increment_global(sys, grad, balance.gamma, inv2tau);
            (d, Multiplier::Global(l))
        }
        BalanceMode::Local => {
            let t = balance.local_targets(sys.n_elements())?;
            let (d, l) = analytic_increment_local(sys, grad, &t, inv2tau);
            (d, Multiplier::Local(l))
        }
    })
}

/// Closed-form step. `u_prev` is the displacement at `γ_prev` (used by the
/// perimeter gradient).
pub fn analytic_step(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    u_prev: &[f64],
    objective: Objective,
    balance: &MassBalance,
    config: &SolverConfig,
) -> Result<StepResult> {
    require_equality(balance)?;
    let inv2tau = config.inv2tau;
    let mut grad = objective.reduced_grad(sys, u_prev)?;
    let (mut delta, mut mult) = closed_form(sys, &grad, balance, inv2tau)?;
    let mut sweeps = 0;
    let mut converged = true;
    if config.gradient_linearization == GradientLinearization::FixedPoint && objective == Objective::Perimeter {
        converged = false;
        while sweeps < config.fixed_point_max_sweeps {
            sweeps += 1;
            let u = sys.solve_equilibrium(&add(gamma_prev, &delta));
            grad = objective.reduced_grad(sys, &u)?;
            let (d, m) = closed_form(sys, &grad, balance, inv2tau)?;
            let change = d.iter().zip(&delta).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            delta = d;
            mult = m;
            if change <= config.fixed_point_tolerance {
                converged = true;
                break;
            }
        }
    }
    finish(sys, gamma_prev, delta, Some(mult), objective, balance, inv2tau, false, converged, sweeps)
}

/// Closed-form step under a global balance with an explicit `∇Ψ`.
pub fn analytic_step_global(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    grad: &[f64],
    gamma: f64,
    inv2tau: f64,
    objective: Objective,
) -> Result<StepResult> {
    let balance = MassBalance::global(gamma)?;
    let (d, l) = analytic_increment_global(sys, grad, gamma, inv2tau);
    finish(sys, gamma_prev, d, Some(Multiplier::Global(l)), objective, &balance, inv2tau, false, true, 0)
}

/// Closed-form step under a local balance with an explicit `∇Ψ`.
pub fn analytic_step_local(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    grad: &[f64],
    balance: &MassBalance,
    inv2tau: f64,
    objective: Objective,
) -> Result<StepResult> {
    require_equality(balance)?;
    if balance.mode != BalanceMode::Local {
        return Err(Error::InvalidInput("analytic_step_local needs a local balance".into()));
    }
    let t = balance.local_targets(sys.n_elements())?;
    let (d, l) = analytic_increment_local(sys, grad, &t, inv2tau);
    finish(sys, gamma_prev, d, Some(Multiplier::Local(l)), objective, balance, inv2tau, false, true, 0)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    delta: Vec<f64>,
    closed_form_multiplier: Option<Multiplier>,
    objective: Objective,
    balance: &MassBalance,
    inv2tau: f64,
    numerical: bool,
    converged: bool,
    inner_iterations: usize,
) -> Result<StepResult> {
    let gamma = add(gamma_prev, &delta);
    let (psi, u) = objective.evaluate(sys, &gamma);
    let grad = objective.reduced_grad(sys, &u)?;
    let g = step_gradient(sys, &grad, &delta, inv2tau);
    let kkt = kkt_report(sys, &delta, &g, balance, numerical)?;
    let c = c_vector(&delta);
    let max_psd_violation = c.iter().copied().fold(0.0, f64::max);
    let psd_active = if numerical {
        let scale = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        delta
            .chunks_exact(3)
            .map(|g| lambda_min_2x2([g[0], g[1], g[2]]) <= 1e-9 * scale)
            .collect()
    } else {
        c.iter().map(|&v| v > 1e-10).collect()
    };
    // the certificate of the closed form is the problem it solves: PSD
    // violations are reported separately
    let mut kkt_full = kkt;
    if !numerical {
        kkt_full.psd_violation = 0.0;
    }
    let multiplier = closed_form_multiplier.unwrap_or_else(|| kkt_full.multiplier.clone());
    Ok(StepResult {
        gamma: GrowthField::from_vec(gamma)?,
        objective_value: psi + penalty(sys, &delta, inv2tau),
        psi_value: psi,
        delta,
        displacement: u,
        multiplier,
        kkt_residual: kkt_full.residual(),
        kkt: kkt_full,
        psd_active,
        max_psd_violation,
        converged,
        inner_iterations,
    })
}

/// Proximal projected-gradient solve of the full step problem, including
/// `c(Δ) ≤ 0`. `warm` is an initial increment (projected before use).
pub fn numerical_step(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    objective: Objective,
    balance: &MassBalance,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<StepResult> {
    let inv2tau = config.inv2tau;
    let n = sys.n_growth();
    let l = sys.l_diag();
    let s0 = 1.0 / inv2tau;
    let start = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut delta = project_feasible_increment(&start, balance, sys)?;

    let eval = |d: &[f64]| -> (f64, Vec<f64>) {
        let (psi, u) = objective.evaluate(sys, &add(gamma_prev, d));
        (psi + penalty(sys, d, inv2tau), u)
    };
    let (mut f, mut u) = eval(&delta);
    let mut converged = false;
    let mut iters = 0;
    while iters < config.max_inner_iterations {
        let grad = objective.reduced_grad(sys, &u)?;
        let g = step_gradient(sys, &grad, &delta, inv2tau);
        let mut s = s0;
        let mut accepted = None;
        let mut pg_norm = f64::INFINITY;
        for k in 0..60 {
            let trial: Vec<f64> = (0..n).map(|i| delta[i] - s * g[i] / l[i]).collect();
            let cand = project_feasible_increment(&trial, balance, sys)?;
            let step: Vec<f64> = cand.iter().zip(&delta).map(|(c, d)| c - d).collect();
            if k == 0 {
                pg_norm = sys.l_norm_sq(&step).sqrt() / s0;
                if pg_norm <= config.tolerance * (1.0 + f.abs()) {
                    converged = true;
                    break;
                }
            }
            let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            // a collapsed deformed edge makes Ψ undefined; treat as rejection
            if objective == Objective::Perimeter {
                let uc = sys.solve_equilibrium(&add(gamma_prev, &cand));
                if crate::objectives::zero_length_edge(sys.mesh(), &uc).is_some() {
                    s *= 0.5;
                    continue;
                }
            }
            let (fc, uc) = eval(&cand);
            if fc <= f + 1e-4 * slope {
                accepted = Some((cand, fc, uc));
                break;
            }
            if step.iter().all(|v| v.abs() <= f64::EPSILON * (1.0 + delta.iter().fold(0.0f64, |m, x| m.max(x.abs())))) {
                break;
            }
            s *= 0.5;
        }
        if converged {
            break;
        }
        iters += 1;
        match accepted {
            Some((c, fc, uc)) => {
                delta = c;
                f = fc;
                u = uc;
            }
            None => {
                // no decrease possible at machine precision: stationary to round-off
                converged = pg_norm <= 1e3 * config.tolerance * (1.0 + f.abs());
                break;
            }
        }
    }
    finish(sys, gamma_prev, delta, None, objective, balance, inv2tau, true, converged, iters)
}

/// Dispatches to the configured path.
pub fn solve_step(
    sys: &AssembledSystem,
    gamma_prev: &[f64],
    u_prev: &[f64],
    objective: Objective,
    balance: &MassBalance,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<StepResult> {
    match config.path {
        SolverPath::Analytic => analytic_step(sys, gamma_prev, u_prev, objective, balance, config),
        SolverPath::Numerical => numerical_step(sys, gamma_prev, objective, balance, config, warm),
    }
}
