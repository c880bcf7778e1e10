//! Mass balance and accretion constraints on growth increments, and exact
//! projections onto their intersection in the penalty metric `L`.
//!
//! Per element the metric is `2|T_e| diag(1, 1, w)` with `w` the shear
//! weight. In the rotated coordinates `p = (g1+g2)/√2`, `q = (g1-g2)/√2`,
//! `r = g3/√2` the PSD set is the second-order cone `p ≥ |(q, r)|` and the
//! metric becomes `diag(1, 1, β)` with `β = 2w`, so projections reduce to
//! one scalar root per element.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::fem::{AssembledSystem, ShearWeight};

/// Per-element vectorized growth `(E11, E22, 2 E12)`, stored flat.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GrowthField(Vec<f64>);

impl GrowthField {
    pub fn zeros(n_elements: usize) -> Self {
        Self(vec![0.0; 3 * n_elements])
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "growth vector length {} is not a multiple of 3",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("growth entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn n_elements(&self) -> usize {
        self.0.len() / 3
    }

    pub fn element(&self, e: usize) -> [f64; 3] {
        [self.0[3 * e], self.0[3 * e + 1], self.0[3 * e + 2]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for GrowthField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Smallest eigenvalue of `[[g1, g3/2], [g3/2, g2]]`.
pub fn lambda_min_2x2(g: [f64; 3]) -> f64 {
    let m = 0.5 * (g[0] + g[1]);
    m - (0.5 * (g[0] - g[1])).hypot(0.5 * g[2])
}

/// `c(Δγ)`: minus the smallest eigenvalue of each element increment.
pub fn c_vector(delta: &[f64]) -> Vec<f64> {
    delta
        .chunks_exact(3)
        .map(|g| -lambda_min_2x2([g[0], g[1], g[2]]))
        .collect()
}

/// Largest positive entry of `c(Δγ)`, zero if all elements are PSD.
pub fn max_psd_violation(delta: &[f64]) -> f64 {
    c_vector(delta).into_iter().fold(0.0, f64::max)
}

/// Frobenius projection onto the PSD cone by clamping the negative eigenvalue.
pub fn project_psd(g: [f64; 3]) -> [f64; 3] {
    let m = 0.5 * (g[0] + g[1]);
    let h = 0.5 * (g[0] - g[1]);
    let rad = h.hypot(0.5 * g[2]);
    if m - rad >= 0.0 {
        return g;
    }
    let l1 = m + rad;
    if l1 <= 0.0 {
        return [0.0; 3];
    }
    // rank-one l1 v vᵀ with v the top eigenvector
    [
        0.5 * l1 * (1.0 + h / rad),
        0.5 * l1 * (1.0 - h / rad),
        l1 * g[2] / (2.0 * rad),
    ]
}

/// `β` of the rotated-coordinate metric for a shear weight.
pub fn cone_beta(weight: ShearWeight) -> f64 {
    2.0 * weight.factor()
}

fn to_pqr(g: [f64; 3]) -> [f64; 3] {
    [(g[0] + g[1]) / SQRT_2, (g[0] - g[1]) / SQRT_2, g[2] / SQRT_2]
}

fn from_pqr(x: [f64; 3]) -> [f64; 3] {
    [(x[0] + x[1]) / SQRT_2, (x[0] - x[1]) / SQRT_2, x[2] * SQRT_2]
}

/// Solves `(Σ_i x_i(t)^-2)^(-1/2) = target` for `t ≥ t0`, where each
/// `x_i(t) = (a_i + b_i t) / c_i` is affine increasing and nonnegative on
/// the range. The left side is a power mean with exponent −2 of affine
/// functions, hence concave, so Newton started left of the root increases
/// monotonically onto it.
fn power_mean_root(terms: &[(f64, f64, f64)], target: f64, t0: f64) -> f64 {
    debug_assert!(!terms.is_empty() && terms.len() <= 2);
    let n = terms.len();
    let eval = |t: f64| -> (f64, f64) {
        let mut xs = [0.0; 2];
        for (x, &(a, b, c)) in xs.iter_mut().zip(terms) {
            *x = ((a + b * t) / c).max(0.0);
        }
        let m = xs[..n].iter().copied().fold(f64::INFINITY, f64::min);
        let mut ratios = [0.0; 2];
        for (r, &x) in ratios.iter_mut().zip(&xs[..n]) {
            *r = if x == m { 1.0 } else { m / x };
        }
        let s = ratios[..n].iter().map(|r| r * r).sum::<f64>().sqrt();
        let d = terms
            .iter()
            .zip(&ratios)
            .map(|(&(_, b, c), r)| (r / s).powi(3) * b / c)
            .sum::<f64>();
        (m / s, d)
    };
    let mut t = t0;
    for _ in 0..100 {
        let (f, d) = eval(t);
        if f >= target || d <= 0.0 {
            break;
        }
        let step = (target - f) / d;
        if step <= 4.0 * f64::EPSILON * t.abs() {
            break;
        }
        t += step;
    }
    t
}

/// Projection onto the PSD cone in the element metric `diag(1, 1, β/2)` on
/// `(g1, g2, g3)`; `β = 1` is [`project_psd`].
pub fn project_psd_weighted(g: [f64; 3], beta: f64) -> [f64; 3] {
    if lambda_min_2x2(g) >= 0.0 {
        return g;
    }
    let [p0, q0, r0] = to_pqr(g);
    let qq = q0 * q0;
    let rr = beta * beta * r0 * r0;
    if p0 <= 0.0 && qq + rr <= p0 * p0 {
        return [0.0; 3];
    }
    // KKT: p = p0 + ν, q = q0 p/(p + ν), r = β r0 p/(β p + ν), with ν the
    // root of q0²/(p0 + 2ν)² + β² r0²/(β p0 + (β + 1)ν)² = 1
    let mut terms = Vec::with_capacity(2);
    if q0 != 0.0 {
        terms.push((p0, 2.0, q0.abs()));
    }
    if r0 != 0.0 {
        terms.push((beta * p0, beta + 1.0, beta * r0.abs()));
    }
    let nu = power_mean_root(&terms, 1.0, (-p0).max(0.0));
    let p = p0 + nu;
    if p <= 0.0 {
        return [0.0; 3];
    }
    let q = q0 * p / (p + nu);
    let r = beta * r0 * p / (beta * p + nu);
    from_pqr([p, q, r])
}

/// Projection onto `{trace = t} ∩ PSD` in the element metric. `t < 0` is
/// infeasible.
pub fn project_trace_psd(g: [f64; 3], t: f64, beta: f64) -> Result<[f64; 3]> {
    if t < 0.0 {
        return Err(Error::Infeasible(format!(
            "element trace target {t} is negative; no PSD increment has it"
        )));
    }
    if t == 0.0 {
        return Ok([0.0; 3]);
    }
    let [_, q0, r0] = to_pqr(g);
    let p = t / SQRT_2;
    if q0 * q0 + r0 * r0 <= p * p {
        return Ok(from_pqr([p, q0, r0]));
    }
    // q = q0/(1 + μ), r = β r0/(β + μ) with q² + r² = p²
    let mut terms = Vec::with_capacity(2);
    if q0 != 0.0 {
        terms.push((1.0, 1.0, q0.abs()));
    }
    if r0 != 0.0 {
        terms.push((beta, 1.0, beta * r0.abs()));
    }
    let mu = power_mean_root(&terms, 1.0 / p, 0.0);
    let mut q = q0 / (1.0 + mu);
    let mut r = beta * r0 / (beta + mu);
    // land exactly on the cone surface
    let n = q.hypot(r);
    if n > p {
        q *= p / n;
        r *= p / n;
    }
    Ok(from_pqr([p, q, r]))
}

/// Global (one scalar) or local (per element) mass balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceMode {
    #[default]
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceRelation {
    #[default]
    Equality,
    Inequality,
}

/// Mass balance for one step. Global: `a·Δγ (=|≤) Γ|Ω|`. Local:
/// `(AΔγ)_e (=|≤) Γ_e`, with `Γ_e = Γ` unless a field is given.
#[derive(Debug, Clone, PartialEq)]
pub struct MassBalance {
    pub mode: BalanceMode,
    pub relation: BalanceRelation,
    pub gamma: f64,
    pub local_field: Option<Vec<f64>>,
}

impl MassBalance {
    pub fn new(mode: BalanceMode, relation: BalanceRelation, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidInput("Γ must be finite".into()));
        }
        if gamma < 0.0 && relation == BalanceRelation::Equality {
            return Err(Error::Infeasible(format!(
                "Γ = {gamma} < 0 with equality balance: resorption is not supported"
            )));
        }
        Ok(Self {
            mode,
            relation,
            gamma,
            local_field: None,
        })
    }

    pub fn global(gamma: f64) -> Result<Self> {
        Self::new(BalanceMode::Global, BalanceRelation::Equality, gamma)
    }

    pub fn local(gamma: f64) -> Result<Self> {
        Self::new(BalanceMode::Local, BalanceRelation::Equality, gamma)
    }

    /// Local mode with an explicit per-element field.
    pub fn with_local_field(mut self, field: Vec<f64>) -> Result<Self> {
        if field.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("local Γ field has non-finite entries".into()));
        }
        if self.relation == BalanceRelation::Equality && field.iter().any(|&v| v < 0.0) {
            return Err(Error::Infeasible("negative local Γ with equality balance".into()));
        }
        self.mode = BalanceMode::Local;
        self.local_field = Some(field);
        Ok(self)
    }

    /// Total mass target `Γ|Ω|` (global mode).
    pub fn global_target(&self, sys: &AssembledSystem) -> f64 {
        self.gamma * sys.domain_area()
    }

    /// Per-element trace targets (local mode).
    pub fn local_targets(&self, n_elements: usize) -> Result<Vec<f64>> {
        match &self.local_field {
            Some(f) if f.len() != n_elements => Err(Error::InvalidInput(format!(
                "local Γ field has {} entries, mesh has {n_elements} elements",
                f.len()
            ))),
            Some(f) => Ok(f.clone()),
            None => Ok(vec![self.gamma; n_elements]),
        }
    }

    /// Largest mass-balance violation of an increment (absolute).
    pub fn residual(&self, delta: &[f64], sys: &AssembledSystem) -> Result<f64> {
        let ineq = self.relation == BalanceRelation::Inequality;
        let viol = |value: f64, target: f64| {
            if ineq {
                (value - target).max(0.0)
            } else {
                (value - target).abs()
            }
        };
        Ok(match self.mode {
            BalanceMode::Global => viol(sys.total_trace(delta), self.global_target(sys)),
            BalanceMode::Local => {
                let targets = self.local_targets(sys.n_elements())?;
                sys.apply_trace(delta)
                    .iter()
                    .zip(&targets)
                    .map(|(&v, &t)| viol(v, t))
                    .fold(0.0, f64::max)
            }
        })
    }
}

fn project_cone_all(z: &[f64], beta: f64) -> Vec<f64> {
    z.chunks_exact(3)
        .flat_map(|g| project_psd_weighted([g[0], g[1], g[2]], beta))
        .collect()
}

/// Projection of an increment onto `{mass balance} ∩ {elementwise PSD}` in
/// the `L` inner product.
///
/// Local modes decouple per element. The global equality case is solved
/// through its one-dimensional dual: for a multiplier `λ` each element is
/// `Proj_cone(z_e − λ(½, ½, 0))`, and `a·Δ(λ)` is nonincreasing in `λ`.
pub fn project_feasible_increment(
    delta: &[f64],
    balance: &MassBalance,
    sys: &AssembledSystem,
) -> Result<Vec<f64>> {
    if delta.len() != sys.n_growth() {
        return Err(Error::InvalidInput("increment length does not match the mesh".into()));
    }
    let beta = cone_beta(sys.shear_weight());
    match balance.mode {
        BalanceMode::Local => {
            let targets = balance.local_targets(sys.n_elements())?;
            let mut out = Vec::with_capacity(delta.len());
            for (g, &t) in delta.chunks_exact(3).zip(&targets) {
                let g = [g[0], g[1], g[2]];
                let x = match balance.relation {
                    BalanceRelation::Equality => project_trace_psd(g, t, beta)?,
                    BalanceRelation::Inequality => {
                        let c = project_psd_weighted(g, beta);
                        if c[0] + c[1] <= t {
                            c
                        } else {
                            project_trace_psd(g, t, beta)?
                        }
                    }
                };
                out.extend_from_slice(&x);
            }
            Ok(out)
        }
        BalanceMode::Global => {
            let target = balance.global_target(sys);
            if balance.relation == BalanceRelation::Inequality {
                let c = project_cone_all(delta, beta);
                if sys.total_trace(&c) <= target {
                    return Ok(c);
                }
            }
            project_global_equality(delta, target, sys, beta)
        }
    }
}

fn project_global_equality(z: &[f64], target: f64, sys: &AssembledSystem, beta: f64) -> Result<Vec<f64>> {
    if target < 0.0 {
        return Err(Error::Infeasible(format!(
            "total mass target {target} is negative; no PSD increment has it"
        )));
    }
    let a = sys.trace_weights();
    let l = sys.l_diag();
    // hyperplane projection: z − λ L⁻¹a with λ = (a·z − target)/(a·L⁻¹a)
    let a_linv_a: f64 = a.iter().zip(l).map(|(a, l)| a * a / l).sum();
    let lam0 = (sys.total_trace(z) - target) / a_linv_a;
    let shifted = |lam: f64| -> Vec<f64> {
        z.chunks_exact(3)
            .flat_map(|g| [g[0] - 0.5 * lam, g[1] - 0.5 * lam, g[2]])
            .collect()
    };
    let hyper = shifted(lam0);
    if hyper.chunks_exact(3).all(|g| lambda_min_2x2([g[0], g[1], g[2]]) >= 0.0) {
        return Ok(hyper);
    }
    let eval = |lam: f64| -> (Vec<f64>, f64) {
        let x = project_cone_all(&shifted(lam), beta);
        let m = sys.total_trace(&x);
        (x, m)
    };
    let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())) + target / sys.domain_area();
    let tol = 1e-14 * (target.abs() + sys.domain_area() * scale);

    // bracket: φ(lo) ≥ target ≥ φ(hi)
    let mut lo = lam0.min(0.0) - scale;
    let mut hi = lam0.max(0.0) + scale;
    let (mut x_lo, mut f_lo) = eval(lo);
    let mut k = 0;
    while f_lo < target {
        lo -= scale * 2f64.powi(k);
        (x_lo, f_lo) = eval(lo);
        k += 1;
        if k > 200 {
            return Err(Error::Projection("could not bracket the mass multiplier".into()));
        }
    }
    let (mut x_hi, mut f_hi) = eval(hi);
    k = 0;
    while f_hi > target {
        hi += scale * 2f64.powi(k);
        (x_hi, f_hi) = eval(hi);
        k += 1;
        if k > 200 {
            return Err(Error::Projection("could not bracket the mass multiplier".into()));
        }
    }
    if (f_lo - target).abs() <= tol {
        return Ok(x_lo);
    }
    if (f_hi - target).abs() <= tol {
        return Ok(x_hi);
    }
    // Illinois regula falsi on the monotone piecewise-smooth φ
    let mut side = 0i8;
    for _ in 0..500 {
        let (glo, ghi) = (f_lo - target, f_hi - target);
        let mut m = (lo * ghi - hi * glo) / (ghi - glo);
        if !(m > lo && m < hi) {
            m = 0.5 * (lo + hi);
        }
        let (x, fm) = eval(m);
        let g = fm - target;
        if g.abs() <= tol || (hi - lo) <= 4.0 * f64::EPSILON * (lo.abs() + hi.abs()) {
            return Ok(x);
        }
        if g > 0.0 {
            lo = m;
            f_lo = fm;
            if side == 1 {
                f_hi = target + 0.5 * (f_hi - target);
            }
            side = 1;
        } else {
            hi = m;
            f_hi = fm;
            if side == -1 {
                f_lo = target + 0.5 * (f_lo - target);
            }
            side = -1;
        }
    }
    Err(Error::Projection("mass multiplier iteration did not converge".into()))
}
