//! Conjugates, the Moreau envelope of `φ = g*(−·)`, and checks of the
//! primal-dual identities.

use serde::Serialize;

use crate::densela::{dist, dot, norm, spd_solve, Cholesky};
use crate::error::{Error, Result};
use crate::lmo::{diameter_bounds, lipschitz_bound, LmoDescriptor};
use crate::model::{Bundle, QuadraticObjective};
use crate::subqp::DualSolution;

/// `M_{ρ,φ}(z) = inf_v φ(v) + ‖v − z‖²/(2ρ)` and its gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoreauEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub prox_point: Vec<f64>,
}

/// Evaluates the envelope at `z = w − ρx_c`.
///
/// In closed form `M(z) = sup_x −zᵀx − g(x) − ρ/2‖x‖²`, attained at
/// `(Q + ρI)x = −z − q`; then `∇M(z) = −x` and the prox point is `z + ρx`.
pub fn moreau_phi(objective: &QuadraticObjective, rho: f64, x_c: &[f64], w: &[f64]) -> Result<MoreauEval> {
    let n = objective.dim();
    if x_c.len() != n || w.len() != n {
        return Err(Error::Dimension("moreau_phi argument length".into()));
    }
    let z: Vec<f64> = w.iter().zip(x_c).map(|(wi, xi)| wi - rho * xi).collect();
    moreau_phi_at(objective, rho, &z)
}

/// Same as [`moreau_phi`] but takes `z` directly.
pub fn moreau_phi_at(objective: &QuadraticObjective, rho: f64, z: &[f64]) -> Result<MoreauEval> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    if z.len() != objective.dim() {
        return Err(Error::Dimension("moreau_phi argument length".into()));
    }
    let rhs: Vec<f64> = z.iter().zip(objective.linear()).map(|(zi, qi)| -zi - qi).collect();
    let x = spd_solve(&objective.q_mat().shifted(rho), &rhs)?;
    let value = -dot(z, &x) - objective.value(&x) - 0.5 * rho * dot(&x, &x);
    let prox_point = z.iter().zip(&x).map(|(zi, xi)| zi + rho * xi).collect();
    let grad = x.iter().map(|v| -v).collect();
    Ok(MoreauEval { value, grad, prox_point })
}

/// `∇g*(y) = Q⁻¹(y − q)`; needs `μ_g > 0`.
pub fn conjugate_grad(objective: &QuadraticObjective, y: &[f64]) -> Result<Vec<f64>> {
    if objective.mu_g() <= 0.0 {
        return Err(Error::NotStronglyConvex);
    }
    let rhs: Vec<f64> = y.iter().zip(objective.linear()).map(|(a, b)| a - b).collect();
    spd_solve(objective.q_mat(), &rhs)
}

/// `φ(u) = g*(−u) = ½(u + q)ᵀQ⁻¹(u + q) − r`; needs `μ_g > 0`.
pub fn phi_value(objective: &QuadraticObjective, u: &[f64]) -> Result<f64> {
    let neg: Vec<f64> = u.iter().map(|v| -v).collect();
    let x = conjugate_grad(objective, &neg)?;
    // x = −Q⁻¹(u + q)
    let uq: Vec<f64> = u.iter().zip(objective.linear()).map(|(a, b)| a + b).collect();
    Ok(-0.5 * dot(&uq, &x) - objective.constant())
}

/// `∇φ(w) = −∇g*(−w)`
pub fn phi_grad(objective: &QuadraticObjective, w: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = w.iter().map(|v| -v).collect();
    Ok(conjugate_grad(objective, &neg)?.iter().map(|v| -v).collect())
}

/// `|primal − (−(M(w − ρx_c) − β) + ρ/2‖x_c‖²)|` for a solved subproblem.
/// The primal side is re-evaluated from `x_next` and the bundle.
pub fn prox_dual_residual(
    objective: &QuadraticObjective,
    bundle: &Bundle,
    sol: &DualSolution,
    x_c: &[f64],
    rho: f64,
) -> Result<f64> {
    let y = &sol.x_next;
    let fk = bundle.model_value(y, 0.0)?.value;
    let primal = objective.value(y) + fk + 0.5 * rho * dist(y, x_c).powi(2);
    let m = moreau_phi(objective, rho, x_c, &sol.w)?;
    let dual = -(m.value - sol.beta) + 0.5 * rho * dot(x_c, x_c);
    Ok((primal - dual).abs())
}

/// Solves the centered subproblem and returns the prox-dual residual.
pub fn verify_prox_dual_identity(objective: &QuadraticObjective, bundle: &Bundle, x_c: &[f64], rho: f64) -> Result<f64> {
    let tol = 1e-12;
    let sol = crate::subqp::solve_bundle_subproblem(objective, bundle, Some((x_c, rho)), tol)?;
    prox_dual_residual(objective, bundle, &sol, x_c, rho)
}

/// Residual of the serious update read as a multiplier step:
/// `‖x_new − (x_prev + (prox_point − w)/ρ)‖`.
pub fn verify_serious_update_alm(x_prev: &[f64], x_new: &[f64], prox_point: &[f64], w: &[f64], rho: f64) -> Result<f64> {
    if x_prev == x_new {
        return Err(Error::Precondition("x_new equals x_prev; not a serious step".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    let r: Vec<f64> = (0..x_new.len()).map(|i| x_new[i] - (x_prev[i] + (prox_point[i] - w[i]) / rho)).collect();
    Ok(norm(&r))
}

/// `α = −½√(1/L² + 4/ρ²) + 1/(2L) + 1/ρ`
pub fn alpha_constant(l_g: f64, rho: f64) -> f64 {
    -0.5 * (1.0 / (l_g * l_g) + 4.0 / (rho * rho)).sqrt() + 0.5 / l_g + 1.0 / rho
}

/// `½(D_b + 24M_f²/μ + 6M_f t + 2L[(4M_f/μ + t)² + 1])⁻¹`
pub fn mu_bar(d_b: f64, m_f: f64, mu: f64, l_g: f64, t: f64) -> f64 {
    let s = d_b + 24.0 * m_f * m_f / mu + 6.0 * m_f * t + 2.0 * l_g * ((4.0 * m_f / mu + t).powi(2) + 1.0);
    0.5 / s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XStarSource {
    Reference,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_w")]
    pub d_w: f64,
    #[serde(rename = "D_b")]
    pub d_b: f64,
    pub diameters_exact: bool,
    #[serde(rename = "M_f")]
    pub m_f: f64,
    #[serde(rename = "L_g")]
    pub l_g: f64,
    pub mu_g: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub alpha: f64,
    /// Only defined when `μ_g > 0`.
    pub mu_bar_psi: Option<f64>,
    pub mu_bar_psi_rho: f64,
    pub serious_bound: f64,
    pub null_bound_log_arg: f64,
    pub gamma: &'static str,
    pub x_star_source: XStarSource,
}

/// Closed-form rate constants. Without `x_star` the point `x0` stands in
/// and the report says so.
pub fn constants_report(
    lmo: &LmoDescriptor,
    objective: &QuadraticObjective,
    rho: f64,
    epsilon: f64,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> ConstantsReport {
    let db = diameter_bounds(lmo);
    let m_f = lipschitz_bound(lmo);
    let (l_g, mu_g) = (objective.l_g(), objective.mu_g());
    let (xs, src) = match x_star {
        Some(x) => (x, XStarSource::Reference),
        None => (x0, XStarSource::Estimate),
    };
    let xs_norm = norm(xs);
    let r0 = dist(xs, x0);
    let t = xs_norm + 2.0 * (1.0 + rho * rho).sqrt() * r0 + 2.0 * (rho * epsilon).sqrt();
    ConstantsReport {
        d: db.d,
        d_w: db.d_w,
        d_b: db.d_b,
        diameters_exact: db.exact,
        m_f,
        l_g,
        mu_g,
        rho,
        epsilon,
        alpha: alpha_constant(l_g, rho),
        mu_bar_psi: (mu_g > 0.0).then(|| mu_bar(db.d_b, m_f, mu_g, l_g, xs_norm)),
        mu_bar_psi_rho: mu_bar(db.d_b, m_f, rho, l_g, t),
        serious_bound: rho * r0 * r0 / epsilon + 1.0,
        null_bound_log_arg: 4.0 * db.d.powi(4) / (epsilon * epsilon * rho * rho),
        gamma: "unknown",
        x_star_source: src,
    }
}

/// Smallest eigenvalue of `(1/L)diag(I, 0) + (1/ρ)[[I, −I], [−I, I]]` in
/// dimension `2n`, by Jacobi.
pub fn alpha_by_eigen(l_g: f64, rho: f64, n: usize) -> Result<f64> {
    let m = 2 * n;
    let mut a = vec![0.0; m * m];
    for i in 0..n {
        a[i * m + i] = 1.0 / l_g + 1.0 / rho;
        a[(n + i) * m + n + i] = 1.0 / rho;
        a[i * m + n + i] = -1.0 / rho;
        a[(n + i) * m + i] = -1.0 / rho;
    }
    let h = crate::densela::SymMatrix::from_row_major(m, a)?;
    Ok(crate::densela::eig_extremes(&h)?.lambda_min)
}

/// Recomputes `y` from the dual side: `y = −∇M(w − ρx_c)`, returning
/// `‖y − x_next‖`.
pub fn moreau_correspondence(objective: &QuadraticObjective, sol: &DualSolution, x_c: &[f64], rho: f64) -> Result<f64> {
    let m = moreau_phi(objective, rho, x_c, &sol.w)?;
    Ok(sol.x_next.iter().zip(&m.grad).map(|(y, g)| (y + g).powi(2)).sum::<f64>().sqrt())
}

/// FW gap of `Ψ(w, β) = M(w − ρx_c) − β` over `conv(V)` at the current
/// `(w, β)`, with the FW vertex `(v̂, b̂)`: `⟨∇M, w − v̂⟩ − β + b̂`.
pub fn psi_fw_gap(objective: &QuadraticObjective, sol: &DualSolution, x_c: &[f64], rho: f64, fw: &crate::model::Affine) -> Result<f64> {
    let m = moreau_phi(objective, rho, x_c, &sol.w)?;
    let diff: Vec<f64> = sol.w.iter().zip(&fw.v).map(|(a, b)| a - b).collect();
    Ok(dot(&m.grad, &diff) - sol.beta + fw.b)
}

/// `‖w + ∇ĝ(y)‖` with `∇ĝ(y) = Qy + q + ρ(y − x_c)`.
pub fn gradient_link(objective: &QuadraticObjective, sol: &DualSolution, x_c: Option<&[f64]>, rho: f64) -> f64 {
    let mut g = objective.grad(&sol.x_next);
    if let Some(xc) = x_c {
        for i in 0..g.len() {
            g[i] += rho * (sol.x_next[i] - xc[i]);
        }
    }
    g.iter().zip(&sol.w).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt()
}

/// Cholesky of `Q` when `μ_g > 0`; used to map FCFW duals back to primal.
pub(crate) fn q_factor(objective: &QuadraticObjective) -> Result<Cholesky> {
    if objective.mu_g() <= 0.0 {
        return Err(Error::KelleyNeedsStrongConvexity);
    }
    Cholesky::factor(objective.q_mat()).map_err(|_| Error::KelleyNeedsStrongConvexity)
}
