//! Proximal bundle method with a fixed absolute null-step test, bundle
//! policies, the stopping certificate and bound monitors.

use std::time::Instant;

use serde::Serialize;

use crate::densela::{dist, norm};
use crate::duality::{
    gradient_link, moreau_correspondence, moreau_phi, prox_dual_residual, psi_fw_gap, verify_serious_update_alm,
    ConstantsReport,
};
use crate::error::{Error, Result};
use crate::kelley_fcfw::initial_bundle;
use crate::lmo::lmo_max;
use crate::model::{
    evaluate_h, Bundle, CutId, DualityResiduals, IterationRecord, PolicyKind, ProblemInstance, SolverConfig, StepType,
};
use crate::subqp::{DualSolution, SubproblemSolver};

pub const LIMIT_MOREAU: f64 = 1e-8;
pub const LIMIT_GAP_IDENTITY: f64 = 1e-7;
pub const LIMIT_PROX_DUAL: f64 = 1e-8;
pub const LIMIT_GRADIENT_LINK: f64 = 1e-8;
pub const LIMIT_STRONG_DUALITY: f64 = 1e-8;
pub const LIMIT_LOWER_MODEL: f64 = 1e-8;
pub const LIMIT_ALM: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub delta_term: f64,
    pub gradient_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MpbfaStop {
    Certificate,
    MaxIter,
}

#[derive(Debug, Clone, Serialize)]
pub struct MpbfaResult {
    pub best_serious_x: Vec<f64>,
    pub best_serious_value: f64,
    pub serious_count: usize,
    pub null_count: usize,
    pub longest_null_run: usize,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    /// Last certificate evaluated (after the last serious step).
    pub certificate: Option<Certificate>,
    pub terminated_by: MpbfaStop,
    pub policy: PolicyKind,
    /// `R` used by the certificate.
    pub radius_bound: f64,
    pub radius_is_heuristic: bool,
    pub final_center: Vec<f64>,
    pub max_bundle: usize,
}

impl MpbfaResult {
    pub fn converged(&self) -> bool {
        self.terminated_by == MpbfaStop::Certificate
    }
}

/// `bound = δ + ρ·prox_move·R`, stop iff `bound ≤ ε`.
pub fn stopping_certificate(prox_move: f64, rho: f64, delta: f64, epsilon: f64, radius_bound: f64) -> Result<(bool, Certificate)> {
    if !(radius_bound > 0.0) {
        return Err(Error::Config(format!("radius bound must be positive, got {radius_bound}")));
    }
    let gradient_term = rho * prox_move * radius_bound;
    let total = delta + gradient_term;
    Ok((total <= epsilon, Certificate { delta_term: delta, gradient_term, total }))
}

/// Prunes the bundle in place. `active_ids` are the cuts active at `y`
/// before `newest` was added; `newest` is always kept.
pub fn apply_policy(bundle: &mut Bundle, serious: bool, policy: PolicyKind, active_ids: &[CutId], newest: CutId) {
    let keep: Vec<CutId> = match (policy, serious) {
        (PolicyKind::AllCut, _) => return,
        (PolicyKind::SingleCut, true) => vec![newest],
        (PolicyKind::SingleCut, false) | (PolicyKind::ActiveCut, _) => {
            let mut k = active_ids.to_vec();
            k.push(newest);
            k
        }
    };
    bundle.retain_ids(&keep);
}

/// Test hooks: mutate each subproblem solution before it is used, and
/// choose whether identity violations abort the run.
pub struct Hooks<'a> {
    pub perturb: Option<&'a mut dyn FnMut(&mut DualSolution)>,
    pub enforce: bool,
}

impl Default for Hooks<'_> {
    fn default() -> Self {
        Hooks { perturb: None, enforce: true }
    }
}

pub fn run_mpbfa(instance: &ProblemInstance, config: &SolverConfig) -> Result<MpbfaResult> {
    run_mpbfa_with(instance, config, initial_bundle(instance)?, Hooks::default())
}

fn check(name: &str, residual: f64, limit: f64) -> Result<()> {
    if residual <= limit {
        Ok(())
    } else {
        Err(Error::IdentityViolation { name: name.into(), residual, limit })
    }
}

pub fn run_mpbfa_with(instance: &ProblemInstance, config: &SolverConfig, v0: Bundle, mut hooks: Hooks<'_>) -> Result<MpbfaResult> {
    config.validate()?;
    if v0.is_empty() {
        return Err(Error::EmptyModel);
    }
    let obj = &instance.objective;
    let rho = config.rho;
    let (radius, heuristic) = match config.radius_bound {
        Some(r) => (r, false),
        None => (2.0 * norm(&instance.x0) + 10.0, true),
    };
    let mut solver = SubproblemSolver::new(obj, rho)?;
    let mut bundle = v0;
    let mut center = instance.x0.clone();
    let mut best_x = instance.x0.clone();
    let mut best_val = f64::INFINITY;
    let (mut serious, mut null, mut run, mut longest) = (0usize, 0usize, 0usize, 0usize);
    let mut trace = Vec::new();
    let mut certificate = None;
    let mut stop = MpbfaStop::MaxIter;
    let mut max_bundle = bundle.len();

    for iter in 1..=config.max_iter {
        let t0 = Instant::now();
        let mut sol = solver.solve(&bundle, Some(&center), config.inner_tol).map_err(|e| e.at(iter))?;
        if let Some(p) = hooks.perturb.as_mut() {
            p(&mut sol);
        }
        let y = sol.x_next.clone();
        let mv = bundle.model_value(&y, config.active_tol).map_err(|e| e.at(iter))?;
        let cut = lmo_max(&instance.lmo, &y).map_err(|e| e.at(iter))?;
        let fy = cut.value(&y);
        let gap = fy - mv.value;
        let hy = obj.value(&y) + fy;
        let prox_move = dist(&y, &center);
        let is_serious = gap <= config.delta;

        let mut fw_gap_dual = None;
        let mut residuals = None;
        if config.diagnostics {
            let ctx = |e: Error| e.at(iter);
            let fw = psi_fw_gap(obj, &sol, &center, rho, &cut).map_err(ctx)?;
            let pd = prox_dual_residual(obj, &bundle, &sol, &center, rho).map_err(ctx)?;
            let mut r = DualityResiduals {
                moreau_correspondence: moreau_correspondence(obj, &sol, &center, rho).map_err(ctx)?,
                gap_identity: (gap - fw).abs(),
                prox_dual: pd / (1.0 + sol.primal_value.abs()),
                gradient_link: gradient_link(obj, &sol, Some(&center), rho),
                strong_duality: (sol.primal_value - sol.dual_value).abs() / (1.0 + sol.primal_value.abs()),
                lower_model: (mv.value - sol.lower_value()).abs(),
                alm: None,
            };
            if is_serious && y != center {
                let m = moreau_phi(obj, rho, &center, &sol.w).map_err(ctx)?;
                r.alm = Some(verify_serious_update_alm(&center, &y, &m.prox_point, &sol.w, rho).map_err(ctx)?);
            }
            if hooks.enforce {
                let ctx = |e: Error| e.at(iter);
                check("moreau_correspondence", r.moreau_correspondence, LIMIT_MOREAU).map_err(ctx)?;
                check("gap_identity", r.gap_identity, LIMIT_GAP_IDENTITY).map_err(ctx)?;
                check("prox_dual", r.prox_dual, LIMIT_PROX_DUAL).map_err(ctx)?;
                check("gradient_link", r.gradient_link, LIMIT_GRADIENT_LINK).map_err(ctx)?;
                check("strong_duality", r.strong_duality, LIMIT_STRONG_DUALITY).map_err(ctx)?;
                check("lower_model", r.lower_model, LIMIT_LOWER_MODEL).map_err(ctx)?;
                if let Some(a) = r.alm {
                    check("alm", a, LIMIT_ALM).map_err(ctx)?;
                }
            }
            fw_gap_dual = Some(fw);
            residuals = Some(r);
        }

        let mut cert_bound = None;
        let mut done = false;
        if is_serious {
            serious += 1;
            run = 0;
            center = y.clone();
            if hy < best_val {
                best_val = hy;
                best_x = y.clone();
            }
            let (s, c) = stopping_certificate(prox_move, rho, config.delta, config.epsilon, radius)?;
            cert_bound = Some(c.total);
            certificate = Some(c);
            done = s;
        } else {
            null += 1;
            run += 1;
            longest = longest.max(run);
        }

        let pre = bundle.len();
        let ins = bundle.insert(cut).map_err(|e| e.at(iter))?;
        apply_policy(&mut bundle, is_serious, config.policy, &mv.argmax_ids, ins.id);
        max_bundle = max_bundle.max(bundle.len()).max(pre + usize::from(ins.fresh));

        trace.push(IterationRecord {
            iter,
            step_type: if is_serious { StepType::Serious } else { StepType::Null },
            model_gap: gap,
            obj_value: hy,
            bundle_size_pre: pre,
            bundle_size_post: bundle.len(),
            prox_move,
            fw_gap_dual,
            duality_residuals: residuals,
            serious_count_so_far: Some(serious),
            certificate_bound: cert_bound,
            wall_time_ns: t0.elapsed().as_nanos() as u64,
        });
        if done {
            stop = MpbfaStop::Certificate;
            break;
        }
    }
    if !best_val.is_finite() {
        best_val = evaluate_h(instance, &instance.x0)?;
    }
    Ok(MpbfaResult {
        best_serious_x: best_x,
        best_serious_value: best_val,
        serious_count: serious,
        null_count: null,
        longest_null_run: longest,
        iterations: trace.len(),
        trace,
        certificate,
        terminated_by: stop,
        policy: config.policy,
        radius_bound: radius,
        radius_is_heuristic: heuristic,
        final_center: center,
        max_bundle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundMonitor {
    pub serious_ok: bool,
    /// Serious steps taken until the first serious iterate within `ε` of
    /// `h*`; `None` if that never happened (counts 0 when `x0` qualifies).
    pub observed_serious: Option<usize>,
    pub serious_bound: f64,
    pub longest_null_run: usize,
    pub null_bound_note: String,
}

/// Compares the run against `ρ‖x* − x0‖²/ε + 1`. The null-run bound needs
/// the pyramidal width and is only reported.
pub fn monitor_bounds(instance: &ProblemInstance, result: &MpbfaResult, constants: &ConstantsReport, h_star: f64) -> Result<BoundMonitor> {
    let eps = constants.epsilon;
    let observed = if evaluate_h(instance, &instance.x0)? - h_star <= eps {
        Some(0)
    } else {
        result
            .trace
            .iter()
            .find(|r| r.step_type == StepType::Serious && r.obj_value - h_star <= eps)
            .and_then(|r| r.serious_count_so_far)
    };
    Ok(BoundMonitor {
        serious_ok: observed.is_some_and(|o| (o as f64) <= constants.serious_bound),
        observed_serious: observed,
        serious_bound: constants.serious_bound,
        longest_null_run: result.longest_null_run,
        null_bound_note: format!(
            "null-run bound 1 + max(2, D²/(ρ γ² mu_bar)) log({:.6e}) not evaluated: pyramidal width unknown",
            constants.null_bound_log_arg
        ),
    })
}
