//! Kelley's cutting-plane method, fully corrective Frank-Wolfe on the dual,
//! and a check that the two produce matching iterates.

use std::time::Instant;

use serde::Serialize;

use crate::densela::{dist, dot, Cholesky};
use crate::duality::q_factor;
use crate::error::{Error, Result};
use crate::lmo::{lmo_max, LmoDescriptor};
use crate::model::{
    default_inner_tol, evaluate_h, Affine, Bundle, CutId, DualityResiduals, IterationRecord, ProblemInstance,
    QuadraticObjective, StepType,
};
use crate::subqp::SubproblemSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KelleyStop {
    GapCriterion,
    /// The LMO returned a cut already in the bundle.
    RepeatedCut,
    MaxIter,
}

#[derive(Debug, Clone, Serialize)]
pub struct KelleyResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub terminated_by: KelleyStop,
    /// `x_{k+1}` per iteration.
    pub iterates: Vec<Vec<f64>>,
    /// Id of the LMO cut at each iteration (existing id if it was a repeat).
    pub added_ids: Vec<CutId>,
    /// `h_k(x_{k+1}) = g(x_{k+1}) + f_k(x_{k+1})` per iteration.
    pub lower_bounds: Vec<f64>,
}

/// The single LMO cut at `x0`.
pub fn initial_bundle(instance: &ProblemInstance) -> Result<Bundle> {
    let mut b = Bundle::new(instance.dim());
    b.insert(lmo_max(&instance.lmo, &instance.x0)?)?;
    Ok(b)
}

pub fn run_kelley(instance: &ProblemInstance, epsilon: f64, v0: Bundle, max_iter: usize) -> Result<KelleyResult> {
    let obj = &instance.objective;
    if obj.mu_g() <= 0.0 {
        return Err(Error::KelleyNeedsStrongConvexity);
    }
    if v0.is_empty() {
        return Err(Error::EmptyModel);
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let qf = q_factor(obj)?;
    let mut solver = SubproblemSolver::new(obj, 0.0).map_err(|_| Error::KelleyNeedsStrongConvexity)?;
    let tol = default_inner_tol(epsilon);
    let mut bundle = v0;
    let mut x_prev = instance.x0.clone();
    let mut out = KelleyResult {
        x: x_prev.clone(),
        value: f64::NAN,
        iterations: 0,
        trace: Vec::new(),
        terminated_by: KelleyStop::MaxIter,
        iterates: Vec::new(),
        added_ids: Vec::new(),
        lower_bounds: Vec::new(),
    };
    for iter in 1..=max_iter {
        let t0 = Instant::now();
        let sol = solver.solve(&bundle, None, tol).map_err(|e| e.at(iter))?;
        let x = sol.x_next.clone();
        let fk = sol.model_value;
        let cut = lmo_max(&instance.lmo, &x).map_err(|e| e.at(iter))?;
        let fx = cut.value(&x);
        let gap = fx - fk;
        let fw_gap = dual_fw_gap(&qf, obj, &sol.w, sol.beta, &cut);
        let residuals = DualityResiduals {
            gradient_link: crate::duality::gradient_link(obj, &sol, None, 0.0),
            strong_duality: (sol.primal_value - sol.dual_value).abs() / (1.0 + sol.primal_value.abs()),
            lower_model: (fk - sol.lower_value()).abs(),
            ..Default::default()
        };
        let pre = bundle.len();
        let ins = bundle.insert(cut).map_err(|e| e.at(iter))?;
        let stop = if gap <= epsilon {
            Some(KelleyStop::GapCriterion)
        } else if !ins.fresh {
            Some(KelleyStop::RepeatedCut)
        } else {
            None
        };
        out.trace.push(IterationRecord {
            iter,
            step_type: if stop.is_some() { StepType::Terminal } else { StepType::Null },
            model_gap: gap,
            obj_value: obj.value(&x) + fx,
            bundle_size_pre: pre,
            bundle_size_post: bundle.len(),
            prox_move: dist(&x, &x_prev),
            fw_gap_dual: Some(fw_gap),
            duality_residuals: Some(residuals),
            serious_count_so_far: None,
            certificate_bound: None,
            wall_time_ns: t0.elapsed().as_nanos() as u64,
        });
        out.iterates.push(x.clone());
        out.added_ids.push(ins.id);
        out.lower_bounds.push(obj.value(&x) + fk);
        out.iterations = iter;
        x_prev = x;
        if let Some(s) = stop {
            out.terminated_by = s;
            break;
        }
    }
    out.value = evaluate_h(instance, &x_prev)?;
    out.x = x_prev;
    Ok(out)
}

/// `⟨∇φ(w), w − v⟩ − β + b` with `∇φ(w) = −Q⁻¹(−w − q)`.
fn dual_fw_gap(qf: &Cholesky, obj: &QuadraticObjective, w: &[f64], beta: f64, fw: &Affine) -> f64 {
    let rhs: Vec<f64> = w.iter().zip(obj.linear()).map(|(wi, qi)| -wi - qi).collect();
    let x = qf.solve(&rhs);
    // ∇φ(w) = −x
    let diff: Vec<f64> = w.iter().zip(&fw.v).map(|(a, b)| a - b).collect();
    -dot(&x, &diff) - beta + fw.b
}

#[derive(Debug, Clone, Serialize)]
pub struct FcfwResult {
    pub w: Vec<f64>,
    pub beta: f64,
    /// `−∇φ(w)` at the final iterate.
    pub x: Vec<f64>,
    /// `φ(w) − β` at the final iterate.
    pub dual_objective: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub terminated_by: KelleyStop,
    /// `−∇φ(w_{k+1})` per iteration.
    pub primal_points: Vec<Vec<f64>>,
    pub added_ids: Vec<CutId>,
}

/// FCFW on `min φ(w) − β` over `conv(V)` with `φ = g*(−·)`. The fully
/// corrective step minimizes over the hull of the current vertex set.
pub fn run_fcfw(objective: &QuadraticObjective, vertices: &[Affine], epsilon: f64, v0: Bundle, max_iter: usize) -> Result<FcfwResult> {
    if objective.mu_g() <= 0.0 {
        return Err(Error::KelleyNeedsStrongConvexity);
    }
    if v0.is_empty() || vertices.is_empty() {
        return Err(Error::EmptyModel);
    }
    let qf = q_factor(objective)?;
    let mut solver = SubproblemSolver::new(objective, 0.0)?;
    let tol = default_inner_tol(epsilon);
    let mut active = v0;
    let mut out = FcfwResult {
        w: Vec::new(),
        beta: 0.0,
        x: Vec::new(),
        dual_objective: f64::NAN,
        iterations: 0,
        trace: Vec::new(),
        terminated_by: KelleyStop::MaxIter,
        primal_points: Vec::new(),
        added_ids: Vec::new(),
    };
    let mut x_prev: Option<Vec<f64>> = None;
    for iter in 1..=max_iter {
        let t0 = Instant::now();
        let sol = solver.solve(&active, None, tol).map_err(|e| e.at(iter))?;
        let (w, beta) = (sol.w, sol.beta);
        // −∇φ(w) = ∇g*(−w) = Q⁻¹(−w − q)
        let rhs: Vec<f64> = w.iter().zip(objective.linear()).map(|(wi, qi)| -wi - qi).collect();
        let x = qf.solve(&rhs);
        // FW vertex: argmin ⟨∇φ(w), v⟩ − b = argmax ⟨x, v⟩ + b; first wins ties
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, p) in vertices.iter().enumerate() {
            let val = dot(&x, &p.v) + p.b;
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        let fw = vertices[best].clone();
        let gap = dual_fw_gap(&qf, objective, &w, beta, &fw);
        // φ(w) = ½(w + q)ᵀQ⁻¹(w + q) − r
        let dual_obj = 0.5 * dot(&rhs, &x) - objective.constant() - beta;
        let pre = active.len();
        let ins = active.insert(fw)?;
        let stop = if gap <= epsilon {
            Some(KelleyStop::GapCriterion)
        } else if !ins.fresh {
            Some(KelleyStop::RepeatedCut)
        } else {
            None
        };
        out.trace.push(IterationRecord {
            iter,
            step_type: if stop.is_some() { StepType::Terminal } else { StepType::Null },
            model_gap: gap,
            obj_value: dual_obj,
            bundle_size_pre: pre,
            bundle_size_post: active.len(),
            prox_move: x_prev.as_ref().map_or(0.0, |p| dist(p, &x)),
            fw_gap_dual: Some(gap),
            duality_residuals: None,
            serious_count_so_far: None,
            certificate_bound: None,
            wall_time_ns: t0.elapsed().as_nanos() as u64,
        });
        out.primal_points.push(x.clone());
        out.added_ids.push(ins.id);
        out.iterations = iter;
        out.w = w;
        out.beta = beta;
        out.dual_objective = dual_obj;
        out.x = x.clone();
        x_prev = Some(x);
        if let Some(s) = stop {
            out.terminated_by = s;
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub iterations_compared: usize,
    pub max_x_residual: f64,
    /// Number of iterations whose added cut ids differ, plus the length
    /// difference of the two id sequences.
    pub max_cut_id_mismatch: usize,
    pub kelley_iterations: usize,
    pub fcfw_iterations: usize,
}

/// Runs both drivers from the same `V0` and compares `x_{k+1}` with
/// `∇g*(−w_{k+1})` and the added cut ids.
pub fn verify_kelley_fcfw_equivalence(instance: &ProblemInstance, v0: Bundle, iters: usize) -> Result<EquivalenceReport> {
    let LmoDescriptor::Explicit { cuts } = &instance.lmo else {
        return Err(Error::Precondition("Kelley/FCFW equivalence needs an explicit LMO".into()));
    };
    // ε tiny so both run the full `iters` unless they hit optimality
    let eps = 1e-12;
    let k = run_kelley(instance, eps, v0.clone(), iters)?;
    let f = run_fcfw(&instance.objective, cuts, eps, v0, iters)?;
    let common = k.iterations.min(f.iterations);
    let mut max_x = 0.0f64;
    let mut mismatch = 0;
    for i in 0..common {
        max_x = max_x.max(dist(&k.iterates[i], &f.primal_points[i]));
        if k.added_ids[i] != f.added_ids[i] {
            mismatch += 1;
        }
    }
    mismatch += k.iterations.abs_diff(f.iterations);
    Ok(EquivalenceReport {
        iterations_compared: common,
        max_x_residual: max_x,
        max_cut_id_mismatch: mismatch,
        kelley_iterations: k.iterations,
        fcfw_iterations: f.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::SymMatrix;
    use crate::subqp::solve_bundle_subproblem;
    use proptest::prelude::*;

    fn uniform(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    /// g = ½(x − 3)², f = |x|
    fn shifted_abs() -> ProblemInstance {
        let obj = QuadraticObjective::new(SymMatrix::identity(1), vec![-3.0], 4.5).unwrap();
        let lmo = LmoDescriptor::explicit(vec![Affine::new(vec![1.0], 0.0), Affine::new(vec![-1.0], 0.0)]);
        ProblemInstance::new(obj, lmo, vec![0.0]).unwrap()
    }

    fn random_instance(seed: u64, n: usize, m: usize) -> ProblemInstance {
        let mut s = seed;
        let diag: Vec<f64> = (0..n).map(|_| 1.0 + (uniform(&mut s) + 1.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| uniform(&mut s)).collect();
        let obj = QuadraticObjective::new(SymMatrix::from_diag(&diag), q, 0.0).unwrap();
        let cuts = (0..m).map(|_| Affine::new((0..n).map(|_| uniform(&mut s)).collect(), uniform(&mut s))).collect();
        ProblemInstance::new(obj, LmoDescriptor::explicit(cuts), vec![0.0; n]).unwrap()
    }

    fn exact_optimum(inst: &ProblemInstance) -> f64 {
        let LmoDescriptor::Explicit { cuts } = &inst.lmo else { unreachable!() };
        let b = Bundle::from_affines(inst.dim(), cuts.clone()).unwrap();
        solve_bundle_subproblem(&inst.objective, &b, None, 1e-13).unwrap().primal_value
    }

    #[test]
    fn hand_example() {
        let inst = shifted_abs();
        let v0 = Bundle::from_affines(1, [Affine::new(vec![1.0], 0.0)]).unwrap();
        let r = run_kelley(&inst, 1e-6, v0, 50).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.x[0] - 2.0).abs() < 1e-12);
        assert_eq!(r.terminated_by, KelleyStop::GapCriterion);
        assert!((r.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn full_v0_stops_at_once() {
        let inst = random_instance(3, 4, 12);
        let LmoDescriptor::Explicit { cuts } = &inst.lmo else { unreachable!() };
        let v0 = Bundle::from_affines(4, cuts.clone()).unwrap();
        let r = run_kelley(&inst, 1e-9, v0.clone(), 50).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.trace[0].model_gap.abs() < 1e-10);
        let f = run_fcfw(&inst.objective, cuts, 1e-9, v0, 50).unwrap();
        assert_eq!(f.iterations, 1);
        assert!(f.trace[0].model_gap.abs() < 1e-10);
    }

    #[test]
    fn needs_strong_convexity() {
        let obj = QuadraticObjective::new(SymMatrix::from_diag(&[1.0, 0.0]), vec![0.0; 2], 0.0).unwrap();
        let lmo = LmoDescriptor::explicit(vec![Affine::new(vec![1.0, 1.0], 0.0)]);
        let inst = ProblemInstance::new(obj, lmo, vec![0.0; 2]).unwrap();
        let v0 = initial_bundle(&inst).unwrap();
        assert_eq!(run_kelley(&inst, 1e-6, v0, 5).unwrap_err().to_string(), "Kelley requires strong convexity");
    }

    #[test]
    fn random_reaches_reference() {
        for seed in 0..5 {
            let inst = random_instance(seed, 8, 25);
            let hstar = exact_optimum(&inst);
            let eps = 1e-6;
            let r = run_kelley(&inst, eps, initial_bundle(&inst).unwrap(), 500).unwrap();
            assert_ne!(r.terminated_by, KelleyStop::MaxIter);
            assert!(r.value - hstar <= eps + 1e-9, "seed {seed}");
            assert!(r.value - hstar >= -1e-9);
            // lower bounds grow
            for w in r.lower_bounds.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }

    #[test]
    fn fcfw_dual_example_and_strong_duality() {
        let inst = shifted_abs();
        let LmoDescriptor::Explicit { cuts } = &inst.lmo else { unreachable!() };
        let v0 = Bundle::from_affines(1, [Affine::new(vec![1.0], 0.0)]).unwrap();
        let f = run_fcfw(&inst.objective, cuts, 1e-9, v0, 10).unwrap();
        assert!((f.w[0] - 1.0).abs() < 1e-12);
        assert!((f.x[0] - 2.0).abs() < 1e-12);
        assert!((f.dual_objective + 2.5).abs() < 1e-12);
        for seed in 0..5 {
            let inst = random_instance(seed + 10, 5, 20);
            let LmoDescriptor::Explicit { cuts } = &inst.lmo else { unreachable!() };
            let f = run_fcfw(&inst.objective, cuts, 1e-10, initial_bundle(&inst).unwrap(), 500).unwrap();
            assert!((f.dual_objective + exact_optimum(&inst)).abs() < 1e-8);
        }
    }

    #[test]
    fn equivalence_on_examples() {
        let inst = shifted_abs();
        let r = verify_kelley_fcfw_equivalence(&inst, Bundle::from_affines(1, [Affine::new(vec![1.0], 0.0)]).unwrap(), 10).unwrap();
        assert_eq!(r.max_cut_id_mismatch, 0);
        assert!(r.max_x_residual < 1e-12);
        for seed in 0..20 {
            let inst = random_instance(seed + 100, 6, 30);
            let r = verify_kelley_fcfw_equivalence(&inst, initial_bundle(&inst).unwrap(), 15).unwrap();
            assert_eq!(r.max_cut_id_mismatch, 0, "seed {seed}");
            assert!(r.max_x_residual < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn linear_rate_stand_in(seed in 0u64..100_000, n in 2usize..=10, m in 5usize..=30) {
            let inst = random_instance(seed, n, m);
            let r = run_kelley(&inst, 1e-6, initial_bundle(&inst).unwrap(), 200).unwrap();
            prop_assert!(r.terminated_by != KelleyStop::MaxIter);
        }
    }
}
