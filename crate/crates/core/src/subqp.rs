//! Bundle subproblem via its dual over the simplex.
//!
//! With `H = Q + ρI` and `c = q − ρx_c` the centered subproblem
//! `min g(x) + f_k(x) + ρ/2‖x − x_c‖²` has dual
//! `min_λ F(λ) = ½(Vλ + c)ᵀH⁻¹(Vλ + c) − bᵀλ` over the simplex, and the
//! primal point is `x = −H⁻¹(Vλ + c)`. Without a center `ρ = 0` and `H = Q`.
//!
//! The dual is solved by a minimum-norm-point style active-set method that
//! keeps the support affinely independent in `v`, so it never exceeds
//! `n + 1` cuts. If that stalls, away-step Frank-Wolfe takes over.

use std::collections::HashMap;

use serde::Serialize;

use crate::densela::{dot, Cholesky, SymMatrix};
use crate::error::{Error, Result};
use crate::lmo::{lmo_max, LmoDescriptor};
use crate::model::{Affine, Bundle, CutId, QuadraticObjective};

/// Weights at or below this are outside the reported support.
pub const SUPPORT_TOL: f64 = 1e-12;

const TOL_FLOOR: f64 = 1e-13;
const DEP_FLOOR: f64 = 1e-10;
const AFW_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    /// Bundle ids in bundle order.
    pub ids: Vec<CutId>,
    /// Simplex weights, aligned with `ids`.
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    pub beta: f64,
    pub x_next: Vec<f64>,
    /// `g(x) + f_k(x) (+ ρ/2‖x − x_c‖²)` at `x_next`
    pub primal_value: f64,
    /// `−ĝ*(−w) + β`
    pub dual_value: f64,
    pub support: Vec<CutId>,
    /// `f_k(x_next) − (wᵀx_next + β)`
    pub kkt_residual: f64,
    /// `f_k(x_next)`
    pub model_value: f64,
    pub major_iters: usize,
    pub used_fallback: bool,
}

impl DualSolution {
    pub fn weight(&self, id: CutId) -> f64 {
        self.ids.iter().position(|i| *i == id).map_or(0.0, |p| self.lambda[p])
    }

    /// `wᵀx_next + β`
    pub fn lower_value(&self) -> f64 {
        dot(&self.w, &self.x_next) + self.beta
    }
}

struct CacheEntry {
    v: Vec<f64>,
    hv: Vec<f64>,
}

/// Reusable solver for a fixed `H = Q + ρI`. Caches `H⁻¹v` per cut and the
/// last weights for warm starts.
pub struct SubproblemSolver {
    objective: QuadraticObjective,
    rho: f64,
    chol: Cholesky,
    cache: HashMap<CutId, CacheEntry>,
    warm: Vec<(CutId, f64)>,
}

/// Scratch state of one solve. Positions index into the bundle.
struct Work<'a> {
    cuts: &'a [crate::model::Cut],
    hv: Vec<&'a [f64]>,
    hc: Vec<f64>,
    c: Vec<f64>,
}

impl SubproblemSolver {
    /// `rho = 0` is Kelley mode and needs `μ_g > 0`.
    pub fn new(objective: &QuadraticObjective, rho: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Config(format!("rho must be nonnegative, got {rho}")));
        }
        if rho == 0.0 && objective.mu_g() <= 0.0 {
            return Err(Error::NotStronglyConvex);
        }
        let h = objective.q_mat().shifted(rho);
        let chol = Cholesky::factor(&h).map_err(|_| Error::NotStronglyConvex)?;
        Ok(SubproblemSolver { objective: objective.clone(), rho, chol, cache: HashMap::new(), warm: Vec::new() })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Forgets the warm start.
    pub fn reset(&mut self) {
        self.warm.clear();
    }

    /// Solves over `bundle`, centered at `x_c` when `ρ > 0`.
    pub fn solve(&mut self, bundle: &Bundle, x_c: Option<&[f64]>, tol: f64) -> Result<DualSolution> {
        let n = self.objective.dim();
        if bundle.is_empty() {
            return Err(Error::EmptyModel);
        }
        if bundle.dim() != n {
            return Err(Error::Dimension(format!("bundle dim {} for objective dim {n}", bundle.dim())));
        }
        let x_c: Vec<f64> = match (x_c, self.rho > 0.0) {
            (Some(xc), true) => {
                if xc.len() != n {
                    return Err(Error::Dimension("center length".into()));
                }
                xc.to_vec()
            }
            (None, true) => return Err(Error::Precondition("centered solver needs a center".into())),
            (_, false) => vec![0.0; n],
        };
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {tol}")));
        }
        let tol = tol.max(TOL_FLOOR);

        // refresh the H⁻¹v cache
        self.cache.retain(|id, _| bundle.contains(*id));
        for cut in bundle.iter() {
            let stale = self.cache.get(&cut.id).map_or(true, |e| e.v != cut.v);
            if stale {
                let hv = self.chol.solve(&cut.v);
                self.cache.insert(cut.id, CacheEntry { v: cut.v.clone(), hv });
            }
        }
        let c: Vec<f64> = self.objective.linear().iter().zip(&x_c).map(|(qi, xi)| qi - self.rho * xi).collect();
        let work = Work {
            cuts: bundle.cuts(),
            hv: bundle.iter().map(|cut| self.cache[&cut.id].hv.as_slice()).collect(),
            hc: self.chol.solve(&c),
            c,
        };

        // warm start restricted to surviving ids
        let mut support: Vec<usize> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (id, l) in &self.warm {
            if let Some(p) = bundle.cuts().iter().position(|cut| cut.id == *id) {
                if *l > 0.0 {
                    support.push(p);
                    weights.push(*l);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if support.is_empty() || !(total > 0.0) {
            support = vec![bundle.len() - 1];
            weights = vec![1.0];
        } else {
            weights.iter_mut().for_each(|l| *l /= total);
        }

        let m = bundle.len();
        let outcome = active_set(&work, &mut support, &mut weights, tol, 10 * m.max(1));
        let (lambda, major_iters, used_fallback) = match outcome {
            ActiveSet::Optimal(iters) => {
                let mut lam = vec![0.0; m];
                for (p, l) in support.iter().zip(&weights) {
                    lam[*p] = *l;
                }
                (lam, iters, false)
            }
            ActiveSet::Stalled(iters) => {
                let mut lam = vec![0.0; m];
                for (p, l) in support.iter().zip(&weights) {
                    lam[*p] = *l;
                }
                away_step_fw(&work, &mut lam, tol)?;
                (lam, iters, true)
            }
        };

        let sol = self.finish(bundle, &work, &lambda, &x_c, major_iters, used_fallback);
        self.warm = sol.ids.iter().zip(&sol.lambda).filter(|(_, l)| **l > 0.0).map(|(i, l)| (*i, *l)).collect();
        Ok(sol)
    }

    fn finish(
        &self,
        bundle: &Bundle,
        work: &Work<'_>,
        lambda: &[f64],
        x_c: &[f64],
        major_iters: usize,
        used_fallback: bool,
    ) -> DualSolution {
        let n = self.objective.dim();
        let mut w = vec![0.0; n];
        let mut beta = 0.0;
        for (cut, l) in work.cuts.iter().zip(lambda) {
            if *l != 0.0 {
                crate::densela::axpy(*l, &cut.v, &mut w);
                beta += l * cut.b;
            }
        }
        let rhs: Vec<f64> = w.iter().zip(&work.c).map(|(wi, ci)| -(wi + ci)).collect();
        let x = self.chol.solve(&rhs);
        let fk = work.cuts.iter().map(|cut| cut.value(&x)).fold(f64::NEG_INFINITY, f64::max);
        let prox = if self.rho > 0.0 {
            0.5 * self.rho * x.iter().zip(x_c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        } else {
            0.0
        };
        let primal_value = self.objective.value(&x) + fk + prox;
        // ĝ*(−w) = −½(w + c)ᵀx − r − ρ/2‖x_c‖²
        let wc_x: f64 = w.iter().zip(&work.c).zip(&x).map(|((wi, ci), xi)| (wi + ci) * xi).sum();
        let conj = -0.5 * wc_x - self.objective.constant() - 0.5 * self.rho * dot(x_c, x_c);
        let dual_value = -conj + beta;
        let lower = dot(&w, &x) + beta;
        DualSolution {
            ids: bundle.ids(),
            lambda: lambda.to_vec(),
            support: bundle.iter().zip(lambda).filter(|(_, l)| **l > SUPPORT_TOL).map(|(cut, _)| cut.id).collect(),
            w,
            beta,
            kkt_residual: fk - lower,
            model_value: fk,
            x_next: x,
            primal_value,
            dual_value,
            major_iters,
            used_fallback,
        }
    }
}

enum ActiveSet {
    Optimal(usize),
    Stalled(usize),
}

impl Work<'_> {
    /// `x = −(Σλ H⁻¹v + H⁻¹c)` from cached columns.
    fn primal(&self, support: &[usize], weights: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.hc.iter().map(|v| -v).collect();
        for (p, l) in support.iter().zip(weights) {
            crate::densela::axpy(-l, self.hv[*p], &mut x);
        }
        x
    }

    /// `vᵢᵀH⁻¹vⱼ`
    fn k(&self, i: usize, j: usize) -> f64 {
        dot(&self.cuts[i].v, self.hv[j])
    }

    /// Reduced Gram matrix `DᵀH⁻¹D` with `dᵢ = v_{sᵢ} − v_{s₀}`, plus the
    /// `K` row against the base.
    fn reduced_gram(&self, support: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let s0 = support[0];
        let r = support.len() - 1;
        let k0: Vec<f64> = support.iter().map(|&p| self.k(p, s0)).collect();
        let mut g = vec![0.0; r * r];
        for a in 0..r {
            for b in a..r {
                let kab = self.k(support[a + 1], support[b + 1]);
                let val = kab - k0[a + 1] - k0[b + 1] + k0[0];
                g[a * r + b] = val;
                g[b * r + a] = val;
            }
        }
        (g, k0)
    }

    /// Minimizer of `F` over the affine hull of the support, as weights
    /// summing to one. `None` when the support is (nearly) affinely dependent.
    fn affine_min(&self, support: &[usize]) -> Option<Vec<f64>> {
        if support.len() == 1 {
            return Some(vec![1.0]);
        }
        let s0 = support[0];
        let r = support.len() - 1;
        let (g, k0) = self.reduced_gram(support);
        let chol = Cholesky::factor_with_floor(&SymMatrix::from_row_major(r, g).ok()?, DEP_FLOOR).ok()?;
        let v0_hc = dot(&self.cuts[s0].v, &self.hc);
        let rhs: Vec<f64> = (0..r)
            .map(|a| {
                let p = support[a + 1];
                let db = self.cuts[p].b - self.cuts[s0].b;
                let vp_hc = dot(&self.cuts[p].v, &self.hc);
                db - (k0[a + 1] - k0[0] + vp_hc - v0_hc)
            })
            .collect();
        let t = chol.solve(&rhs);
        let mut alpha = Vec::with_capacity(r + 1);
        alpha.push(1.0 - t.iter().sum::<f64>());
        alpha.extend(t);
        Some(alpha)
    }

    /// Affine coefficients `a` (summing to one) of `v_j` in terms of the
    /// support, least-squares in the `H⁻¹` metric.
    fn affine_coords(&self, support: &[usize], j: usize) -> Option<Vec<f64>> {
        if support.len() == 1 {
            return Some(vec![1.0]);
        }
        let s0 = support[0];
        let r = support.len() - 1;
        let (g, k0) = self.reduced_gram(support);
        let chol = Cholesky::factor_with_floor(&SymMatrix::from_row_major(r, g).ok()?, DEP_FLOOR).ok()?;
        let kj0 = self.k(j, s0);
        let rhs: Vec<f64> = (0..r)
            .map(|a| {
                let p = support[a + 1];
                self.k(p, j) - k0[a + 1] - kj0 + k0[0]
            })
            .collect();
        let t = chol.solve(&rhs);
        let mut a = Vec::with_capacity(r + 1);
        a.push(1.0 - t.iter().sum::<f64>());
        a.extend(t);
        Some(a)
    }

    fn is_independent_with(&self, support: &[usize], j: usize) -> bool {
        let mut s = support.to_vec();
        s.push(j);
        let r = s.len() - 1;
        let (g, _) = self.reduced_gram(&s);
        SymMatrix::from_row_major(r, g).ok().and_then(|m| Cholesky::factor_with_floor(&m, DEP_FLOOR).ok()).is_some()
    }

    /// `F(λ) = −½(w + c)ᵀx − β`
    fn dual_objective(&self, support: &[usize], weights: &[f64], x: &[f64]) -> f64 {
        let mut wc_x = dot(&self.c, x);
        let mut beta = 0.0;
        for (p, l) in support.iter().zip(weights) {
            wc_x += l * dot(&self.cuts[*p].v, x);
            beta += l * self.cuts[*p].b;
        }
        -0.5 * wc_x - beta
    }
}

/// Runs minor cycles until the support weights equal the affine minimizer.
/// Returns false if the support turned dependent.
fn minor_cycle(work: &Work<'_>, support: &mut Vec<usize>, weights: &mut Vec<f64>) -> bool {
    loop {
        let Some(alpha) = work.affine_min(support) else {
            return false;
        };
        if alpha.iter().all(|a| *a > 0.0) {
            *weights = alpha;
            return true;
        }
        let mut theta = f64::INFINITY;
        let mut block = 0;
        for (i, (a, l)) in alpha.iter().zip(weights.iter()).enumerate() {
            if *a <= 0.0 {
                let t = l / (l - a);
                if t < theta {
                    theta = t;
                    block = i;
                }
            }
        }
        for (l, a) in weights.iter_mut().zip(&alpha) {
            *l += theta * (a - *l);
        }
        weights[block] = 0.0;
        let mut i = 0;
        while i < support.len() {
            if weights[i] <= 0.0 {
                support.remove(i);
                weights.remove(i);
            } else {
                i += 1;
            }
        }
        if support.is_empty() {
            return false;
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|l| *l /= s);
    }
}

fn active_set(work: &Work<'_>, support: &mut Vec<usize>, weights: &mut Vec<f64>, tol: f64, cap: usize) -> ActiveSet {
    if !minor_cycle(work, support, weights) {
        // warm start went stale; restart from the newest cut
        *support = vec![work.cuts.len() - 1];
        *weights = vec![1.0];
    }
    let mut last_f = f64::INFINITY;
    for iter in 0..cap {
        let x = work.primal(support, weights);
        let f = work.dual_objective(support, weights, &x);
        // z = wᵀx + β
        let z: f64 = support.iter().zip(weights.iter()).map(|(p, l)| l * work.cuts[*p].value(&x)).sum();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, cut) in work.cuts.iter().enumerate() {
            let val = cut.value(&x);
            if val > best.1 {
                best = (j, val);
            }
        }
        if best.1 - z <= tol * (1.0 + z.abs()) {
            return ActiveSet::Optimal(iter);
        }
        // F changes by ~gap² near the optimum, below rounding, so only an
        // actual increase counts as stalling
        if support.contains(&best.0) || f > last_f + 4.0 * f64::EPSILON * (1.0 + f.abs()) {
            return ActiveSet::Stalled(iter);
        }
        last_f = f;
        let j = best.0;
        if work.is_independent_with(support, j) {
            support.push(j);
            weights.push(0.0);
        } else {
            let Some(a) = work.affine_coords(support, j) else {
                return ActiveSet::Stalled(iter);
            };
            let mut t = f64::INFINITY;
            let mut block = usize::MAX;
            for (i, (ai, li)) in a.iter().zip(weights.iter()).enumerate() {
                if *ai > 1e-14 && li / ai < t {
                    t = li / ai;
                    block = i;
                }
            }
            if block == usize::MAX {
                return ActiveSet::Stalled(iter);
            }
            for (li, ai) in weights.iter_mut().zip(&a) {
                *li -= t * ai;
            }
            weights[block] = 0.0;
            support.push(j);
            weights.push(t);
            let mut i = 0;
            while i < support.len() {
                if weights[i] <= 0.0 {
                    support.remove(i);
                    weights.remove(i);
                } else {
                    i += 1;
                }
            }
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|l| *l /= s);
        }
        if !minor_cycle(work, support, weights) {
            return ActiveSet::Stalled(iter);
        }
    }
    ActiveSet::Stalled(cap)
}

/// Away-step Frank-Wolfe with exact line search on the dense weights.
fn away_step_fw(work: &Work<'_>, lam: &mut [f64], tol: f64) -> Result<()> {
    let m = lam.len();
    let n = work.hc.len();
    for _ in 0..AFW_MAX_ITERS {
        // H⁻¹w and x
        let mut hw = vec![0.0; n];
        for p in 0..m {
            if lam[p] > 0.0 {
                crate::densela::axpy(lam[p], work.hv[p], &mut hw);
            }
        }
        let x: Vec<f64> = hw.iter().zip(&work.hc).map(|(a, b)| -(a + b)).collect();
        let vals: Vec<f64> = work.cuts.iter().map(|cut| cut.value(&x)).collect();
        let z: f64 = (0..m).map(|p| lam[p] * vals[p]).sum();
        let (fw, fw_val) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, v)| if *v > b.1 { (j, *v) } else { b });
        if fw_val - z <= tol * (1.0 + z.abs()) {
            return Ok(());
        }
        let (aw, aw_val) =
            (0..m).filter(|p| lam[*p] > 0.0).fold((usize::MAX, f64::INFINITY), |b, p| if vals[p] < b.1 { (p, vals[p]) } else { b });
        let toward = fw_val - z >= z - aw_val || aw == usize::MAX || lam[aw] >= 1.0;
        // direction d in λ-space; H⁻¹Δw = H⁻¹(Vd)
        let (slope, hdw, dw, gmax) = if toward {
            let hdw: Vec<f64> = work.hv[fw].iter().zip(&hw).map(|(a, b)| a - b).collect();
            let mut dw: Vec<f64> = work.cuts[fw].v.clone();
            for p in 0..m {
                if lam[p] > 0.0 {
                    crate::densela::axpy(-lam[p], &work.cuts[p].v, &mut dw);
                }
            }
            (-(fw_val - z), hdw, dw, 1.0)
        } else {
            let hdw: Vec<f64> = hw.iter().zip(work.hv[aw]).map(|(a, b)| a - b).collect();
            let mut dw: Vec<f64> = work.cuts[aw].v.iter().map(|v| -v).collect();
            for p in 0..m {
                if lam[p] > 0.0 {
                    crate::densela::axpy(lam[p], &work.cuts[p].v, &mut dw);
                }
            }
            (-(z - aw_val), hdw, dw, lam[aw] / (1.0 - lam[aw]))
        };
        let curv = dot(&dw, &hdw);
        let gamma = if curv > 0.0 { (-slope / curv).min(gmax) } else { gmax };
        if toward {
            lam.iter_mut().for_each(|l| *l *= 1.0 - gamma);
            lam[fw] += gamma;
        } else {
            lam.iter_mut().for_each(|l| *l *= 1.0 + gamma);
            lam[aw] -= gamma;
            if gamma == gmax {
                lam[aw] = 0.0;
            }
        }
        lam.iter_mut().for_each(|l| {
            if *l < 0.0 {
                *l = 0.0
            }
        });
        let s: f64 = lam.iter().sum();
        lam.iter_mut().for_each(|l| *l /= s);
    }
    let dump: Vec<String> = lam.iter().enumerate().filter(|(_, l)| **l > 0.0).map(|(p, l)| format!("{}:{l:e}", work.cuts[p].id)).collect();
    Err(Error::CycleCap(format!("away-step fallback did not converge; weights [{}]", dump.join(", "))))
}

/// One-shot solve. `center = Some((x_c, ρ))` for the proximal subproblem,
/// `None` for Kelley mode.
pub fn solve_bundle_subproblem(
    objective: &QuadraticObjective,
    bundle: &Bundle,
    center: Option<(&[f64], f64)>,
    tol: f64,
) -> Result<DualSolution> {
    match center {
        Some((x_c, rho)) => {
            if !(rho > 0.0) {
                return Err(Error::Config(format!("rho must be positive, got {rho}")));
            }
            SubproblemSolver::new(objective, rho)?.solve(bundle, Some(x_c), tol)
        }
        None => SubproblemSolver::new(objective, 0.0)?.solve(bundle, None, tol),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwDirection {
    pub cut: Affine,
    /// `f(x_next) − (wᵀx_next + β)`
    pub fw_gap: f64,
}

/// LMO cut at `x_next` and the Frank-Wolfe gap of the current bundle solution.
pub fn fw_direction(sol: &DualSolution, lmo: &LmoDescriptor) -> Result<FwDirection> {
    let cut = lmo_max(lmo, &sol.x_next)?;
    let fw_gap = cut.value(&sol.x_next) - sol.lower_value();
    Ok(FwDirection { cut, fw_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{norm, SymMatrix};
    use crate::model::model_value;
    use proptest::prelude::*;

    fn uniform(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_cuts(seed: u64, n: usize, m: usize) -> Vec<Affine> {
        let mut s = seed;
        (0..m).map(|_| Affine::new((0..n).map(|_| uniform(&mut s)).collect(), uniform(&mut s))).collect()
    }

    fn random_spd(seed: u64, n: usize, shift: f64) -> SymMatrix {
        let mut s = seed;
        let b: Vec<f64> = (0..n * n).map(|_| uniform(&mut s)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>() / n as f64;
            }
            a[i * n + i] += shift;
        }
        SymMatrix::from_row_major(n, a).unwrap()
    }

    fn check_invariants(sol: &DualSolution, obj: &QuadraticObjective, bundle: &Bundle, center: Option<(&[f64], f64)>) {
        let n = obj.dim();
        let s: f64 = sol.lambda.iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
        assert!(sol.lambda.iter().all(|l| *l >= 0.0));
        assert!((sol.primal_value - sol.dual_value).abs() <= 1e-8 * (1.0 + sol.primal_value.abs()));
        let fk = model_value(bundle, &sol.x_next).unwrap().value;
        assert!((fk - sol.lower_value()).abs() <= 1e-8);
        for id in &sol.support {
            let v = bundle.get(*id).unwrap().value(&sol.x_next);
            assert!(fk - v <= 1e-9 * (1.0 + fk.abs()));
        }
        assert!(sol.support.len() <= n + 2);
        // w = −∇ĝ(x_next)
        let mut grad = obj.grad(&sol.x_next);
        if let Some((xc, rho)) = center {
            for i in 0..n {
                grad[i] += rho * (sol.x_next[i] - xc[i]);
            }
        }
        let link: Vec<f64> = grad.iter().zip(&sol.w).map(|(g, w)| g + w).collect();
        assert!(norm(&link) <= 1e-8);
    }

    #[test]
    fn single_cut() {
        let obj = QuadraticObjective::half_norm_sq(3);
        let v = vec![1.0, -2.0, 0.5];
        let bundle = Bundle::from_affines(3, [Affine::new(v.clone(), 0.3)]).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0; 3], 1.0)), 1e-12).unwrap();
        assert_eq!(sol.lambda, vec![1.0]);
        assert_eq!(sol.w, v);
        for i in 0..3 {
            assert!((sol.x_next[i] + v[i] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn abs_value_example() {
        let obj = QuadraticObjective::half_norm_sq(1);
        let bundle = Bundle::from_affines(1, [Affine::new(vec![1.0], 0.0), Affine::new(vec![-1.0], 0.0)]).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0], 1.0)), 1e-12).unwrap();
        assert!((sol.lambda[0] - 0.5).abs() < 1e-12 && (sol.lambda[1] - 0.5).abs() < 1e-12);
        assert!(sol.w[0].abs() < 1e-12 && sol.x_next[0].abs() < 1e-12);
        assert!(sol.primal_value.abs() < 1e-12);
        // grid oracle on the 1-D dual: F(λ) = ½(2λ−1)²/2
        let grid = bundlekit_oracle::GridSpec::simplex(2, 2001);
        let gm = bundlekit_oracle::brute_simplex_qp(&[vec![0.5, -0.5], vec![-0.5, 0.5]], &[0.0, 0.0], &grid).unwrap();
        assert!((gm.lambda[0] - sol.lambda[0]).abs() <= gm.point_error_bound + 1e-12);
    }

    /// Dual in oracle form: `½λᵀMλ + dᵀλ` with `M = VᵀH⁻¹V`, `d = VᵀH⁻¹c − b`.
    fn oracle_form(obj_h: &SymMatrix, c: &[f64], cuts: &[Affine]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let hv: Vec<Vec<f64>> = cuts.iter().map(|a| crate::densela::spd_solve(obj_h, &a.v).unwrap()).collect();
        let m: Vec<Vec<f64>> = cuts.iter().map(|a| hv.iter().map(|h| dot(&a.v, h)).collect()).collect();
        let d: Vec<f64> = cuts.iter().zip(&hv).map(|(a, h)| dot(c, h) - a.b).collect();
        (m, d)
    }

    #[test]
    fn three_dims_six_cuts_vs_projected_gradient() {
        for seed in 0..10u64 {
            let obj = QuadraticObjective::new(random_spd(seed + 50, 3, 0.5), vec![0.2, -0.1, 0.3], 0.0).unwrap();
            let cuts = random_cuts(seed, 3, 6);
            let bundle = Bundle::from_affines(3, cuts.clone()).unwrap();
            let xc = [0.1, 0.2, -0.3];
            let rho = 1.0;
            let sol = solve_bundle_subproblem(&obj, &bundle, Some((&xc, rho)), 1e-12).unwrap();
            check_invariants(&sol, &obj, &bundle, Some((&xc, rho)));
            let h = obj.q_mat().shifted(rho);
            let c: Vec<f64> = (0..3).map(|i| obj.linear()[i] - rho * xc[i]).collect();
            let (m, d) = oracle_form(&h, &c, &cuts);
            let (_, fstar) = bundlekit_oracle::projected_gradient_simplex_qp(&m, &d, 200_000);
            let f_sol: f64 = 0.5
                * (0..6).map(|i| (0..6).map(|j| sol.lambda[i] * m[i][j] * sol.lambda[j]).sum::<f64>()).sum::<f64>()
                + dot(&d, &sol.lambda);
            assert!((f_sol - fstar).abs() < 1e-10, "seed {seed}: {f_sol} vs {fstar}");
        }
    }

    #[test]
    fn three_cut_grid_oracle() {
        for seed in 0..10u64 {
            let obj = QuadraticObjective::half_norm_sq(2);
            let cuts = random_cuts(seed + 300, 2, 3);
            let bundle = Bundle::from_affines(2, cuts.clone()).unwrap();
            let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0, 0.0], 2.0)), 1e-12).unwrap();
            let h = obj.q_mat().shifted(2.0);
            let (m, d) = oracle_form(&h, &[0.0, 0.0], &cuts);
            let gm = bundlekit_oracle::brute_simplex_qp(&m, &d, &bundlekit_oracle::GridSpec::simplex(3, 401)).unwrap();
            let f_sol: f64 = 0.5
                * (0..3).map(|i| (0..3).map(|j| sol.lambda[i] * m[i][j] * sol.lambda[j]).sum::<f64>()).sum::<f64>()
                + dot(&d, &sol.lambda);
            assert!(f_sol <= gm.value + 1e-12);
            assert!(gm.value - f_sol <= gm.value_error_bound + 1e-12);
        }
    }

    #[test]
    fn kelley_mode_needs_strong_convexity() {
        let obj = QuadraticObjective::new(SymMatrix::from_diag(&[1.0, 0.0]), vec![0.0; 2], 0.0).unwrap();
        let bundle = Bundle::from_affines(2, [Affine::new(vec![1.0, 0.0], 0.0)]).unwrap();
        let err = solve_bundle_subproblem(&obj, &bundle, None, 1e-10).unwrap_err();
        assert_eq!(err.to_string(), "subproblem not strongly convex");
        assert!(solve_bundle_subproblem(&obj, &bundle, Some((&[0.0, 0.0], 1.0)), 1e-10).is_ok());
    }

    #[test]
    fn kelley_mode_matches_centered_with_zero_rho_limit() {
        let obj = QuadraticObjective::new(random_spd(9, 4, 1.0), vec![0.3, 0.0, -0.2, 0.1], 0.5).unwrap();
        let bundle = Bundle::from_affines(4, random_cuts(17, 4, 12)).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, None, 1e-12).unwrap();
        check_invariants(&sol, &obj, &bundle, None);
    }

    #[test]
    fn dependent_slopes_and_duplicates() {
        // equal slopes, different intercepts; collinear slopes
        let obj = QuadraticObjective::half_norm_sq(2);
        let cuts = vec![
            Affine::new(vec![1.0, 0.0], 0.0),
            Affine::new(vec![1.0, 0.0], 0.5),
            Affine::new(vec![-1.0, 0.0], 0.0),
            Affine::new(vec![0.0, 0.0], 0.2),
            Affine::new(vec![-1.0, 0.0], 0.1),
            Affine::new(vec![0.0, 1.0], -0.3),
        ];
        for perm in 0..6 {
            let mut cs = cuts.clone();
            cs.rotate_left(perm);
            let bundle = Bundle::from_affines(2, cs).unwrap();
            let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.3, 0.1], 1.0)), 1e-12).unwrap();
            check_invariants(&sol, &obj, &bundle, Some((&[0.3, 0.1], 1.0)));
        }
    }

    #[test]
    fn many_cuts_support_is_bounded() {
        let n = 5;
        let obj = QuadraticObjective::half_norm_sq(n);
        let bundle = Bundle::from_affines(n, random_cuts(99, n, 200)).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0; 5], 0.1)), 1e-12).unwrap();
        check_invariants(&sol, &obj, &bundle, Some((&[0.0; 5], 0.1)));
        assert!(sol.support.len() <= n + 1);
        assert!(!sol.used_fallback);
    }

    #[test]
    fn warm_start_reuses_weights() {
        let n = 6;
        let obj = QuadraticObjective::half_norm_sq(n);
        let cuts = random_cuts(5, n, 40);
        let mut solver = SubproblemSolver::new(&obj, 1.0).unwrap();
        let mut bundle = Bundle::from_affines(n, cuts[..30].to_vec()).unwrap();
        let xc = vec![0.2; n];
        let first = solver.solve(&bundle, Some(&xc), 1e-12).unwrap();
        for c in &cuts[30..] {
            bundle.insert(c.clone()).unwrap();
        }
        let warm = solver.solve(&bundle, Some(&xc), 1e-12).unwrap();
        let cold = solve_bundle_subproblem(&obj, &bundle, Some((&xc, 1.0)), 1e-12).unwrap();
        assert!((warm.primal_value - cold.primal_value).abs() < 1e-10);
        assert!(warm.dual_value >= first.dual_value - 1e-10);
        // pruning to the support keeps the solution
        let keep = warm.support.clone();
        bundle.retain_ids(&keep);
        let pruned = solver.solve(&bundle, Some(&xc), 1e-12).unwrap();
        assert!((pruned.primal_value - warm.primal_value).abs() < 1e-10);
    }

    #[test]
    fn fw_direction_examples() {
        let obj = QuadraticObjective::half_norm_sq(1);
        let full = LmoDescriptor::explicit(vec![Affine::new(vec![1.0], 0.0), Affine::new(vec![-1.0], 0.0)]);
        let LmoDescriptor::Explicit { cuts } = &full else { unreachable!() };
        let bundle = Bundle::from_affines(1, cuts.clone()).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0], 1.0)), 1e-12).unwrap();
        assert!(fw_direction(&sol, &full).unwrap().fw_gap.abs() < 1e-10);

        // bundle {(1,0)} at x = 0: gap 0 but the LMO hands back a cut
        let only = Bundle::from_affines(1, [Affine::new(vec![1.0], 0.0)]).unwrap();
        let mut sol = solve_bundle_subproblem(&obj, &only, Some((&[0.0], 1.0)), 1e-12).unwrap();
        sol.x_next = vec![0.0];
        let fw = fw_direction(&sol, &full).unwrap();
        assert_eq!(fw.fw_gap, 0.0);
        assert_eq!(fw.cut, Affine::new(vec![1.0], 0.0));
        let full_rev = LmoDescriptor::explicit(vec![Affine::new(vec![-1.0], 0.0), Affine::new(vec![1.0], 0.0)]);
        assert_eq!(fw_direction(&sol, &full_rev).unwrap().cut, Affine::new(vec![-1.0], 0.0));
    }

    #[test]
    fn fw_gap_matches_reevaluation() {
        let n = 4;
        let obj = QuadraticObjective::half_norm_sq(n);
        let all = random_cuts(8, n, 30);
        let lmo = LmoDescriptor::explicit(all.clone());
        let bundle = Bundle::from_affines(n, all[..5].to_vec()).unwrap();
        let sol = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0; 4], 1.0)), 1e-12).unwrap();
        let fw = fw_direction(&sol, &lmo).unwrap();
        let f = crate::lmo::f_of(&lmo, &sol.x_next).unwrap();
        let fk = model_value(&bundle, &sol.x_next).unwrap().value;
        assert!((fw.fw_gap - (f - fk)).abs() < 1e-10);
        assert!(fw.fw_gap >= -1e-9);
    }

    #[test]
    fn fallback_reaches_same_optimum() {
        let n = 4;
        let obj = QuadraticObjective::half_norm_sq(n);
        let bundle = Bundle::from_affines(n, random_cuts(3, n, 25)).unwrap();
        let solver = SubproblemSolver::new(&obj, 1.0).unwrap();
        let c = vec![0.0; n];
        let hv: Vec<Vec<f64>> = bundle.iter().map(|cut| solver.chol.solve(&cut.v)).collect();
        let work = Work { cuts: bundle.cuts(), hv: hv.iter().map(|h| h.as_slice()).collect(), hc: vec![0.0; n], c };
        let mut lam = vec![0.0; 25];
        lam[24] = 1.0;
        away_step_fw(&work, &mut lam, 1e-11).unwrap();
        let exact = solve_bundle_subproblem(&obj, &bundle, Some((&[0.0; 4], 1.0)), 1e-12).unwrap();
        let x = work.primal(&(0..25).collect::<Vec<_>>(), &lam);
        let fk = model_value(&bundle, &x).unwrap().value;
        let val = obj.value(&x) + fk + 0.5 * dot(&x, &x);
        assert!((val - exact.primal_value).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn invariants_on_random_bundles(seed in 0u64..10_000, n in 1usize..7, m in 1usize..30, rho in 0.05f64..5.0) {
            let obj = QuadraticObjective::new(random_spd(seed ^ 0xabc, n, 0.0), (0..n).map(|i| 0.1 * i as f64).collect(), 0.0).unwrap();
            let bundle = Bundle::from_affines(n, random_cuts(seed, n, m)).unwrap();
            let xc: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let sol = solve_bundle_subproblem(&obj, &bundle, Some((&xc, rho)), 1e-12).unwrap();
            check_invariants(&sol, &obj, &bundle, Some((&xc, rho)));
        }

        #[test]
        fn adding_a_cut_never_raises_dual_value(seed in 0u64..10_000, n in 1usize..6, m in 1usize..15) {
            let obj = QuadraticObjective::half_norm_sq(n);
            let cuts = random_cuts(seed, n, m + 1);
            let small = Bundle::from_affines(n, cuts[..m].to_vec()).unwrap();
            let big = Bundle::from_affines(n, cuts).unwrap();
            let xc = vec![0.5; n];
            let a = solve_bundle_subproblem(&obj, &small, Some((&xc, 1.0)), 1e-12).unwrap();
            let b = solve_bundle_subproblem(&obj, &big, Some((&xc, 1.0)), 1e-12).unwrap();
            // min over conv(V) of ĝ*(−w) − β is −dual_value
            prop_assert!(b.dual_value >= a.dual_value - 1e-10);
        }
    }
}
