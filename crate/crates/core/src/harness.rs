//! Batch drivers: reference optima, policy comparison, scaling runs and the
//! identity suite.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::duality::{alpha_by_eigen, alpha_constant};
use crate::error::{Error, Result};
use crate::io;
use crate::kelley_fcfw::{initial_bundle, run_kelley, verify_kelley_fcfw_equivalence};
use crate::lmo::LmoDescriptor;
use crate::model::{evaluate_h, Bundle, PolicyKind, ProblemInstance, ReferenceOpt, SolverConfig, StepType};
use crate::mpbfa::{self, run_mpbfa, run_mpbfa_with, Hooks, MpbfaResult};
use crate::subqp::solve_bundle_subproblem;
use crate::synth::{generate, generate_explicit, uniform, ExplicitSpec, SynthSpec};

pub const EPS_REF: f64 = 1e-9;
pub const REF_MAX_ITER: usize = 1_000_000;

/// Runs `f` over `items` on a pool of `jobs` threads (0 = rayon default),
/// keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Exact dual solve on all of `V` for explicit LMOs with `μ_g > 0`,
/// otherwise an all-cut run at `ε = 1e-9`.
pub fn reference_optimum(instance: &ProblemInstance) -> Result<ReferenceOpt> {
    if let LmoDescriptor::Explicit { cuts } = &instance.lmo {
        if instance.objective.mu_g() > 0.0 {
            let b = Bundle::from_affines(instance.dim(), cuts.clone())?;
            let sol = solve_bundle_subproblem(&instance.objective, &b, None, 1e-14)?;
            let h = evaluate_h(instance, &sol.x_next)?;
            return Ok(ReferenceOpt { x_star: sol.x_next, h_star: h });
        }
    }
    let cfg = SolverConfig::new(EPS_REF).with_policy(PolicyKind::AllCut).with_max_iter(REF_MAX_ITER);
    let r = run_mpbfa(instance, &cfg)?;
    if !r.converged() {
        return Err(Error::Precondition(format!("reference solve did not certify within {REF_MAX_ITER} iterations")));
    }
    Ok(ReferenceOpt { x_star: r.best_serious_x, h_star: r.best_serious_value })
}

/// Reference from the instance itself, the `.ref.json` cache beside
/// `path`, or a fresh solve (written to the cache).
pub fn cached_reference(instance: &ProblemInstance, path: Option<&Path>) -> Result<ReferenceOpt> {
    if let Some(r) = &instance.reference_opt {
        return Ok(r.clone());
    }
    let cache = path.map(io::reference_path);
    if let Some(c) = cache.as_deref().filter(|c| c.exists()) {
        let r = io::read_reference(c)?;
        if r.x_star.len() == instance.dim() {
            return Ok(r);
        }
    }
    let r = reference_optimum(instance)?;
    if let Some(c) = cache {
        io::write_reference(&c, &r)?;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub iterations: usize,
    pub serious: usize,
    pub null: usize,
    pub max_bundle: usize,
    pub final_gap: f64,
    pub converged: bool,
    pub wall_time_ns: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub n: usize,
    pub policy: PolicyKind,
    pub median_time: f64,
    pub q1: f64,
    pub q3: f64,
    pub converged: usize,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub epsilon: f64,
    pub rho: f64,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl BenchReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    /// The report with every wall time zeroed, for determinism checks.
    pub fn without_timing(&self) -> BenchReport {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|x| x.wall_time_ns = 0);
        r.aggregates.iter_mut().for_each(|a| (a.median_time, a.q1, a.q3) = (0.0, 0.0, 0.0));
        r
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of wall time in seconds, per `(n, policy)`, over
/// converged runs only.
pub fn aggregate(rows: &[BenchRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, PolicyKind)> = rows.iter().map(|r| (r.n, r.policy)).collect();
    keys.sort_by_key(|(n, p)| (*n, PolicyKind::ALL.iter().position(|q| q == p)));
    keys.dedup();
    keys.into_iter()
        .map(|(n, policy)| {
            let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.n == n && r.policy == policy).collect();
            let mut t: Vec<f64> = sel.iter().filter(|r| r.converged).map(|r| r.wall_time_ns as f64 * 1e-9).collect();
            t.sort_by(f64::total_cmp);
            AggregateRow {
                n,
                policy,
                median_time: quantile(&t, 0.5),
                q1: quantile(&t, 0.25),
                q3: quantile(&t, 0.75),
                converged: t.len(),
                non_converged: sel.len() - t.len(),
            }
        })
        .collect()
}

fn bench_row(inst: &ProblemInstance, seed: u64, h_ref: f64, r: &MpbfaResult) -> BenchRow {
    BenchRow {
        n: inst.dim(),
        m: inst.meta.as_ref().map_or(0, |m| m.m),
        seed,
        policy: r.policy,
        iterations: r.iterations,
        serious: r.serious_count,
        null: r.null_count,
        max_bundle: r.max_bundle,
        final_gap: r.best_serious_value - h_ref,
        converged: r.converged(),
        wall_time_ns: r.trace.iter().map(|t| t.wall_time_ns).sum(),
        error: None,
    }
}

/// One policy's run in a comparison.
#[derive(Debug, Clone)]
pub struct PolicySeries {
    pub policy: PolicyKind,
    pub result: MpbfaResult,
    /// Bundle size after the policy, per iteration.
    pub bundle_sizes: Vec<usize>,
    /// `min(h(x0), best serious value so far) − h*`, per iteration.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub reference: ReferenceOpt,
    pub series: Vec<PolicySeries>,
    pub report: BenchReport,
}

impl Comparison {
    pub fn write_bundle_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["policy", "iter", "bundle_size"])?;
        for s in &self.series {
            for (i, b) in s.bundle_sizes.iter().enumerate() {
                w.write_record([s.policy.as_str().to_string(), (i + 1).to_string(), b.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_gap_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["policy", "iter", "gap"])?;
        for s in &self.series {
            for (i, g) in s.gaps.iter().enumerate() {
                w.write_record([s.policy.as_str().to_string(), (i + 1).to_string(), g.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn policy_series(instance: &ProblemInstance, h_ref: f64, result: MpbfaResult) -> Result<PolicySeries> {
    let mut best = evaluate_h(instance, &instance.x0)?;
    let gaps = result
        .trace
        .iter()
        .map(|r| {
            if r.step_type == StepType::Serious {
                best = best.min(r.obj_value);
            }
            best - h_ref
        })
        .collect();
    Ok(PolicySeries {
        policy: result.policy,
        bundle_sizes: result.trace.iter().map(|r| r.bundle_size_post).collect(),
        gaps,
        result,
    })
}

/// Iteration cap for the slower policies given the all-cut count.
pub fn policy_iteration_cap(all_cut_iterations: usize) -> usize {
    50 * (all_cut_iterations + 100)
}

/// Runs all three policies on one instance from the same `V0`. `config`
/// supplies everything but the policy. All-cut runs first; the other two
/// get `max(config.max_iter, 50·(all-cut iterations + 100))`.
pub fn compare_policies(instance: &ProblemInstance, reference: ReferenceOpt, config: &SolverConfig, jobs: usize) -> Result<Comparison> {
    let seed = instance.meta.as_ref().map_or(0, |m| m.seed);
    let all = run_mpbfa(instance, &config.clone().with_policy(PolicyKind::AllCut))?;
    let cap = config.max_iter.max(policy_iteration_cap(all.iterations));
    let rest = par_map(jobs, vec![PolicyKind::SingleCut, PolicyKind::ActiveCut], |p| {
        run_mpbfa(instance, &config.clone().with_policy(p).with_max_iter(cap))
    });
    let mut series = Vec::new();
    let mut rows = Vec::new();
    for r in std::iter::once(Ok(all)).chain(rest) {
        let r = r?;
        rows.push(bench_row(instance, seed, reference.h_star, &r));
        series.push(policy_series(instance, reference.h_star, r)?);
    }
    let report = BenchReport { epsilon: config.epsilon, rho: config.rho, aggregates: aggregate(&rows), rows };
    Ok(Comparison { reference, series, report })
}

/// Synthetic instances for every `(n, seed)`, each solved under all three
/// policies. Failures become rows with `error` set.
pub fn scaling(n_list: &[usize], seeds: &[u64], config: &SolverConfig, jobs: usize) -> Result<BenchReport> {
    if n_list.is_empty() {
        return Err(Error::Config("n_list is empty".into()));
    }
    config.validate()?;
    let tasks: Vec<(usize, u64)> = n_list.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let per_instance = par_map(jobs, tasks, |(n, seed)| -> Vec<BenchRow> {
        let failed = |policy, m, e: Error| BenchRow {
            n,
            m,
            seed,
            policy,
            iterations: 0,
            serious: 0,
            null: 0,
            max_bundle: 0,
            final_gap: f64::NAN,
            converged: false,
            wall_time_ns: 0,
            error: Some(e.to_string()),
        };
        let spec = SynthSpec::new(n, seed);
        let prepared = generate(&spec).and_then(|inst| reference_optimum(&inst).map(|r| (inst, r)));
        let (inst, reference) = match prepared {
            Ok(v) => v,
            Err(e) => {
                let msg = e.to_string();
                return PolicyKind::ALL.iter().map(|&p| failed(p, spec.m, Error::Precondition(msg.clone()))).collect();
            }
        };
        PolicyKind::ALL
            .iter()
            .map(|&p| match run_mpbfa(&inst, &config.clone().with_policy(p)) {
                Ok(r) => bench_row(&inst, seed, reference.h_star, &r),
                Err(e) => failed(p, spec.m, e),
            })
            .collect()
    });
    let rows: Vec<BenchRow> = per_instance.into_iter().flatten().collect();
    Ok(BenchReport { epsilon: config.epsilon, rho: config.rho, aggregates: aggregate(&rows), rows })
}

pub const IDENTITY_NAMES: [&str; 10] = [
    "kelley_fcfw_x",
    "kelley_fcfw_cut_ids",
    "gap_identity",
    "prox_dual",
    "moreau_correspondence",
    "alm",
    "gradient_link",
    "strong_duality",
    "lower_model",
    "alpha_eigen",
];

fn limit_of(name: &str) -> f64 {
    match name {
        "kelley_fcfw_x" => 1e-8,
        "kelley_fcfw_cut_ids" => 0.0,
        "gap_identity" => mpbfa::LIMIT_GAP_IDENTITY,
        "prox_dual" => mpbfa::LIMIT_PROX_DUAL,
        "moreau_correspondence" => mpbfa::LIMIT_MOREAU,
        "alm" => mpbfa::LIMIT_ALM,
        "gradient_link" => mpbfa::LIMIT_GRADIENT_LINK,
        "strong_duality" => mpbfa::LIMIT_STRONG_DUALITY,
        "lower_model" => mpbfa::LIMIT_LOWER_MODEL,
        "alpha_eigen" => 1e-9,
        _ => unreachable!("unknown identity {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub name: String,
    pub max_residual: f64,
    pub limit: f64,
    /// Number of evaluations folded into `max_residual`.
    pub samples: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub identities: Vec<IdentityRow>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn violations(&self) -> Vec<&IdentityRow> {
        self.identities.iter().filter(|r| !r.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&IdentityRow> {
        self.identities.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    /// Explicit cuts per instance.
    pub cuts: usize,
    /// Also run synthetic polytope instances for sizes ≥ 5.
    pub polytopes: bool,
    pub epsilon: f64,
    pub rho: f64,
    pub max_iter: usize,
    /// Random `(L_g, ρ)` pairs for the α check.
    pub alpha_pairs: usize,
    /// Adds 1e-3 to every subproblem β (negative control).
    pub inject_fault: bool,
    pub jobs: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seeds: (0..4).collect(),
            sizes: vec![2, 5, 10],
            cuts: 30,
            polytopes: true,
            epsilon: 1e-6,
            rho: 1.0,
            max_iter: 2000,
            alpha_pairs: 20,
            inject_fault: false,
            jobs: 0,
        }
    }
}

impl VerifyConfig {
    pub fn instances(&self) -> Result<Vec<ProblemInstance>> {
        let mut out = Vec::new();
        for &n in &self.sizes {
            for &seed in &self.seeds {
                out.push(generate_explicit(&ExplicitSpec { n, cuts: self.cuts, seed, mu: 1.0, singular: false })?);
                if self.polytopes && n >= 5 {
                    out.push(generate(&SynthSpec::new(n, seed))?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct Acc {
    max: Vec<f64>,
    samples: Vec<usize>,
}

impl Acc {
    fn new() -> Self {
        Acc { max: vec![0.0; IDENTITY_NAMES.len()], samples: vec![0; IDENTITY_NAMES.len()] }
    }

    fn add(&mut self, name: &str, v: f64) {
        let i = IDENTITY_NAMES.iter().position(|n| *n == name).expect("identity name");
        // NaN must register as a violation
        self.max[i] = if v.is_nan() { f64::NAN } else if self.max[i].is_nan() { self.max[i] } else { self.max[i].max(v) };
        self.samples[i] += 1;
    }

    fn merge(&mut self, o: Acc) {
        for (i, name) in IDENTITY_NAMES.iter().enumerate() {
            if o.samples[i] > 0 {
                self.add(name, o.max[i]);
                self.samples[i] += o.samples[i] - 1;
            }
        }
    }
}

fn verify_instance(inst: &ProblemInstance, cfg: &VerifyConfig) -> Result<Acc> {
    let mut acc = Acc::new();
    let explicit = matches!(inst.lmo, LmoDescriptor::Explicit { .. });
    if explicit && !cfg.inject_fault {
        let eq = verify_kelley_fcfw_equivalence(inst, initial_bundle(inst)?, 60)?;
        acc.add("kelley_fcfw_x", eq.max_x_residual);
        acc.add("kelley_fcfw_cut_ids", eq.max_cut_id_mismatch as f64);
    }
    if inst.objective.mu_g() > 0.0 {
        let k = run_kelley(inst, cfg.epsilon, initial_bundle(inst)?, 200)?;
        for r in &k.trace {
            if let (Some(d), Some(fw)) = (&r.duality_residuals, r.fw_gap_dual) {
                acc.add("gap_identity", (r.model_gap - fw).abs());
                acc.add("gradient_link", d.gradient_link);
                acc.add("strong_duality", d.strong_duality);
                acc.add("lower_model", d.lower_model);
            }
        }
    }
    let config = SolverConfig::new(cfg.epsilon).with_rho(cfg.rho).with_max_iter(cfg.max_iter).with_diagnostics(true);
    for policy in PolicyKind::ALL {
        let mut bump = |s: &mut crate::subqp::DualSolution| s.beta += 1e-3;
        let hooks = Hooks { perturb: cfg.inject_fault.then_some(&mut bump as &mut dyn FnMut(&mut _)), enforce: false };
        let r = run_mpbfa_with(inst, &config.clone().with_policy(policy), initial_bundle(inst)?, hooks)?;
        for rec in &r.trace {
            let Some(d) = &rec.duality_residuals else { continue };
            acc.add("moreau_correspondence", d.moreau_correspondence);
            acc.add("gap_identity", d.gap_identity);
            acc.add("prox_dual", d.prox_dual);
            acc.add("gradient_link", d.gradient_link);
            acc.add("strong_duality", d.strong_duality);
            acc.add("lower_model", d.lower_model);
            if let Some(a) = d.alm {
                acc.add("alm", a);
            }
        }
    }
    Ok(acc)
}

/// `α` closed form against the smallest Hessian eigenvalue, on random
/// `(L_g, ρ)` pairs plus `(1, 2)`.
fn alpha_residuals(pairs: usize, acc: &mut Acc) -> Result<()> {
    let mut pts = vec![(1.0, 2.0)];
    pts.extend((0..pairs as u64).map(|i| (10f64.powf(2.0 * uniform(77, 1, i)), 10f64.powf(2.0 * uniform(77, 2, i)))));
    for (l, rho) in pts {
        let e = alpha_by_eigen(l, rho, 2)?;
        acc.add("alpha_eigen", (e - alpha_constant(l, rho)).abs() / (1.0 + e.abs()));
    }
    Ok(())
}

pub fn verify_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let instances = cfg.instances()?;
    let count = instances.len();
    let accs = par_map(cfg.jobs, instances, |inst| verify_instance(&inst, cfg));
    let mut acc = Acc::new();
    for a in accs {
        acc.merge(a?);
    }
    alpha_residuals(cfg.alpha_pairs, &mut acc)?;
    let identities: Vec<IdentityRow> = IDENTITY_NAMES
        .iter()
        .enumerate()
        .filter(|(i, _)| acc.samples[*i] > 0)
        .map(|(i, name)| {
            let limit = limit_of(name);
            IdentityRow {
                name: name.to_string(),
                max_residual: acc.max[i],
                limit,
                samples: acc.samples[i],
                passed: acc.max[i] <= limit,
            }
        })
        .collect();
    let passed = identities.iter().all(|r| r.passed);
    Ok(VerifyReport { instances: count, identities, passed })
}
