//! Acceptance criteria 1–8. Each test writes one `criterion N: PASS|FAIL`
//! line to stderr (unbuffered, so it survives output capture).

use std::io::Write;
use std::time::{Duration, Instant};

use bundlekit_core::duality::{alpha_by_eigen, alpha_constant, constants_report};
use bundlekit_core::harness::{compare_policies, reference_optimum, scaling, verify_suite, Comparison, VerifyConfig};
use bundlekit_core::io::write_trace_csv;
use bundlekit_core::kelley_fcfw::{initial_bundle, run_kelley};
use bundlekit_core::model::{IterationRecord, PolicyKind, SolverConfig, StepType};
use bundlekit_core::mpbfa::{monitor_bounds, run_mpbfa};
use bundlekit_core::synth::{generate, generate_explicit, uniform, ExplicitSpec, SynthSpec};

const EPS: f64 = 2e-3;

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_identity_suite() {
    let t = Instant::now();
    let cfg = VerifyConfig::default();
    let count = cfg.instances().unwrap().len();
    let rep = verify_suite(&cfg).unwrap();
    let elapsed = t.elapsed();
    let needed = ["kelley_fcfw_x", "kelley_fcfw_cut_ids", "gap_identity", "prox_dual", "moreau_correspondence", "alm", "gradient_link"];
    let all_present = needed.iter().all(|n| rep.get(n).is_some_and(|r| r.samples > 0));
    let detail: Vec<String> = rep.identities.iter().map(|r| format!("{}={:.1e}", r.name, r.max_residual)).collect();
    let pass = count == 20 && rep.passed && all_present && elapsed < Duration::from_secs(120);
    report(1, pass, &format!("{count} instances in {:.1}s; {}", elapsed.as_secs_f64(), detail.join(" ")));
}

#[test]
fn criterion_2_alpha_cross_check() {
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let l = 10f64.powf(2.0 * uniform(2024, 1, i));
        let rho = 10f64.powf(2.0 * uniform(2024, 2, i));
        let e = alpha_by_eigen(l, rho, 3).unwrap();
        worst = worst.max((e - alpha_constant(l, rho)).abs());
    }
    let analytic = 1.0 - 2f64.sqrt() / 2.0;
    let a = (alpha_constant(1.0, 2.0) - analytic).abs();
    let b = (alpha_by_eigen(1.0, 2.0, 1).unwrap() - analytic).abs();
    report(2, worst <= 1e-9 && a <= 1e-9 && b <= 1e-9, &format!("max |closed form - eigen| {worst:.1e}; (L=1, rho=2) residuals {a:.1e}, {b:.1e}"));
}

#[test]
fn criterion_3_strong_duality() {
    let rep = verify_suite(&VerifyConfig::default()).unwrap();
    let sd = rep.get("strong_duality").unwrap();
    let lm = rep.get("lower_model").unwrap();
    let pass = sd.max_residual <= 1e-8 && lm.max_residual <= 1e-8;
    report(
        3,
        pass,
        &format!("{} solves: relative |primal-dual| {:.1e}, |f_k(x) - (w.x + beta)| {:.1e}", sd.samples, sd.max_residual, lm.max_residual),
    );
}

#[test]
fn criterion_4_serious_step_bound() {
    let t = Instant::now();
    let mut worst_ratio = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..50u64 {
        let inst = generate(&SynthSpec::new(50, seed)).unwrap();
        let reference = reference_optimum(&inst).unwrap();
        let cfg = SolverConfig::new(EPS).with_rho(1.0);
        let r = run_mpbfa(&inst, &cfg).unwrap();
        let c = constants_report(&inst.lmo, &inst.objective, 1.0, EPS, &inst.x0, Some(&reference.x_star));
        let m = monitor_bounds(&inst, &r, &c, reference.h_star).unwrap();
        match m.observed_serious {
            Some(o) if m.serious_ok => worst_ratio = worst_ratio.max(o as f64 / m.serious_bound),
            _ => failures.push(seed),
        }
    }
    let elapsed = t.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(600);
    report(4, pass, &format!("50 instances, max observed/bound {worst_ratio:.3}, failing seeds {failures:?}, {:.1}s", elapsed.as_secs_f64()));
}

#[test]
fn criterion_5_solution_quality() {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut iters = [0usize; 3];
    for seed in 0..20u64 {
        let inst = generate(&SynthSpec::new(50, seed).with_m(10)).unwrap();
        let reference = reference_optimum(&inst).unwrap();
        let c = compare_policies(&inst, reference, &SolverConfig::new(EPS).with_rho(1.0), 0).unwrap();
        for (i, row) in c.report.rows.iter().enumerate() {
            worst = worst.max(row.final_gap);
            iters[i] += row.iterations;
            if !row.converged || row.final_gap > EPS {
                bad.push(format!("seed {seed} {} (gap {:.1e}, converged {})", row.policy, row.final_gap, row.converged));
            }
        }
    }
    report(
        5,
        bad.is_empty(),
        &format!("60 runs, worst gap {worst:.2e}; total iterations all/single/active {iters:?}; failures {bad:?}"),
    );
}

/// Contiguous geometric decay once the gap is below 1e-2.
fn geometric_tail(gaps: &[f64]) -> bool {
    let start = gaps.iter().position(|g| *g < 1e-2);
    match start {
        None => true,
        Some(s) => (s..gaps.len()).filter(|k| k + 10 < gaps.len()).all(|k| gaps[k + 10] <= 0.9 * gaps[k]),
    }
}

#[test]
fn criterion_6_kelley_rate() {
    let mut reached = 0;
    let mut geometric = 0;
    let mut max_iters = 0;
    for seed in 0..20u64 {
        let n = 2 + (seed as usize % 9);
        let inst = generate_explicit(&ExplicitSpec { n, cuts: 30, seed: 100 + seed, mu: 1.0, singular: false }).unwrap();
        assert!(inst.objective.mu_g() >= 1.0);
        let r = run_kelley(&inst, 1e-6, initial_bundle(&inst).unwrap(), 200).unwrap();
        let gaps: Vec<f64> = r.trace.iter().map(|t| t.model_gap).collect();
        if gaps.iter().any(|g| *g < 1e-6) {
            reached += 1;
        }
        if geometric_tail(&gaps) {
            geometric += 1;
        }
        max_iters = max_iters.max(r.iterations);
    }
    let pass = reached == 20 && geometric >= 18;
    report(6, pass, &format!("gap < 1e-6 within 200 iterations on {reached}/20 (max {max_iters} iterations); geometric tail on {geometric}/20"));
}

fn check_policy_shapes(c: &Comparison, n: usize) -> Vec<String> {
    let mut problems = Vec::new();
    for s in &c.series {
        let trace: &[IterationRecord] = &s.result.trace;
        match s.policy {
            PolicyKind::AllCut => {
                if !s.bundle_sizes.windows(2).all(|w| w[1] >= w[0]) {
                    problems.push("all_cut bundle size decreased".to_string());
                }
            }
            PolicyKind::SingleCut => {
                if trace.iter().any(|r| r.step_type == StepType::Serious && r.bundle_size_post != 1) {
                    problems.push("single_cut bundle != 1 after a serious step".to_string());
                }
            }
            PolicyKind::ActiveCut => {
                if let Some(m) = s.bundle_sizes.iter().max().filter(|m| **m > n + 3) {
                    problems.push(format!("active_cut bundle {m} > n + 3"));
                }
            }
        }
        if s.gaps.last().is_none_or(|g| *g > EPS) {
            problems.push(format!("{} gap series ends at {:?}", s.policy, s.gaps.last()));
        }
    }
    problems
}

#[test]
fn criterion_7_policy_shapes() {
    let budget = Duration::from_secs(1800);
    let mut notes = Vec::new();
    let mut outcome = None;
    for (n, m) in [(200usize, 40usize), (100, 20)] {
        let t = Instant::now();
        let inst = generate(&SynthSpec::new(n, 1).with_m(m)).unwrap();
        let reference = reference_optimum(&inst).unwrap();
        let c = compare_policies(&inst, reference, &SolverConfig::new(EPS).with_rho(1.0), 0).unwrap();
        let elapsed = t.elapsed();
        if elapsed > budget {
            notes.push(format!("n={n} took {:.0}s, over budget; falling back", elapsed.as_secs_f64()));
            continue;
        }
        let mut order: Vec<(u64, PolicyKind)> = c.report.rows.iter().map(|r| (r.wall_time_ns, r.policy)).collect();
        order.sort_by_key(|o| o.0);
        let sizes: Vec<String> = c.report.rows.iter().map(|r| format!("{}:{}it/max{}", r.policy, r.iterations, r.max_bundle)).collect();
        notes.push(format!(
            "n={n} m={m} in {:.1}s; {}; runtime order {:?}",
            elapsed.as_secs_f64(),
            sizes.join(" "),
            order.iter().map(|o| o.1.as_str()).collect::<Vec<_>>()
        ));
        outcome = Some(check_policy_shapes(&c, n));
        break;
    }
    let problems = outcome.unwrap_or_else(|| vec!["no size finished within budget".into()]);
    report(7, problems.is_empty(), &format!("{}; problems {problems:?}", notes.join("; ")));
}

fn traces_without_timing(c: &Comparison) -> Vec<u8> {
    let mut buf = Vec::new();
    for s in &c.series {
        let t: Vec<IterationRecord> = s.result.trace.iter().cloned().map(|mut r| {
            r.wall_time_ns = 0;
            r
        }).collect();
        write_trace_csv(&mut buf, &t, Some(s.policy)).unwrap();
    }
    buf
}

#[test]
fn criterion_8_determinism() {
    let run = |jobs| {
        let inst = generate(&SynthSpec::new(40, 9)).unwrap();
        let reference = reference_optimum(&inst).unwrap();
        compare_policies(&inst, reference, &SolverConfig::new(EPS), jobs).unwrap()
    };
    let (a, b) = (run(1), run(4));
    let traces_equal = traces_without_timing(&a) == traces_without_timing(&b);
    let reports_equal = serde_json::to_string(&a.report.without_timing()).unwrap() == serde_json::to_string(&b.report.without_timing()).unwrap();
    let cfg = SolverConfig::new(EPS);
    let s1 = scaling(&[15, 20], &[0, 1, 2], &cfg, 1).unwrap();
    let s2 = scaling(&[15, 20], &[0, 1, 2], &cfg, 3).unwrap();
    let scaling_equal = serde_json::to_string(&s1.without_timing()).unwrap() == serde_json::to_string(&s2.without_timing()).unwrap();
    let v = VerifyConfig { seeds: vec![0, 1], ..VerifyConfig::default() };
    let verify_equal = verify_suite(&v).unwrap() == verify_suite(&VerifyConfig { jobs: 1, ..v }).unwrap();
    let pass = traces_equal && reports_equal && scaling_equal && verify_equal;
    report(
        8,
        pass,
        &format!("traces {traces_equal}, compare report {reports_equal}, scaling report {scaling_equal}, verify report {verify_equal}"),
    );
}
