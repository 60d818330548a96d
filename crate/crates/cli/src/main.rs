//! `bundlekit` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bundlekit_core::duality::constants_report;
use bundlekit_core::harness::{self, VerifyConfig};
use bundlekit_core::io;
use bundlekit_core::kelley_fcfw::{initial_bundle, run_kelley, KelleyStop};
use bundlekit_core::model::{PolicyKind, SolverConfig};
use bundlekit_core::mpbfa::{monitor_bounds, run_mpbfa};
use bundlekit_core::synth::{generate, SynthSpec};
use bundlekit_core::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

const EXIT_INPUT: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IDENTITY: u8 = 4;

#[derive(Parser)]
#[command(name = "bundlekit", version, about = "Kelley, FCFW and proximal bundle solvers for quadratic plus max-affine problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Target accuracy.
    #[arg(long, default_value_t = 2e-3)]
    epsilon: f64,
    /// Null-step threshold; defaults to epsilon/2.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value = "active_cut")]
    policy: PolicyKind,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for batch commands (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, env = "BUNDLEKIT_OUT_DIR", default_value = "bundlekit-out")]
    out_dir: PathBuf,
    /// Check the duality identities every iteration.
    #[arg(long)]
    diagnostics: bool,
}

impl Common {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.epsilon).with_rho(self.rho).with_policy(self.policy).with_diagnostics(self.diagnostics);
        if let Some(d) = self.delta {
            c = c.with_delta(d);
        }
        if let Some(m) = self.max_iter {
            c = c.with_max_iter(m);
        }
        c
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the proximal bundle method on an instance file.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run Kelley's method (needs a strongly convex quadratic).
    Kelley {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve one synthetic instance under all three policies.
    ComparePolicies {
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Constraint count; defaults to n/5.
        #[arg(long)]
        m: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Runtime over dimensions and seeds for all three policies.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = vec![25, 50, 100])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the identity suite.
    Verify {
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 5, 10])]
        sizes: Vec<usize>,
        /// Perturb every subproblem β by 1e-3 (must fail).
        #[arg(long)]
        inject_fault: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic polytope instance.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Input(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::AtIteration { source, .. } => root_cause(source),
        other => other,
    }
}

fn exit_for(e: &Error) -> u8 {
    match root_cause(e) {
        Error::IdentityViolation { .. } => EXIT_IDENTITY,
        Error::Io(_) | Error::Json(_) | Error::Dimension(_) | Error::Invalid(_) | Error::Config(_) | Error::InfeasibleSynth(_) => {
            EXIT_INPUT
        }
        _ => EXIT_SOLVER,
    }
}

fn load(path: &Path) -> Result<bundlekit_core::model::ProblemInstance, Failure> {
    io::read_instance(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<&Path, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn print(v: &serde_json::Value) {
    // a closed pipe is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn run(cmd: Cmd) -> Result<u8, Failure> {
    match cmd {
        Cmd::Solve { instance, common } => {
            let inst = load(&instance)?;
            let cfg = common.config();
            let r = run_mpbfa(&inst, &cfg)?;
            let dir = out_dir(&common.out_dir)?;
            io::write_trace_file(&dir.join("trace.csv"), &r.trace, Some(r.policy))?;
            let x_star = inst.reference_opt.as_ref().map(|r| r.x_star.as_slice());
            let constants = constants_report(&inst.lmo, &inst.objective, cfg.rho, cfg.epsilon, &inst.x0, x_star);
            let monitor = match &inst.reference_opt {
                Some(rf) => Some(monitor_bounds(&inst, &r, &constants, rf.h_star)?),
                None => None,
            };
            let out = json!({
                "best_serious_value": r.best_serious_value,
                "best_serious_x": r.best_serious_x,
                "terminated_by": r.terminated_by,
                "certificate": r.certificate,
                "radius_bound": r.radius_bound,
                "radius_is_heuristic": r.radius_is_heuristic,
                "policy": r.policy,
                "iterations": r.iterations,
                "serious": r.serious_count,
                "null": r.null_count,
                "longest_null_run": r.longest_null_run,
                "max_bundle": r.max_bundle,
                "constants": constants,
                "bounds": monitor,
            });
            write_json(&dir.join("result.json"), &out)?;
            print(&out);
            Ok(if r.converged() { 0 } else { EXIT_NO_CONVERGENCE })
        }
        Cmd::Kelley { instance, common } => {
            let inst = load(&instance)?;
            let r = run_kelley(&inst, common.epsilon, initial_bundle(&inst)?, common.max_iter.unwrap_or(10_000))?;
            let dir = out_dir(&common.out_dir)?;
            io::write_trace_file(&dir.join("trace.csv"), &r.trace, None)?;
            let out = json!({
                "value": r.value,
                "x": r.x,
                "iterations": r.iterations,
                "terminated_by": r.terminated_by,
            });
            write_json(&dir.join("result.json"), &out)?;
            print(&out);
            Ok(if r.terminated_by == KelleyStop::MaxIter { EXIT_NO_CONVERGENCE } else { 0 })
        }
        Cmd::ComparePolicies { n, m, common } => {
            let mut spec = SynthSpec::new(n, common.seed);
            if let Some(m) = m {
                spec = spec.with_m(m);
            }
            let inst = generate(&spec)?;
            let dir = out_dir(&common.out_dir)?;
            let path = dir.join(format!("instance_n{n}_m{}_s{}.json", spec.m, common.seed));
            io::write_instance(&path, &inst)?;
            let reference = harness::cached_reference(&inst, Some(&path))?;
            let c = harness::compare_policies(&inst, reference, &common.config(), common.jobs)?;
            c.write_bundle_csv(fs::File::create(dir.join("bundle_sizes.csv")).map_err(Error::from)?)?;
            c.write_gap_csv(fs::File::create(dir.join("gaps.csv")).map_err(Error::from)?)?;
            let mut order: Vec<_> = c.report.rows.iter().map(|r| (r.wall_time_ns, r.policy)).collect();
            order.sort_by_key(|(t, _)| *t);
            let out = json!({
                "h_star": c.reference.h_star,
                "report": c.report,
                "runtime_order": order.iter().map(|(_, p)| *p).collect::<Vec<_>>(),
            });
            write_json(&dir.join("compare_report.json"), &out)?;
            print(&out);
            Ok(if c.report.all_converged() { 0 } else { EXIT_NO_CONVERGENCE })
        }
        Cmd::Scaling { n_list, seeds, common } => {
            let seed_list: Vec<u64> = (common.seed..common.seed + seeds).collect();
            let rep = harness::scaling(&n_list, &seed_list, &common.config(), common.jobs)?;
            let dir = out_dir(&common.out_dir)?;
            let mut w = csv::Writer::from_path(dir.join("scaling_runs.csv")).map_err(Error::from)?;
            w.write_record(["n", "m", "seed", "policy", "iterations", "serious", "null", "max_bundle", "final_gap", "converged", "wall_time_ns"])
                .map_err(Error::from)?;
            for r in &rep.rows {
                w.write_record([
                    r.n.to_string(),
                    r.m.to_string(),
                    r.seed.to_string(),
                    r.policy.to_string(),
                    r.iterations.to_string(),
                    r.serious.to_string(),
                    r.null.to_string(),
                    r.max_bundle.to_string(),
                    r.final_gap.to_string(),
                    r.converged.to_string(),
                    r.wall_time_ns.to_string(),
                ])
                .map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
            let out = serde_json::to_value(&rep).map_err(Error::from)?;
            write_json(&dir.join("scaling_report.json"), &out)?;
            print(&json!({ "aggregates": rep.aggregates }));
            Ok(if rep.all_converged() { 0 } else { EXIT_NO_CONVERGENCE })
        }
        Cmd::Verify { seeds, sizes, inject_fault, common } => {
            let cfg = VerifyConfig {
                seeds: (common.seed..common.seed + seeds).collect(),
                sizes,
                rho: common.rho,
                inject_fault,
                jobs: common.jobs,
                ..VerifyConfig::default()
            };
            let rep = harness::verify_suite(&cfg)?;
            let out = serde_json::to_value(&rep).map_err(Error::from)?;
            print(&out);
            for v in rep.violations() {
                eprintln!("identity violated: {} max residual {:e} > {:e}", v.name, v.max_residual, v.limit);
            }
            Ok(if rep.passed { 0 } else { EXIT_IDENTITY })
        }
        Cmd::Generate { n, m, out, seed } => {
            let mut spec = SynthSpec::new(n, seed);
            if let Some(m) = m {
                spec = spec.with_m(m);
            }
            let inst = generate(&spec)?;
            match out {
                Some(p) => io::write_instance(&p, &inst)?,
                None => {
                    let _ = writeln!(std::io::stdout(), "{}", io::instance_to_json(&inst)?);
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
