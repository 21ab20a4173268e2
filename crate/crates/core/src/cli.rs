//! The `yieldsweep` command line.
//!
//! Every command writes its CSV reports and a `summary.json` into the
//! output directory and prints one line per check. Exit codes: 0 all checks
//! pass, 1 I/O failure, 2 parse or assumption failure, 3 solver failure,
//! 4 a check failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{cauchy_study, mollify_threshold};
use crate::constraint::{sample_times, verify_condition_h, ThresholdRegularity};
use crate::coupled::{march, measure_contraction, perturbed_probes, Coupling, Trajectory};
use crate::diagnostics::{
    energy_report, invariant_suite, resolvent_check, shrink_transport_check, vi_residual, weak_vi_residual, Check,
    SuiteConfig, Summary,
};
use crate::error::{Error, Result};
use crate::fields::{random, write_vtk};
use crate::oracle::{acceptance_cases, order_study, production_sweep, reference_trajectory, stop_operator_exact, unit_deviator};
use crate::scenario::{load_scenario, Scenario, SnapshotFormat};
use crate::Regime;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Random test tensors per step for the pointwise inequality.
const VI_TESTS: usize = 50;
/// Random feasible paths for the time-integrated inequality.
const WEAK_VI_PATHS: usize = 20;
const VI_TOL: f64 = 1e-8;
const WEAK_VI_TOL: f64 = 1e-6;
const PROBES_PER_WINDOW: usize = 5;
const PROBE_SCALE: f64 = 0.1;
const TRANSPORT_SAMPLES: usize = 500;
const DEFAULT_ORACLE_DTS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Debug, Parser)]
#[command(name = "yieldsweep", version, about = "Coupled velocity-stress plasticity with a moving yield threshold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file; may also be given as the positional argument.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Step size override; `oracle` takes a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    dt: Vec<f64>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    snapshots: Option<SnapshotFormat>,
    /// Fraction of the contraction window bound used as window length.
    #[arg(long, global = true)]
    safety: Option<f64>,
    #[arg(long, global = true, value_enum)]
    regime: Option<Regime>,
    /// Project an infeasible initial stress onto K(0) instead of failing.
    #[arg(long, global = true)]
    project_initial: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March a scenario; write the trajectory and check both inequalities.
    Run {
        /// Scenario file (same as `--scenario`)
        #[arg(value_name = "SCENARIO")]
        path: Option<PathBuf>,
    },
    /// Gauss–Green, Korn and projection invariants on several grids.
    Verify,
    /// Transport inequalities of the constraint family.
    ConditionH {
        /// Scenario file (same as `--scenario`)
        #[arg(value_name = "SCENARIO")]
        path: Option<PathBuf>,
    },
    /// Step refinement, plus the smoothing study for a continuous threshold.
    Convergence {
        /// Scenario file (same as `--scenario`)
        #[arg(value_name = "SCENARIO")]
        path: Option<PathBuf>,
    },
    /// Homogeneous sweeps against the exact stop operator.
    Oracle,
    /// Measured Lipschitz ratios of the window map.
    Contraction {
        /// Scenario file (same as `--scenario`)
        #[arg(value_name = "SCENARIO")]
        path: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ASSUMPTION } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok((summary, path)) => {
            for c in &summary.checks {
                println!("{c}");
            }
            let verdict = if summary.pass { "PASS" } else { "FAIL" };
            println!("{verdict} {} ({} checks), summary in {}", summary.command, summary.checks.len(), path.display());
            if summary.pass {
                EXIT_PASS
            } else {
                EXIT_CHECK
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            let report = serde_json::json!({ "error": kind(&e), "exit_code": code, "message": e.to_string() });
            eprintln!("{report}");
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Io(_) => EXIT_IO,
        Error::ProxNoConvergence { .. } | Error::LinearNoConvergence { .. } | Error::PicardNoConvergence { .. } => {
            EXIT_SOLVER
        }
        Error::SuiteFailure { .. } => EXIT_CHECK,
        _ => EXIT_ASSUMPTION,
    }
}

fn kind(e: &Error) -> &'static str {
    match e.root() {
        Error::NonPositiveThreshold(_) => "non_positive_threshold",
        Error::GridMismatch => "grid_mismatch",
        Error::InvalidGrid(_) => "invalid_grid",
        Error::ThresholdViolation { .. } => "threshold_violation",
        Error::WindowTooWide { .. } => "window_too_wide",
        Error::MissingDerivative(_) => "missing_derivative",
        Error::ProxNoConvergence { .. } => "prox_no_convergence",
        Error::LinearNoConvergence { .. } => "linear_no_convergence",
        Error::PicardNoConvergence { .. } => "picard_no_convergence",
        Error::BadParameters(_) => "bad_parameters",
        Error::BadPlan(_) => "bad_plan",
        Error::DegenerateRadius(_) => "degenerate_radius",
        Error::Parse(_) => "parse_error",
        Error::AssumptionViolation { .. } => "assumption_violation",
        Error::SuiteFailure { .. } => "suite_failure",
        Error::Step { .. } => "step",
        Error::Io(_) => "io",
    }
}

fn execute(cli: &Cli) -> Result<(Summary, PathBuf)> {
    let c = &cli.common;
    let (summary, out) = match &cli.command {
        Command::Run { path } => with_scenario(c, path, run)?,
        Command::ConditionH { path } => with_scenario(c, path, condition_h)?,
        Command::Convergence { path } => with_scenario(c, path, convergence)?,
        Command::Contraction { path } => with_scenario(c, path, contraction)?,
        Command::Verify => {
            let out = plain_out(c)?;
            (verify(c.seed.unwrap_or(SuiteConfig::default().seed), &out)?, out)
        }
        Command::Oracle => {
            let out = plain_out(c)?;
            let dts = if c.dt.is_empty() { DEFAULT_ORACLE_DTS.to_vec() } else { c.dt.clone() };
            (oracle(&dts, &out)?, out)
        }
    };
    let path = out.join("summary.json");
    summary.write_json(&path)?;
    Ok((summary, path))
}

fn plain_out(c: &Common) -> Result<PathBuf> {
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    Ok(out)
}

fn with_scenario(
    c: &Common,
    positional: &Option<PathBuf>,
    command: fn(&Scenario, &Path) -> Result<Summary>,
) -> Result<(Summary, PathBuf)> {
    let path = positional
        .as_ref()
        .or(c.scenario.as_ref())
        .ok_or_else(|| Error::Parse("this command needs a scenario file".into()))?;
    let mut sc = load_scenario(path)?;
    apply_overrides(&mut sc, c)?;
    let out = sc.output.dir.clone();
    std::fs::create_dir_all(&out)?;
    sc.write(&out.join("scenario.toml"))?;
    Ok((command(&sc, &out)?, out))
}

fn apply_overrides(sc: &mut Scenario, c: &Common) -> Result<()> {
    match c.dt.as_slice() {
        [] => {}
        [dt] => sc.time.dt = *dt,
        _ => return Err(Error::BadParameters("--dt takes a single value for this command".into())),
    }
    if let Some(seed) = c.seed {
        sc.seed = seed;
    }
    if let Some(out) = &c.out {
        sc.output.dir = out.clone();
    }
    if let Some(s) = c.snapshots {
        sc.output.snapshots = s;
    }
    if let Some(s) = c.safety {
        sc.solver.safety = s;
    }
    if let Some(r) = c.regime {
        sc.physics.regime = r;
    }
    if c.project_initial {
        sc.initial.project = true;
    }
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn max_finite(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

fn max_picard_ratio(traj: &Trajectory) -> f64 {
    max_finite(traj.windows.iter().flat_map(|w| w.ratios.iter().copied()))
}

fn run(sc: &Scenario, out: &Path) -> Result<Summary> {
    let problem = sc.problem()?;
    let traj = march(&problem, true)?;
    traj.write_csv(&out.join("trajectory.csv"))?;
    if sc.output.snapshots == SnapshotFormat::Vtk {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        let last = traj.states.len() - 1;
        for (k, s) in traj.states.iter().enumerate().filter(|(k, _)| k % sc.output.cadence == 0 || *k == last) {
            write_vtk(&dir.join(format!("step_{k:05}.vtk")), s.t, &s.v, &s.sigma)?;
        }
    }
    let strong = vi_residual(&problem, &traj, VI_TESTS, sc.seed)?;
    strong.write_csv(&out.join("vi_residual.csv"))?;
    let weak = weak_vi_residual(&problem, &traj, WEAK_VI_PATHS, sc.seed)?;
    weak.write_csv(&out.join("weak_vi_residual.csv"))?;
    let energy = energy_report(&traj);
    energy.write_csv(&out.join("energy.csv"))?;

    let max_violation = traj.records.iter().map(|r| r.max_violation).fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_most("max_violation", max_violation, problem.config.membership_tol),
        Check::at_least("vi_min_normalized_slack", strong.min_normalized, -VI_TOL)
            .with_detail(format!("{} at step {}", strong.kind, strong.worst_step)),
        Check::at_least("weak_vi_min_normalized_slack", weak.min_normalized, -WEAK_VI_TOL)
            .with_detail(format!("worst step {}", weak.worst_step)),
        Check::flag(
            "energy_finite",
            energy.sup_e1.is_finite() && energy.sup_e3.is_finite(),
            format!("sup e1 {:e}, sup e3 {:e}, ratio e1 {:e}", energy.sup_e1, energy.sup_e3, energy.ratio_e1),
        ),
    ];
    if problem.config.coupling == Coupling::Picard {
        checks.push(Check::below("max_picard_ratio", max_picard_ratio(&traj), 1.0));
    }
    Ok(Summary::new("run", checks))
}

fn verify(seed: u64, out: &Path) -> Result<Summary> {
    let report = invariant_suite(&SuiteConfig { seed, ..SuiteConfig::default() })?;
    write_rows(&out.join("suite.csv"), &report.entries)?;
    let checks = report
        .entries
        .iter()
        .map(|e| Check::at_most(&format!("{} {}", e.invariant, e.instance), e.worst, e.tolerance))
        .collect();
    Ok(Summary::new("verify", checks))
}

#[derive(Serialize)]
struct AlphaBetaRow {
    t: f64,
    alpha: f64,
    beta: f64,
}

fn condition_h(sc: &Scenario, out: &Path) -> Result<Summary> {
    let problem = sc.problem()?;
    let cs = &problem.constraint;
    if cs.threshold().regularity() == ThresholdRegularity::Continuous {
        return Err(Error::AssumptionViolation {
            assumption: "A4".into(),
            detail: "condition (H) needs the threshold rate; it is tagged continuous (use `convergence`)".into(),
        });
    }
    let (horizon, regime, kappa) = (problem.horizon, problem.regime, problem.effective_kappa());
    let times = sample_times(horizon, 8);
    let pairs: Vec<(f64, f64)> =
        times.iter().enumerate().flat_map(|(i, &s)| times[i + 1..].iter().map(move |&t| (s, t))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let spread = 2.0 * (2.0 * cs.threshold().c2()).sqrt();
    let samples: Vec<_> = (0..8).map(|_| random::gaussian_tensor_field(*cs.grid(), &mut rng, spread)).collect();
    let report = verify_condition_h(cs, &pairs, &samples, kappa, regime, horizon)?;

    let r = samples
        .iter()
        .map(|s| cs.project(s, 0.0).map(|p| p.norm_hh()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let data = cs.condition_h_data(&sample_times(horizon, 64), r, kappa, regime, cs.shift_bounds(horizon, 64))?;
    let rows = data.times.iter().zip(&data.alpha).zip(&data.beta).map(|((&t, &alpha), &beta)| AlphaBetaRow { t, alpha, beta });
    write_rows(&out.join("alpha_beta.csv"), rows)?;

    let transport = shrink_transport_check(cs, horizon, TRANSPORT_SAMPLES, sc.seed)?;
    let cfg = problem.config;
    let resolvent =
        resolvent_check(cs, 0.5 * horizon, sc.physics.lambda, kappa, 4, 10, (cfg.prox_tol, cfg.prox_max_iters), sc.seed)?;
    let checks = vec![
        Check::flag(
            "condition_h",
            report.pass,
            format!(
                "{} checks, worst slacks {:e} / {:e}, {} failures",
                report.checks, report.worst_h1_slack, report.worst_h2_slack, report.failures
            ),
        ),
        Check::at_most("transport_violation", transport.worst_violation, 1e-12)
            .with_detail(format!("{} samples, {} outside the transport window", transport.samples, transport.skipped_wide)),
        Check::at_least("resolvent_normalized_slack", resolvent.worst_normalized_slack, -VI_TOL)
            .with_detail(format!("lambda {}", sc.physics.lambda)),
    ];
    Ok(Summary::new("condition-h", checks))
}

#[derive(Debug, Clone, Copy, Serialize)]
struct RefinementRow {
    dt: f64,
    /// Sup-ℍ stress gap to the run at `dt/2`.
    sup_gap: f64,
    constant: f64,
}

fn convergence(sc: &Scenario, out: &Path) -> Result<Summary> {
    let base = sc.problem()?;
    let dts = [base.dt, base.dt / 2.0, base.dt / 4.0];
    let runs = dts
        .iter()
        .map(|&dt| march(&crate::coupled::Problem { dt, ..base.clone() }, true))
        .collect::<Result<Vec<_>>>()?;
    let rows = runs
        .windows(2)
        .zip(dts)
        .map(|(w, dt)| {
            let sup_gap = w[0].sup_stress_gap(&w[1])?;
            Ok(RefinementRow { dt, sup_gap, constant: sup_gap / dt })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&out.join("refinement.csv"), &rows)?;
    let (c0, c1) = (rows[0].constant, rows[1].constant);
    let spread = if c0 > 0.0 && c1 > 0.0 { (c0 / c1).max(c1 / c0) } else { f64::INFINITY };
    let order = (rows[0].sup_gap / rows[1].sup_gap).log2();
    let mut checks = vec![Check::at_most("refinement_constant_spread", spread, 2.0)
        .with_detail(format!("C = {c0:e}, {c1:e}; observed order {order:.3}"))];
    if rows.iter().all(|r| r.sup_gap == 0.0) {
        checks = vec![Check::flag("refinement_constant_spread", true, "identical runs")];
    }

    if base.constraint.threshold().regularity() == ThresholdRegularity::Continuous {
        let plan = sc.mollification_plan()?;
        let report = cauchy_study(&base, &plan)?;
        report.write_csv(&out.join("cauchy.csv"))?;
        let grid = *base.constraint.grid();
        let times = sample_times(base.horizon, 256);
        let mut valid = true;
        for &n in &plan.indices {
            let g = mollify_threshold(&plan, n)?;
            valid &= g.c1() == plan.base.c1() && g.c2() == plan.base.c2() && g.validate(&grid, &times).is_ok();
        }
        let init = report.rows.iter().map(|r| r.initial_violation).fold(0.0, f64::max);
        checks.extend([
            Check::flag("cauchy_gaps_strictly_decreasing", report.d_strictly_decreasing, format!("{:?}", report.rows.iter().map(|r| r.d_n).collect::<Vec<_>>())),
            Check::flag("threshold_gaps_nonincreasing", report.gaps_nonincreasing, ""),
            Check::flag("smoothed_thresholds_valid", valid, "bounds C1, C2 unchanged and met"),
            Check::at_most("smoothed_initial_violation", init, 1e-12),
            Check::flag(
                "finest_run_feasible",
                report.finest_feasible,
                format!("violation {:e} against the unsmoothed set, within sup|g_n - g|", report.finest_violation),
            ),
        ]);
    }
    Ok(Summary::new("convergence", checks))
}

#[derive(Serialize)]
struct OracleRow<'a> {
    case: &'a str,
    dt: f64,
    sup_error: f64,
    constant: f64,
}

fn oracle(dts: &[f64], out: &Path) -> Result<Summary> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (name, case) in acceptance_cases() {
        let study = order_study(name, &case, dts)?;
        rows.extend(study.rows.iter().map(|r| OracleRow { case: name, dt: r.dt, sup_error: r.sup_error, constant: r.constant }));
        let orders: Vec<String> = study.orders.iter().map(|o| format!("{o:.3}")).collect();
        checks.push(Check::at_least(&format!("{name} order"), study.min_order, 0.9).with_detail(format!("orders {}", orders.join(", "))));
        checks.push(Check::at_most(&format!("{name} error/dt"), study.max_constant, 2.0));

        let exact = stop_operator_exact(&case)?;
        let steps = (case.horizon / finest).round() as usize;
        let path: Vec<_> = (0..=steps)
            .map(|k| {
                let t = k as f64 * finest;
                (t, unit_deviator() * exact.eval(t))
            })
            .collect();
        let g = |t: f64| 0.5 * case.radius.eval(t).powi(2);
        reference_trajectory(&path, &g).write_csv(&out.join(format!("oracle_{name}_exact.csv")))?;
        production_sweep(&case, finest)?.1.write_csv(&out.join(format!("oracle_{name}_production.csv")))?;
    }
    write_rows(&out.join("oracle_orders.csv"), rows)?;
    Ok(Summary::new("oracle", checks))
}

#[derive(Serialize)]
struct ProbeRow {
    window: usize,
    t_start: f64,
    pair: usize,
    ratio: f64,
}

#[derive(Serialize)]
struct PicardRow {
    window: usize,
    iteration: usize,
    distance: f64,
}

fn contraction(sc: &Scenario, out: &Path) -> Result<Summary> {
    let problem = sc.problem()?;
    if problem.config.coupling != Coupling::Picard {
        return Err(Error::BadParameters("contraction needs Picard coupling".into()));
    }
    let traj = march(&problem, true)?;
    let probes = perturbed_probes(&problem, &traj, PROBES_PER_WINDOW, PROBE_SCALE, sc.seed)?;
    let report = measure_contraction(&problem, &traj, &probes)?;
    let probe_rows = report.windows.iter().flat_map(|w| {
        w.ratios.iter().enumerate().map(|(pair, &ratio)| ProbeRow { window: w.index, t_start: w.t_start, pair, ratio })
    });
    write_rows(&out.join("contraction.csv"), probe_rows)?;
    let picard_rows = traj.windows.iter().flat_map(|w| {
        w.distances.iter().enumerate().map(|(iteration, &distance)| PicardRow { window: w.index, iteration, distance })
    });
    write_rows(&out.join("picard.csv"), picard_rows)?;
    let checks = vec![
        Check::below("max_measured_ratio", report.max_ratio, 1.0).with_detail(format!(
            "window {:e}, predicted bound {:.4}, {} skipped",
            report.window_length, report.predicted_bound, report.skipped
        )),
        Check::below("max_picard_ratio", max_picard_ratio(&traj), 1.0),
    ];
    Ok(Summary::new("contraction", checks))
}
