//! Acceptance criteria 1–10, one PASS/FAIL line each. Exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use yieldsweep::approx::{cauchy_study, mollify_threshold};
use yieldsweep::constraint::{sample_times, verify_condition_h, ConstraintSet, ShiftField, ThresholdField, ThresholdRegularity};
use yieldsweep::coupled::{march, measure_contraction, perturbed_probes};
use yieldsweep::diagnostics::{
    energy_report, invariant_suite, shrink_transport_check, vi_residual, weak_vi_residual, SuiteConfig, SuiteEntry,
};
use yieldsweep::fields::{random, Grid, TensorField, VectorField};
use yieldsweep::oracle::{acceptance_cases, order_study};
use yieldsweep::scenario::{parse_scenario, Scenario};
use yieldsweep::tensor::SymTensor3;
use yieldsweep::{Regime, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenario(name: &str) -> Result<Scenario> {
    parse_scenario(&scenario_dir().join(format!("{name}.toml")))
}

fn worst_of<'a>(entries: impl Iterator<Item = &'a SuiteEntry>) -> (bool, f64, usize) {
    entries.fold((true, 0.0f64, 0), |(pass, worst, n), e| (pass && e.pass, worst.max(e.worst), n + 1))
}

fn gauss_green() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = SuiteConfig { korn_samples: 0, projection_pairs: 0, ..SuiteConfig::default() };
    let rep = invariant_suite(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let (pass, worst, grids) = worst_of(rep.entries.iter().filter(|e| e.invariant == "gauss_green"));
    Ok(Outcome::new(
        pass && grids == 4 && secs < 10.0,
        format!("{grids} grids x {} pairs, worst relative defect {worst:.2e}, {secs:.2}s", cfg.gauss_green_pairs),
    ))
}

fn korn() -> Result<Outcome> {
    let cfg = SuiteConfig { gauss_green_pairs: 0, projection_pairs: 0, ..SuiteConfig::default() };
    let rep = invariant_suite(&cfg)?;
    let (pass, worst, grids) = worst_of(rep.entries.iter().filter(|e| e.invariant == "korn"));
    Ok(Outcome::new(pass, format!("{grids} grids x {} fields, worst relative excess {worst:.2e}", cfg.korn_samples)))
}

type Vec9 = SVector<f64, 9>;

fn to_vec9(t: SymTensor3) -> Vec9 {
    let m = t.to_matrix();
    Vec9::from_fn(|k, _| m[k / 3][k % 3])
}

/// Nearest point of `{x : ½|xᴰ|² ≤ g}` in ℝ⁹ from the KKT system
/// `(I + μP)x = b`, `P` the deviatoric projector, with a generic LU solve per
/// multiplier and bisection on `μ` for the active constraint.
fn kkt_projection(b: Vec9, g: f64) -> Vec9 {
    let w = to_vec9(SymTensor3::IDENTITY) / 3f64.sqrt();
    let p = SMatrix::<f64, 9, 9>::identity() - w * w.transpose();
    let solve = |mu: f64| (SMatrix::<f64, 9, 9>::identity() + p * mu).lu().solve(&b).expect("I + μP is invertible for μ ≥ 0");
    let excess = |x: &Vec9| 0.5 * (p * x).norm_squared() - g;
    if excess(&b) <= 0.0 {
        return b;
    }
    let mut hi = 1.0;
    while excess(&solve(hi)) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(&solve(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi)
}

fn projection() -> Result<Outcome> {
    let cfg = SuiteConfig { gauss_green_pairs: 0, korn_samples: 0, ..SuiteConfig::default() };
    let rep = invariant_suite(&cfg)?;
    let laws: Vec<_> = rep.entries.iter().filter(|e| e.invariant.starts_with("projection")).collect();
    let laws_pass = laws.iter().all(|e| e.pass);
    let find = |name: &str| laws.iter().find(|e| e.invariant == name).map_or(f64::NAN, |e| e.worst);

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut worst, mut active) = (0.0f64, 0);
    for _ in 0..50 {
        let a = SymTensor3::from_array(std::array::from_fn(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)));
        let g = rng.random_range(0.05..3.0);
        active += usize::from(a.von_mises() > g);
        let fast = to_vec9(a.project_deviatoric_ball(g)?);
        worst = worst.max((fast - kkt_projection(to_vec9(a), g)).amax());
    }
    Ok(Outcome::new(
        laws_pass && worst <= 1e-6,
        format!(
            "idempotence {:.1e}, nonexpansive {:.1e}, membership {:.1e} (shifted fields {:.1e}); KKT oracle on 50 tensors ({active} active) max diff {worst:.2e}",
            find("projection_idempotence"),
            find("projection_nonexpansive"),
            find("projection_membership"),
            find("projection_membership_shifted"),
        ),
    ))
}

fn sweeping_accuracy() -> Result<Outcome> {
    let dts = [1e-2, 5e-3, 2.5e-3];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in acceptance_cases() {
        let s = order_study(name, &p, &dts)?;
        pass &= s.min_order >= 0.9 && s.max_constant <= 2.0;
        parts.push(format!("{name}: order {:.3}, sup error/dt {:.3}", s.min_order, s.max_constant));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn constructions() -> Result<Outcome> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .map_err(yieldsweep::Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut pass = true;
    let mut parts = Vec::new();
    for path in paths {
        let sc = parse_scenario(&path)?;
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let problem = sc.problem()?;
        let cs = &problem.constraint;
        let transport = shrink_transport_check(cs, problem.horizon, 500, sc.seed)?;
        pass &= transport.worst_violation <= 1e-12;
        if cs.threshold().regularity() == ThresholdRegularity::Continuous {
            parts.push(format!("{name}: transport {:.1e} (continuous threshold, (H) not applicable)", transport.worst_violation));
            continue;
        }
        let times = sample_times(problem.horizon, 8);
        let pairs: Vec<(f64, f64)> =
            times.iter().enumerate().flat_map(|(i, &s)| times[i + 1..].iter().map(move |&t| (s, t))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let spread = 2.0 * (2.0 * cs.threshold().c2()).sqrt();
        let samples: Vec<_> = (0..8).map(|_| random::gaussian_tensor_field(*cs.grid(), &mut rng, spread)).collect();
        let h = verify_condition_h(cs, &pairs, &samples, problem.effective_kappa(), problem.regime, problem.horizon)?;
        pass &= h.pass && h.worst_h1_slack >= 0.0 && h.worst_h2_slack >= 0.0;
        parts.push(format!(
            "{name}: transport {:.1e}, (H1)/(H2) slack {:.2e}/{:.2e} over {} checks",
            transport.worst_violation, h.worst_h1_slack, h.worst_h2_slack, h.checks
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn contraction() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["reference", "sweeping"] {
        let problem = scenario(name)?.problem()?;
        let t0 = problem.window_length()?;
        let rule = match problem.regime {
            Regime::Regularized => 0.5 * problem.kappa * problem.nu.powi(2),
            Regime::Sweeping => 0.5 * problem.nu.powi(2) * (-problem.horizon).exp(),
        };
        let traj = march(&problem, true)?;
        let probes = perturbed_probes(&problem, &traj, 5, 0.1, 17)?;
        let rep = measure_contraction(&problem, &traj, &probes)?;
        let measured: usize = rep.windows.iter().map(|w| w.ratios.len()).sum();
        // Successive Picard increments, ignoring those already at round-off.
        let q = traj
            .windows
            .iter()
            .flat_map(|w| w.distances.windows(2).filter(|d| d[0] > 1e-13).map(|d| d[1] / d[0]))
            .fold(0.0f64, f64::max);
        let ok = (t0 - rule.min(problem.horizon)).abs() <= 1e-12 && rep.max_ratio < 1.0 && measured >= 5 && q < 1.0;
        pass &= ok;
        parts.push(format!(
            "{name}: T0 {t0:.4}, {measured} probe pairs, max ratio {:.2e} (bound {:.2}), Picard increment ratio <= {q:.2e}",
            rep.max_ratio, rep.predicted_bound
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn vi_residuals() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["reference", "sweeping"] {
        let sc = scenario(name)?;
        let problem = sc.problem()?;
        let traj = march(&problem, true)?;
        let pointwise = vi_residual(&problem, &traj, 50, sc.seed)?;
        let weak = weak_vi_residual(&problem, &traj, 20, sc.seed)?;
        pass &= pointwise.min_normalized >= -1e-8 && weak.min_normalized >= -1e-6;
        parts.push(format!("{name}: pointwise {:.2e}, weak {:.2e}", pointwise.min_normalized, weak.min_normalized));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn energy_echoes() -> Result<Outcome> {
    let mut sups = Vec::new();
    for kappa in [1.0, 0.1, 0.01] {
        let mut sc = scenario("reference")?;
        sc.physics.kappa = kappa;
        sc.time.dt = 0.005;
        sups.push(energy_report(&march(&sc.problem()?, false)?).sup_e1);
    }
    let band = sups.iter().copied().fold(0.0, f64::max) / sups.iter().copied().fold(f64::INFINITY, f64::min);

    let zero = scenario("zero-data")?.problem()?;
    let zero_traj = march(&zero, false)?;
    let all_zero =
        zero_traj.records.iter().all(|r| r.norm_sigma_h == 0.0 && r.norm_v_h == 0.0 && r.norm_sigma_v == 0.0);

    // Static constraint, no data: on a single node the stress only relaxes.
    let mut point = zero.clone();
    let g = Grid::point();
    point.constraint = ConstraintSet::new(g, ThresholdField::constant(1.0)?, ShiftField::zero());
    point.v0 = VectorField::zeros(g);
    point.sigma0 = TensorField::constant(g, SymTensor3::new(0.5, -0.2, 0.1, 0.6, 0.0, 0.3));
    let mut sigma_increase = f64::NEG_INFINITY;
    for regime in [Regime::Regularized, Regime::Sweeping] {
        point.regime = regime;
        sigma_increase = sigma_increase.max(energy_report(&march(&point, false)?).max_sigma_increase);
    }
    // On a full grid the stress trades energy with the velocity; the sum
    // is what cannot grow.
    let mut grid_run = zero.clone();
    let grid = *grid_run.constraint.grid();
    grid_run.sigma0 = TensorField::from_fn(grid, |x| SymTensor3::new(0.2 * x[1], 0.0, -0.1, 0.4 * x[0], 0.0, 0.1));
    let mechanical_increase = energy_report(&march(&grid_run, false)?).max_mechanical_increase;

    Ok(Outcome::new(
        band <= 2.0 && all_zero && sigma_increase <= 1e-10 && mechanical_increase <= 1e-10,
        format!(
            "kappa sweep sup E1 {:.4}/{:.4}/{:.4} (band {band:.3}); zero data all zero: {all_zero}; undriven max |sigma| step increase {sigma_increase:.1e} (single node), mechanical {mechanical_increase:.1e} (grid)",
            sups[0], sups[1], sups[2]
        ),
    ))
}

fn kink_pipeline() -> Result<Outcome> {
    let sc = scenario("kink-continuous")?;
    let problem = sc.problem()?;
    let plan = sc.mollification_plan()?;
    let grid = *problem.constraint.grid();
    let base = problem.constraint.threshold();
    let times = sample_times(problem.horizon, 64);
    let mut smoothed_valid = plan.indices == [4, 8, 16, 32];
    for &n in &plan.indices {
        let th = mollify_threshold(&plan, n)?;
        smoothed_valid &= th.validate(&grid, &times).is_ok() && th.c1() == base.c1() && th.c2() == base.c2();
    }
    let rep = cauchy_study(&problem, &plan)?;
    let initial_ok = rep.rows.iter().all(|r| r.initial_violation <= 1e-12);
    // The finest level has no successor, so its gap is undefined.
    let d: Vec<String> = rep.rows.iter().filter(|r| r.d_n.is_finite()).map(|r| format!("{:.2e}", r.d_n)).collect();
    Ok(Outcome::new(
        rep.d_strictly_decreasing && smoothed_valid && initial_ok,
        format!(
            "n {:?}: d(n) [{}], strictly decreasing {}; smoothed thresholds valid with C1, C2 unchanged: {smoothed_valid}; initial stresses feasible: {initial_ok}",
            plan.indices,
            d.join(", "),
            rep.d_strictly_decreasing
        ),
    ))
}

fn determinism_and_refinement() -> Result<Outcome> {
    let dir = tempfile::tempdir().map_err(yieldsweep::Error::from)?;
    let path = scenario_dir().join("reference.toml");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_yieldsweep"))
            .arg("run")
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(yieldsweep::Error::from)?
            .status;
        if !status.success() {
            return Ok(Outcome::new(false, format!("run exited with {status}")));
        }
        outputs.push(out);
    }
    let identical = ["trajectory.csv", "vi_residual.csv", "weak_vi_residual.csv", "energy.csv"]
        .iter()
        .all(|f| std::fs::read(outputs[0].join(f)).ok() == std::fs::read(outputs[1].join(f)).ok());

    let sc = scenario("reference")?;
    let dts = [sc.time.dt, sc.time.dt / 2.0, sc.time.dt / 4.0];
    let runs = dts
        .iter()
        .map(|&dt| {
            let mut s = sc.clone();
            s.time.dt = dt;
            march(&s.problem()?, true)
        })
        .collect::<Result<Vec<_>>>()?;
    let c: Vec<f64> = (0..2).map(|i| runs[i].sup_stress_gap(&runs[i + 1]).map(|g| g / dts[i])).collect::<Result<_>>()?;
    let spread = c[0].max(c[1]) / c[0].min(c[1]);
    Ok(Outcome::new(
        identical && c.iter().all(|x| x.is_finite() && *x > 0.0) && spread <= 2.0,
        format!("byte-identical CSV: {identical}; refinement C {:.4}, {:.4} (ratio {spread:.3})", c[0], c[1]),
    ))
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("gauss_green", gauss_green),
        ("korn_bound", korn),
        ("projection_laws", projection),
        ("sweeping_accuracy_0d", sweeping_accuracy),
        ("transport_and_condition_h", constructions),
        ("contraction", contraction),
        ("vi_residuals", vi_residuals),
        ("energy_echoes", energy_echoes),
        ("kink_approximation", kink_pipeline),
        ("determinism_and_refinement", determinism_and_refinement),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        failures += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
