//! Coupled marching: Picard iteration of the velocity-to-velocity map over
//! contraction-sized windows, plus a staggered single-pass mode.

mod contraction;
mod trajectory;
mod window;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintSet, ConstraintSnapshot};
use crate::error::{Error, Result};
use crate::fields::{divergence, strain, TensorField, VectorField};
use crate::source::{TensorSource, VectorSource};
use crate::subsolvers::{
    stress_step_catchup, stress_step_regularized, velocity_step, StressStepProblem, VelocityStepProblem,
};
use crate::Regime;

pub use contraction::{measure_contraction, perturbed_probes, ContractionReport, ProbePair, WindowContraction};
pub use trajectory::{CoupledState, StepRecord, Trajectory, WindowRecord, TRAJECTORY_COLUMNS};
pub use window::WindowPolicy;

/// How the two subproblems are coupled within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Fixed-point iteration over whole windows.
    Picard,
    /// One stress step then one velocity step per `Δt`, no iteration.
    Staggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub safety: f64,
    pub coupling: Coupling,
    /// Window length used instead of the contraction rule.
    pub window: Option<f64>,
    pub prox_tol: f64,
    pub prox_max_iters: usize,
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    /// Relative: stop once `d ≤ picard_tol·max(1, |S(ṽ)|)`.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub membership_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            safety: 0.5,
            coupling: Coupling::Picard,
            window: None,
            prox_tol: 1e-12,
            prox_max_iters: 20_000,
            linear_tol: 1e-13,
            linear_max_iters: 2_000,
            picard_tol: 1e-10,
            picard_max_iters: 200,
            membership_tol: 1e-10,
        }
    }
}

/// Everything needed to march the coupled system on `[0, T]`.
#[derive(Clone)]
pub struct Problem {
    pub constraint: ConstraintSet,
    pub force: Arc<dyn VectorSource>,
    pub strain_rate: Arc<dyn TensorSource>,
    pub v0: VectorField,
    pub sigma0: TensorField,
    pub horizon: f64,
    pub dt: f64,
    pub regime: Regime,
    /// Ignored in the sweeping regime.
    pub kappa: f64,
    pub nu: f64,
    pub config: SolverConfig,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("grid", self.constraint.grid())
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("regime", &self.regime)
            .field("kappa", &self.kappa)
            .field("nu", &self.nu)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// `κ` as used by the stress step: zero in the sweeping regime.
    pub fn effective_kappa(&self) -> f64 {
        match self.regime {
            Regime::Regularized => self.kappa,
            Regime::Sweeping => 0.0,
        }
    }

    pub fn policy(&self) -> WindowPolicy {
        WindowPolicy {
            regime: self.regime,
            kappa: self.effective_kappa(),
            nu: self.nu,
            horizon: self.horizon,
            safety: self.config.safety,
            picard_tol: self.config.picard_tol,
            picard_max_iters: self.config.picard_max_iters,
        }
    }

    /// Total number of steps `T/Δt`; the step must divide the horizon.
    pub fn step_count(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::BadParameters(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::BadParameters(format!("horizon must be positive, got {}", self.horizon)));
        }
        let n = (self.horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::BadParameters(format!("dt = {} does not divide T = {}", self.dt, self.horizon)));
        }
        Ok(n as usize)
    }

    /// Window length `T₀`: the configured override or the contraction rule.
    pub fn window_length(&self) -> Result<f64> {
        match self.config.window {
            Some(w) if !(w > 0.0) => Err(Error::BadParameters(format!("window length must be positive, got {w}"))),
            Some(w) => Ok(w.min(self.horizon)),
            None => self.policy().choose_window(),
        }
    }

    /// `(first step, step count)` of every window.
    pub fn partition(&self) -> Result<Vec<(usize, usize)>> {
        let n = self.step_count()?;
        let t0 = self.window_length()?;
        let per = ((t0 / self.dt) * (1.0 + 1e-12)).floor() as usize;
        if per == 0 {
            return Err(Error::BadParameters(format!(
                "window T0 = {t0:e} is shorter than dt = {}; reduce dt",
                self.dt
            )));
        }
        Ok((0..n).step_by(per).map(|s| (s, per.min(n - s))).collect())
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Checks the initial pair: `v₀` masked, `σ₀ ∈ K(0)`, matching grids.
    pub fn check_initial(&self) -> Result<()> {
        let grid = self.constraint.grid();
        if self.v0.grid() != grid || self.sigma0.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if !self.v0.is_finite() || !self.sigma0.is_finite() {
            return Err(assumption("A2", "initial data contain non-finite values".into()));
        }
        let mask = self.v0.mask_violation();
        if mask > 0.0 {
            return Err(assumption("A2", format!("v0 is nonzero on Dirichlet nodes (max |v0| = {mask:e})")));
        }
        let m = self.constraint.membership(&self.sigma0, 0.0, self.config.membership_tol)?;
        if !m.feasible {
            return Err(assumption(
                "A2",
                format!("sigma0 is outside K(0): max violation {:e} at node {:?}", m.max_violation, m.node),
            ));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> CoupledState {
        CoupledState { t: 0.0, v: self.v0.clone(), sigma: self.sigma0.clone() }
    }
}

fn assumption(which: &str, detail: String) -> Error {
    Error::AssumptionViolation { assumption: which.into(), detail }
}

/// Data sampled at the step times `t_{s+1}, …, t_{s+m}` of one window.
pub struct WindowData {
    pub index: usize,
    pub first_step: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<ConstraintSnapshot>,
    pub strain_rate: Vec<TensorField>,
    pub force: Vec<VectorField>,
}

impl WindowData {
    pub fn new(problem: &Problem, index: usize, first_step: usize, steps: usize) -> Result<Self> {
        let grid = *problem.constraint.grid();
        let times: Vec<f64> = (1..=steps).map(|j| problem.time(first_step + j)).collect();
        let mut snapshots = Vec::with_capacity(steps);
        for (j, &t) in times.iter().enumerate() {
            let snap = problem
                .constraint
                .snapshot(t)
                .map_err(|e| in_step(index, first_step + j + 1, t, e))?;
            snapshots.push(snap);
        }
        let strain_rate = times.iter().map(|&t| problem.strain_rate.sample(&grid, t)).collect();
        let force = times.iter().map(|&t| problem.force.sample(&grid, t)).collect();
        Ok(WindowData { index, first_step, times, snapshots, strain_rate, force })
    }

    pub fn steps(&self) -> usize {
        self.times.len()
    }

    fn step_error(&self, j: usize, e: Error) -> Error {
        in_step(self.index, self.first_step + j + 1, self.times[j], e)
    }
}

fn in_step(window: usize, step: usize, t: f64, e: Error) -> Error {
    Error::Step { window, step, t, source: Box::new(e) }
}

/// Velocity and stress at the step times of one window (start excluded).
#[derive(Debug, Clone)]
pub struct WindowPath {
    pub v: Vec<VectorField>,
    pub sigma: Vec<TensorField>,
}

/// `sqrt(Δt Σ |a_j − b_j|²_𝑽)`.
pub fn path_distance(a: &[VectorField], b: &[VectorField], dt: f64) -> f64 {
    (dt * a.iter().zip(b).map(|(x, y)| x.sub(y).norm_v().powi(2)).sum::<f64>()).sqrt()
}

/// `sqrt(Δt Σ |a_j|²_𝑽)`.
pub fn path_norm(a: &[VectorField], dt: f64) -> f64 {
    (dt * a.iter().map(|x| x.norm_v().powi(2)).sum::<f64>()).sqrt()
}

fn stress_step(problem: &Problem, sigma_prev: &TensorField, drive: &TensorField, k: &ConstraintSnapshot) -> Result<TensorField> {
    let p = StressStepProblem {
        sigma_prev,
        drive,
        constraint: k,
        dt: problem.dt,
        kappa: problem.effective_kappa(),
        prox_tol: problem.config.prox_tol,
        prox_max_iters: problem.config.prox_max_iters,
    };
    match problem.regime {
        Regime::Regularized => Ok(stress_step_regularized(&p)?.tau),
        Regime::Sweeping => stress_step_catchup(&p),
    }
}

fn velocity_update(problem: &Problem, v_prev: &VectorField, sigma: &TensorField, force: &VectorField) -> Result<VectorField> {
    let source = divergence(sigma).axpy(1.0, force);
    let p = VelocityStepProblem {
        v_prev,
        source: &source,
        nu: problem.nu,
        dt: problem.dt,
        linear_tol: problem.config.linear_tol,
        linear_max_iters: problem.config.linear_max_iters,
    };
    Ok(velocity_step(&p)?.v)
}

/// Stress half of the map: march `σ` over the window driven by `ε(ṽ) + h`.
pub fn stress_path(problem: &Problem, data: &WindowData, sigma_start: &TensorField, guess: &[VectorField]) -> Result<Vec<TensorField>> {
    let mut out: Vec<TensorField> = Vec::with_capacity(data.steps());
    for (j, v) in guess.iter().enumerate().take(data.steps()) {
        let drive = strain(v).add(&data.strain_rate[j]);
        let prev = out.last().unwrap_or(sigma_start);
        let next = stress_step(problem, prev, &drive, &data.snapshots[j]).map_err(|e| data.step_error(j, e))?;
        out.push(next);
    }
    Ok(out)
}

/// Velocity half of the map: march `v` over the window with source `div σ + f`.
pub fn velocity_path(problem: &Problem, data: &WindowData, v_start: &VectorField, sigma: &[TensorField]) -> Result<Vec<VectorField>> {
    let mut out: Vec<VectorField> = Vec::with_capacity(data.steps());
    for (j, s) in sigma.iter().enumerate().take(data.steps()) {
        let prev = out.last().unwrap_or(v_start);
        let next = velocity_update(problem, prev, s, &data.force[j]).map_err(|e| data.step_error(j, e))?;
        out.push(next);
    }
    Ok(out)
}

/// One application of the composed map `ṽ ↦ v`.
pub fn apply_map(problem: &Problem, data: &WindowData, start: &CoupledState, guess: &[VectorField]) -> Result<WindowPath> {
    let sigma = stress_path(problem, data, &start.sigma, guess)?;
    let v = velocity_path(problem, data, &start.v, &sigma)?;
    Ok(WindowPath { v, sigma })
}

/// Picard iteration on one window, started from the constant guess `v(t_start)`.
pub fn solve_window(problem: &Problem, data: &WindowData, start: &CoupledState) -> Result<(WindowPath, WindowRecord)> {
    let mut guess = vec![start.v.clone(); data.steps()];
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let tol = problem.config.picard_tol;
    for k in 1..=problem.config.picard_max_iters {
        let path = apply_map(problem, data, start, &guess)?;
        let d = path_distance(&path.v, &guess, problem.dt);
        if let Some(&prev) = distances.last() {
            if prev > 0.0 {
                ratios.push(d / prev);
            }
        }
        distances.push(d);
        if !d.is_finite() {
            break;
        }
        if d <= tol * path_norm(&path.v, problem.dt).max(1.0) {
            let record = window_record(problem, data, start.t, k, distances, ratios);
            return Ok((path, record));
        }
        guess = path.v;
    }
    let last = data.steps() - 1;
    Err(data.step_error(
        last,
        Error::PicardNoConvergence { iterations: problem.config.picard_max_iters, ratios },
    ))
}

/// Single pass with the stress driven by the previous velocity.
pub fn staggered_window(problem: &Problem, data: &WindowData, start: &CoupledState) -> Result<(WindowPath, WindowRecord)> {
    let mut v: Vec<VectorField> = Vec::with_capacity(data.steps());
    let mut sigma: Vec<TensorField> = Vec::with_capacity(data.steps());
    for j in 0..data.steps() {
        let v_prev = v.last().unwrap_or(&start.v);
        let s_prev = sigma.last().unwrap_or(&start.sigma);
        let drive = strain(v_prev).add(&data.strain_rate[j]);
        let s_next = stress_step(problem, s_prev, &drive, &data.snapshots[j]).map_err(|e| data.step_error(j, e))?;
        let v_next = velocity_update(problem, v_prev, &s_next, &data.force[j]).map_err(|e| data.step_error(j, e))?;
        sigma.push(s_next);
        v.push(v_next);
    }
    let record = window_record(problem, data, start.t, 1, Vec::new(), Vec::new());
    Ok((WindowPath { v, sigma }, record))
}

fn window_record(
    problem: &Problem,
    data: &WindowData,
    t_start: f64,
    picard_iters: usize,
    distances: Vec<f64>,
    ratios: Vec<f64>,
) -> WindowRecord {
    WindowRecord {
        index: data.index,
        t_start,
        t_end: problem.time(data.first_step + data.steps()),
        steps: data.steps(),
        picard_iters,
        distances,
        ratios,
    }
}

/// Marches `[0, T]` window by window.
///
/// With `keep_states` every step's `(v, σ)` is stored in the trajectory.
pub fn march(problem: &Problem, keep_states: bool) -> Result<Trajectory> {
    problem.check_initial()?;
    let windows = problem.partition()?;
    let kappa = problem.effective_kappa();
    let dt = problem.dt;
    let start = problem.initial_state();
    let k0 = problem.constraint.snapshot(0.0)?;
    let mut traj = Trajectory {
        dt,
        kappa,
        nu: problem.nu,
        records: vec![StepRecord {
            step: 0,
            t: 0.0,
            norm_v_h: start.v.norm_h(),
            norm_sigma_h: start.sigma.norm_hh(),
            norm_sigma_v: start.sigma.norm_vv(),
            max_violation: k0.membership(&start.sigma, problem.config.membership_tol).max_violation,
            picard_iters: 0,
            contraction_ratio: f64::NAN,
            energy_lhs: start.sigma.norm_hh().powi(2),
            energy_rhs: 1.0,
            norm_v_v: start.v.norm_v(),
        }],
        windows: Vec::with_capacity(windows.len()),
        states: Vec::new(),
    };
    if keep_states {
        traj.states.push(start.clone());
    }
    let mut state = start;
    let mut sigma_v_sq = 0.0;
    let mut v_v_sq = 0.0;
    for (index, &(first, steps)) in windows.iter().enumerate() {
        let data = WindowData::new(problem, index, first, steps)?;
        let (path, record) = match problem.config.coupling {
            Coupling::Picard => solve_window(problem, &data, &state)?,
            Coupling::Staggered => staggered_window(problem, &data, &state)?,
        };
        let ratio = record.ratios.last().copied().unwrap_or(f64::NAN);
        for j in 0..steps {
            let (v, sigma) = (&path.v[j], &path.sigma[j]);
            let norm_sigma_v = sigma.norm_vv();
            let norm_v_v = v.norm_v();
            sigma_v_sq += norm_sigma_v * norm_sigma_v;
            v_v_sq += norm_v_v * norm_v_v;
            let norm_sigma_h = sigma.norm_hh();
            traj.records.push(StepRecord {
                step: first + j + 1,
                t: data.times[j],
                norm_v_h: v.norm_h(),
                norm_sigma_h,
                norm_sigma_v,
                max_violation: data.snapshots[j].membership(sigma, problem.config.membership_tol).max_violation,
                picard_iters: record.picard_iters,
                contraction_ratio: ratio,
                energy_lhs: norm_sigma_h * norm_sigma_h + kappa * dt * sigma_v_sq,
                energy_rhs: 1.0 + dt * v_v_sq,
                norm_v_v,
            });
            if keep_states {
                traj.states.push(CoupledState { t: data.times[j], v: v.clone(), sigma: sigma.clone() });
            }
        }
        let t_end = *data.times.last().expect("windows are nonempty");
        let WindowPath { mut v, mut sigma } = path;
        state = CoupledState {
            t: t_end,
            v: v.pop().expect("windows are nonempty"),
            sigma: sigma.pop().expect("windows are nonempty"),
        };
        traj.windows.push(record);
    }
    Ok(traj)
}
