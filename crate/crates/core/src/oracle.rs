//! Spatially homogeneous reference dynamics: the exact scalar stop operator
//! with a moving radius, scalar and tensor catching-up references, and the
//! comparison of the production integrator against them.

use std::sync::Arc;

use serde::Serialize;

use crate::constraint::{ConstraintSet, ShiftField, ThresholdField, ThresholdRegularity};
use crate::coupled::{march, CoupledState, Problem, SolverConfig, StepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::fields::{Grid, TensorField, VectorField};
use crate::source::{FnScalar, FnTensor, ZeroVector};
use crate::tensor::SymTensor3;
use crate::Regime;

/// Continuous piecewise-linear function, constant outside its knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::BadParameters("piecewise-linear data need matching, nonempty knots and values".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || values.iter().chain(&times).any(|x| !x.is_finite()) {
            return Err(Error::BadParameters("knots must be finite and strictly increasing".into()));
        }
        Ok(PiecewiseLinear { times, values })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseLinear { times: vec![0.0], values: vec![value] }
    }

    /// `value + slope·t` on `[0, horizon]`.
    pub fn linear(value: f64, slope: f64, horizon: f64) -> Self {
        PiecewiseLinear { times: vec![0.0, horizon], values: vec![value, value + slope * horizon] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.times
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Right derivative.
    pub fn slope(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 || k == self.times.len() {
            return 0.0;
        }
        (self.values[k] - self.values[k - 1]) / (self.times[k] - self.times[k - 1])
    }

    fn min_on(&self, horizon: f64) -> f64 {
        self.times
            .iter()
            .filter(|&&t| t > 0.0 && t < horizon)
            .chain([0.0, horizon].iter())
            .map(|&t| self.eval(t))
            .fold(f64::INFINITY, f64::min)
    }

    fn max_on(&self, horizon: f64) -> f64 {
        self.times
            .iter()
            .filter(|&&t| t > 0.0 && t < horizon)
            .chain([0.0, horizon].iter())
            .map(|&t| self.eval(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Right-continuous step function: `values[i]` on `[starts[i], starts[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConstant {
    starts: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    /// `starts[0]` is taken as the start of time; earlier times use `values[0]`.
    pub fn new(starts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::BadParameters("step-function data need matching, nonempty starts and values".into()));
        }
        if starts.windows(2).any(|w| !(w[0] < w[1])) || values.iter().chain(&starts).any(|x| !x.is_finite()) {
            return Err(Error::BadParameters("starts must be finite and strictly increasing".into()));
        }
        Ok(PiecewiseConstant { starts, values })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseConstant { starts: vec![0.0], values: vec![value] }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.starts
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.starts.partition_point(|&x| x <= t).max(1) - 1]
    }

    /// `∫_a^b`, `a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut t = a;
        while t < b {
            let k = self.starts.partition_point(|&x| x <= t);
            let end = self.starts.get(k).copied().unwrap_or(f64::INFINITY).min(b);
            total += self.eval(t) * (end - t);
            t = end;
        }
        total
    }
}

/// `σ′ ∈ G(t) − ∂I_{[−r(t), r(t)]}(σ)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSweepProblem {
    pub radius: PiecewiseLinear,
    pub drive: PiecewiseConstant,
    pub sigma0: f64,
    pub horizon: f64,
}

impl ScalarSweepProblem {
    fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::BadParameters(format!("horizon must be positive, got {}", self.horizon)));
        }
        let min = self.radius.min_on(self.horizon);
        if !(min > 0.0) {
            return Err(Error::DegenerateRadius(format!("radius reaches {min} on [0, {}]", self.horizon)));
        }
        let r0 = self.radius.eval(0.0);
        if !(self.sigma0.abs() <= r0) {
            return Err(Error::BadParameters(format!("sigma0 = {} lies outside [-{r0}, {r0}]", self.sigma0)));
        }
        Ok(())
    }

    /// Sorted breakpoints of radius and drive inside `[0, T]`, with both ends.
    fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .radius
            .knots()
            .iter()
            .chain(self.drive.breaks())
            .copied()
            .filter(|&t| t > 0.0 && t < self.horizon)
            .chain([0.0, self.horizon])
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

/// One linear piece `σ(t) = start + slope·(t − t0)` on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece {
    pub t0: f64,
    pub t1: f64,
    pub start: f64,
    pub slope: f64,
}

/// Exact piecewise-linear solution of a scalar sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarPath {
    pub pieces: Vec<Piece>,
}

impl ScalarPath {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.t1 < t).min(self.pieces.len() - 1);
        let p = &self.pieces[k];
        p.start + p.slope * (t - p.t0)
    }

    /// Times at which the slope may change, including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.t0).collect();
        b.extend(self.pieces.last().map(|p| p.t1));
        b
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Contact {
    Free,
    Upper,
    Lower,
}

/// Integrates the scalar sweep exactly between breakpoints, resolving
/// contact and detachment events in closed form.
pub fn stop_operator_exact(p: &ScalarSweepProblem) -> Result<ScalarPath> {
    p.check()?;
    let mut pieces = Vec::new();
    let mut push = |t0: f64, t1: f64, start: f64, slope: f64| {
        if t1 > t0 {
            pieces.push(Piece { t0, t1, start, slope });
        }
    };
    let breaks = p.breaks();
    let mut s = p.sigma0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let g = p.drive.eval(a);
        let ra = p.radius.eval(a);
        let rs = (p.radius.eval(b) - ra) / (b - a);
        let rb = p.radius.eval(b);
        let contact = if s >= ra && g >= rs {
            Contact::Upper
        } else if s <= -ra && g <= -rs {
            Contact::Lower
        } else {
            Contact::Free
        };
        match contact {
            Contact::Upper => {
                push(a, b, ra, rs);
                s = rb;
            }
            Contact::Lower => {
                push(a, b, -ra, -rs);
                s = -rb;
            }
            Contact::Free => {
                let s = &mut s;
                let upper = if g > rs { a + (ra - *s) / (g - rs) } else { f64::INFINITY };
                let lower = if g < -rs { a + (ra + *s) / (-g - rs) } else { f64::INFINITY };
                let hit = upper.min(lower).max(a);
                if hit < b {
                    push(a, hit, *s, g);
                    let r_hit = p.radius.eval(hit);
                    if upper <= lower {
                        push(hit, b, r_hit, rs);
                        *s = rb;
                    } else {
                        push(hit, b, -r_hit, -rs);
                        *s = -rb;
                    }
                } else {
                    push(a, b, *s, g);
                    *s = (*s + g * (b - a)).clamp(-rb, rb);
                }
            }
        }
    }
    Ok(ScalarPath { pieces })
}

/// Scalar catching-up `σ^{n+1} = clamp(σ^n + ∫G, ±r(t_{n+1}))`.
pub fn scalar_catchup(p: &ScalarSweepProblem, dt: f64) -> Result<Vec<f64>> {
    p.check()?;
    let n = step_count(p.horizon, dt)?;
    let mut out = Vec::with_capacity(n + 1);
    let mut s = p.sigma0;
    out.push(s);
    for k in 0..n {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let r = p.radius.eval(t1);
        s = (s + p.drive.integral(t0, t1)).clamp(-r, r);
        out.push(s);
    }
    Ok(out)
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    let n = (horizon / dt).round();
    if !(dt > 0.0) || n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::BadParameters(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(n as usize)
}

/// `sup_t |I_Δt[values](t) − σ(t)|` for the piecewise-linear interpolant of
/// values at `kΔt`; exact since both sides are piecewise linear.
pub fn sup_interpolation_error(path: &ScalarPath, dt: f64, values: &[f64]) -> f64 {
    let interp = |t: f64| {
        let k = ((t / dt).floor() as usize).min(values.len() - 2);
        let theta = (t - k as f64 * dt) / dt;
        values[k] * (1.0 - theta) + values[k + 1] * theta
    };
    let nodes = (0..values.len()).map(|k| k as f64 * dt);
    nodes
        .chain(path.breakpoints())
        .map(|t| (interp(t) - path.eval(t)).abs())
        .fold(0.0, f64::max)
}

/// Unit deviatoric direction used to embed scalar sweeps in tensor space.
pub fn unit_deviator() -> SymTensor3 {
    SymTensor3::diag(2.0, -1.0, -1.0) * (1.0 / 6f64.sqrt())
}

/// The scalar sweep as a spatially homogeneous sweeping-regime problem:
/// `σ = s·D`, drive `G·D`, threshold `g = r²/2`, on a single node.
pub fn homogeneous_problem(p: &ScalarSweepProblem, dt: f64) -> Result<Problem> {
    p.check()?;
    let grid = Grid::point();
    let d = unit_deviator();
    let (r1, r2) = (Arc::new(p.radius.clone()), Arc::new(p.radius.clone()));
    let source = FnScalar::new(move |t, _| 0.5 * r1.eval(t).powi(2)).with_rate(move |t, _| r2.eval(t) * r2.slope(t));
    let c1 = 0.5 * p.radius.min_on(p.horizon).powi(2);
    let c2 = 0.5 * p.radius.max_on(p.horizon).powi(2);
    let threshold = ThresholdField::new(source, c1, c2, ThresholdRegularity::H1InTime)?;
    let drive = p.drive.clone();
    Ok(Problem {
        constraint: ConstraintSet::new(grid, threshold, ShiftField::zero()),
        force: Arc::new(ZeroVector),
        strain_rate: Arc::new(FnTensor::new(move |t, _| d * drive.eval(t))),
        v0: VectorField::zeros(grid),
        sigma0: TensorField::constant(grid, d * p.sigma0),
        horizon: p.horizon,
        dt,
        regime: Regime::Sweeping,
        kappa: 0.0,
        nu: 1.0,
        config: SolverConfig::default(),
    })
}

/// Runs the production marcher on [`homogeneous_problem`] and returns
/// `s_k = σ(kΔt) : D`.
pub fn production_sweep(p: &ScalarSweepProblem, dt: f64) -> Result<(Vec<f64>, Trajectory)> {
    let traj = march(&homogeneous_problem(p, dt)?, true)?;
    let d = unit_deviator();
    let s = traj.states.iter().map(|st| st.sigma.values()[0].frobenius_inner(&d)).collect();
    Ok((s, traj))
}

/// Fine-step catching-up for a homogeneous tensor sweep with `σ* = 0`,
/// `σ^{k+1} = P_{g(t_{k+1})}(σ^k + Δt·G(t_{k+1}))`.
pub fn homogeneous_sweep_reference(
    g: &dyn Fn(f64) -> f64,
    drive: &dyn Fn(f64) -> SymTensor3,
    sigma0: SymTensor3,
    horizon: f64,
    dt_fine: f64,
) -> Result<Vec<(f64, SymTensor3)>> {
    if dt_fine > 1e-5 * horizon * (1.0 + 1e-12) {
        return Err(Error::BadParameters(format!("reference step {dt_fine:e} exceeds 1e-5 T")));
    }
    let n = step_count(horizon, dt_fine)?;
    let mut out = Vec::with_capacity(n + 1);
    let mut s = sigma0;
    out.push((0.0, s));
    for k in 1..=n {
        let t = k as f64 * dt_fine;
        s = (s + drive(t) * dt_fine).project_deviatoric_ball(g(t))?;
        out.push((t, s));
    }
    Ok(out)
}

/// Trajectory records for a homogeneous tensor path on the unit point grid.
pub fn reference_trajectory(path: &[(f64, SymTensor3)], g: &dyn Fn(f64) -> f64) -> Trajectory {
    let grid = Grid::point();
    let dt = path.get(1).map_or(0.0, |p| p.0 - path[0].0);
    let records = path
        .iter()
        .enumerate()
        .map(|(step, &(t, s))| StepRecord {
            step,
            t,
            norm_v_h: 0.0,
            norm_sigma_h: s.norm(),
            norm_sigma_v: 0.0,
            max_violation: (s.von_mises() - g(t)).max(0.0),
            picard_iters: 0,
            contraction_ratio: f64::NAN,
            energy_lhs: s.norm_sq(),
            energy_rhs: 1.0,
            norm_v_v: 0.0,
        })
        .collect();
    let states = path
        .iter()
        .map(|&(t, s)| CoupledState { t, v: VectorField::zeros(grid), sigma: TensorField::constant(grid, s) })
        .collect();
    Trajectory { dt, kappa: 0.0, nu: 1.0, records, windows: Vec::new(), states }
}

/// The two reference cases: drive to the boundary, and sweep by a
/// shrinking radius. Their contact times fall between the step grids.
pub fn acceptance_cases() -> [(&'static str, ScalarSweepProblem); 2] {
    [
        (
            "drive_to_boundary",
            ScalarSweepProblem {
                radius: PiecewiseLinear::constant(1.0),
                drive: PiecewiseConstant::constant(3.0),
                sigma0: 0.0,
                horizon: 1.0,
            },
        ),
        (
            "shrinking_radius",
            ScalarSweepProblem {
                radius: PiecewiseLinear::linear(1.0, -0.3, 1.0),
                drive: PiecewiseConstant::constant(0.0),
                sigma0: 0.9,
                horizon: 1.0,
            },
        ),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRow {
    pub dt: f64,
    pub sup_error: f64,
    /// `sup_error / dt`
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStudy {
    pub case: String,
    pub rows: Vec<OrderRow>,
    /// `log₂`-type estimates between consecutive step sizes.
    pub orders: Vec<f64>,
    pub min_order: f64,
    pub max_constant: f64,
}

/// Production sweep against the exact stop operator over several `Δt`.
pub fn order_study(case: &str, p: &ScalarSweepProblem, dts: &[f64]) -> Result<OrderStudy> {
    if dts.len() < 2 || dts.windows(2).any(|w| !(w[1] < w[0])) || !(dts[dts.len() - 1] > 0.0) {
        return Err(Error::BadParameters(format!("order study needs at least two positive, strictly decreasing steps, got {dts:?}")));
    }
    let exact = stop_operator_exact(p)?;
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let (s, _) = production_sweep(p, dt)?;
        let sup_error = sup_interpolation_error(&exact, dt, &s);
        rows.push(OrderRow { dt, sup_error, constant: sup_error / dt });
    }
    let orders: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[0].sup_error / w[1].sup_error).ln() / (w[0].dt / w[1].dt).ln())
        .collect();
    Ok(OrderStudy {
        case: case.into(),
        min_order: orders.iter().copied().fold(f64::INFINITY, f64::min),
        max_constant: rows.iter().map(|r| r.constant).fold(0.0, f64::max),
        rows,
        orders,
    })
}
