//! Smoothing of a merely continuous threshold in time, matching shrunk
//! initial stress, and the convergence study over the smoothed sequence.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::constraint::{sample_times, shrink_factor, ConstraintSet, ShiftField, ThresholdField, ThresholdRegularity};
use crate::coupled::{march, Problem, Trajectory};
use crate::error::{Error, Result};
use crate::fields::{Grid, TensorField};
use crate::par;
use crate::source::ScalarSource;
use crate::Regime;

/// Simpson panels used for the time convolution.
const PANELS: usize = 256;

/// Number of time intervals on which `sup|g_n − g|` is sampled.
const GAP_SAMPLES: usize = 1024;

/// Indices `n₁ < n₂ < …` and half-width rule `w(n) = w₀/n`.
#[derive(Debug, Clone)]
pub struct MollificationPlan {
    pub base: ThresholdField,
    pub indices: Vec<usize>,
    pub w0: f64,
    /// Data are extended by constants outside `[0, horizon]`.
    pub horizon: f64,
}

impl MollificationPlan {
    pub fn check(&self) -> Result<()> {
        if self.base.regularity() != ThresholdRegularity::Continuous {
            return Err(Error::BadPlan("base threshold must be tagged continuous".into()));
        }
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(Error::BadPlan(format!("w0 must be positive, got {}", self.w0)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::BadPlan(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.indices.is_empty() || self.indices[0] == 0 || self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadPlan(format!("indices must be positive and increasing, got {:?}", self.indices)));
        }
        Ok(())
    }

    pub fn half_width(&self, n: usize) -> f64 {
        self.w0 / n as f64
    }
}

/// Biweight kernel `15/(16w)·(1 − (s/w)²)²` on `[−w, w]` and its derivative.
fn kernel(s: f64, w: f64) -> (f64, f64) {
    let u = s / w;
    if u.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - u * u;
    (15.0 / (16.0 * w) * q * q, -15.0 * u * q / (4.0 * w * w))
}

/// `∫_{−w}^{s} kernel`.
fn kernel_mass(s: f64, w: f64) -> f64 {
    let u = (s / w).clamp(-1.0, 1.0);
    0.5 + 15.0 / 16.0 * (u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0)
}

/// Time convolution of a scalar source with the biweight kernel, clamped to `[c1, c2]`.
struct Mollified {
    base: Arc<dyn ScalarSource>,
    w: f64,
    horizon: f64,
    c1: f64,
    c2: f64,
}

impl fmt::Debug for Mollified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mollified").field("w", &self.w).field("horizon", &self.horizon).finish_non_exhaustive()
    }
}

impl Mollified {
    /// `(∫ρ(s) g(t−s) ds, ∫ρ′(s) g(t−s) ds)` with `g` extended by constants.
    ///
    /// The constant tails are integrated exactly; the part where `t − s`
    /// lies in `[0, T]` by composite Simpson.
    fn convolve(&self, grid: &Grid, t: f64) -> (Vec<f64>, Vec<f64>) {
        let w = self.w;
        let n = grid.node_count();
        let mut value = vec![0.0; n];
        let mut rate = vec![0.0; n];
        let before = 1.0 - kernel_mass(t, w);
        let after = kernel_mass(t - self.horizon, w);
        if before > 0.0 {
            let g0 = self.base.sample(grid, 0.0);
            let edge = kernel(t, w).0;
            for p in 0..n {
                value[p] += before * g0[p];
                rate[p] -= edge * g0[p];
            }
        }
        if after > 0.0 {
            let g1 = self.base.sample(grid, self.horizon);
            let edge = kernel(t - self.horizon, w).0;
            for p in 0..n {
                value[p] += after * g1[p];
                rate[p] += edge * g1[p];
            }
        }
        let lo = (t - self.horizon).max(-w);
        let hi = t.min(w);
        if hi > lo {
            let step = (hi - lo) / PANELS as f64;
            for k in 0..=PANELS {
                let weight = match k {
                    0 => 1.0,
                    k if k == PANELS => 1.0,
                    k if k % 2 == 1 => 4.0,
                    _ => 2.0,
                } * step
                    / 3.0;
                let s = lo + k as f64 * step;
                let (rho, drho) = kernel(s, w);
                if rho == 0.0 && drho == 0.0 {
                    continue;
                }
                let g = self.base.sample(grid, (t - s).clamp(0.0, self.horizon));
                for p in 0..n {
                    value[p] += weight * rho * g[p];
                    rate[p] += weight * drho * g[p];
                }
            }
        }
        (value, rate)
    }
}

impl ScalarSource for Mollified {
    fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        self.convolve(grid, t).0.into_iter().map(|g| g.clamp(self.c1, self.c2)).collect()
    }

    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        let (value, rate) = self.convolve(grid, t);
        Some(
            value
                .iter()
                .zip(rate)
                .map(|(&g, r)| if g < self.c1 || g > self.c2 { 0.0 } else { r })
                .collect(),
        )
    }
}

/// `g_n`: the base threshold smoothed in time over half-width `w₀/n`,
/// tagged H¹ in time with the same bounds.
pub fn mollify_threshold(plan: &MollificationPlan, n: usize) -> Result<ThresholdField> {
    plan.check()?;
    if n == 0 {
        return Err(Error::BadPlan("index must be positive".into()));
    }
    let base = &plan.base;
    let source = Mollified {
        base: Arc::clone(base.source()),
        w: plan.half_width(n),
        horizon: plan.horizon,
        c1: base.c1(),
        c2: base.c2(),
    };
    ThresholdField::from_arc(Arc::new(source), base.c1(), base.c2(), ThresholdRegularity::H1InTime)
}

/// `max |g_n − g|` over nodes and equally spaced times on `[0, horizon]`.
pub fn sup_gap(a: &ThresholdField, b: &ThresholdField, grid: &Grid, horizon: f64) -> f64 {
    let times = sample_times(horizon, GAP_SAMPLES);
    let gaps = par::map_jobs(times, |t| {
        a.values(grid, t).iter().zip(b.values(grid, t)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    });
    gaps.into_iter().fold(0.0, f64::max)
}

/// `σ_{0,n} = θ₀(σ₀ + σ*(0)) − σ*(0)` with `θ₀ = 1 − max|g_n(0) − g(0)|/C₁`.
pub fn shrink_initial(
    sigma0: &TensorField,
    g: &ThresholdField,
    g_n: &ThresholdField,
    shift: &ShiftField,
    membership_tol: f64,
) -> Result<TensorField> {
    let grid = *sigma0.grid();
    let cs = ConstraintSet::new(grid, g.clone(), shift.clone());
    let m = cs.membership(sigma0, 0.0, membership_tol)?;
    if !m.feasible {
        return Err(Error::AssumptionViolation {
            assumption: "A2".into(),
            detail: format!("sigma0 is outside K(0): max violation {:e}", m.max_violation),
        });
    }
    let (theta, _) = shrink_factor(&g.values(&grid, 0.0), &g_n.values(&grid, 0.0), g.c1())?;
    if theta == 1.0 {
        return Ok(sigma0.clone());
    }
    let s0 = shift.at(&grid, 0.0);
    Ok(sigma0.add(&s0).scaled(theta).sub(&s0))
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyRow {
    pub n: usize,
    pub sup_g_gap: f64,
    /// `sup_t |σ_n(t) − σ_{n'}(t)|_ℍ` against the next index; NaN for the last.
    pub d_n: f64,
    pub runtime_seconds: f64,
    /// `max|σ_{0,n} − σ₀|_ℍ`
    pub initial_shift: f64,
    pub initial_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyReport {
    pub rows: Vec<CauchyRow>,
    pub gaps_nonincreasing: bool,
    pub d_strictly_decreasing: bool,
    /// Finest trajectory checked against the unsmoothed `K(t)` with
    /// tolerance `sup|g_n − g|`.
    pub finest_feasible: bool,
    pub finest_violation: f64,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

impl CauchyReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "sup_g_gap", "d_n", "runtime_seconds"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), r.sup_g_gap.to_string(), r.d_n.to_string(), r.runtime_seconds.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves the regularized problem once per plan index with `g_n` and
/// `σ_{0,n}` in place of `g` and `σ₀`, and compares consecutive solutions.
pub fn cauchy_study(problem: &Problem, plan: &MollificationPlan) -> Result<CauchyReport> {
    plan.check()?;
    if plan.indices.len() < 2 {
        return Err(Error::BadPlan("a convergence study needs at least two indices".into()));
    }
    if problem.regime != Regime::Regularized {
        return Err(Error::BadParameters("the convergence study runs the regularized regime".into()));
    }
    let grid = *problem.constraint.grid();
    let base = problem.constraint.threshold();
    let shift = problem.constraint.shift();
    let runs = par::map_jobs(plan.indices.clone(), |n| -> Result<(CauchyRow, Trajectory)> {
        let clock = Instant::now();
        let g_n = mollify_threshold(plan, n)?;
        g_n.validate(&grid, &sample_times(problem.horizon, 64))?;
        let sigma0 = shrink_initial(&problem.sigma0, base, &g_n, shift, problem.config.membership_tol)?;
        let cs = ConstraintSet::new(grid, g_n.clone(), shift.clone());
        let initial_violation = cs.membership(&sigma0, 0.0, 0.0)?.max_violation;
        let p = Problem { constraint: cs, sigma0: sigma0.clone(), ..problem.clone() };
        let traj = march(&p, true)?;
        let row = CauchyRow {
            n,
            sup_g_gap: sup_gap(&g_n, base, &grid, problem.horizon),
            d_n: f64::NAN,
            runtime_seconds: clock.elapsed().as_secs_f64(),
            initial_shift: sigma0.sub(&problem.sigma0).norm_hh(),
            initial_violation,
        };
        Ok((row, traj))
    });
    let (mut rows, trajectories): (Vec<_>, Vec<_>) = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    for i in 0..rows.len() - 1 {
        rows[i].d_n = trajectories[i].sup_stress_gap(&trajectories[i + 1])?;
    }
    let finest = trajectories.last().expect("at least two runs");
    let tol = rows.last().expect("at least two runs").sup_g_gap + problem.config.membership_tol;
    let mut finest_violation = 0.0f64;
    for s in &finest.states {
        finest_violation = finest_violation.max(problem.constraint.membership(&s.sigma, s.t, tol)?.max_violation);
    }
    let d: Vec<f64> = rows.iter().map(|r| r.d_n).filter(|d| !d.is_nan()).collect();
    Ok(CauchyReport {
        gaps_nonincreasing: rows.windows(2).all(|w| w[1].sup_g_gap <= w[0].sup_g_gap),
        d_strictly_decreasing: d.windows(2).all(|w| w[1] < w[0]),
        finest_feasible: finest_violation <= tol,
        finest_violation,
        rows,
        trajectories,
    })
}
