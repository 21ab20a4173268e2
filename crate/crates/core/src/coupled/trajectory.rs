use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{TensorField, VectorField};

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "step",
    "t",
    "norm_v_H",
    "norm_sigma_H",
    "norm_sigma_V",
    "max_violation",
    "picard_iters",
    "contraction_ratio",
    "energy_lhs",
    "energy_rhs",
];

/// `(t, v, σ)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub t: f64,
    pub v: VectorField,
    pub sigma: TensorField,
}

/// One row of the trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub norm_v_h: f64,
    pub norm_sigma_h: f64,
    pub norm_sigma_v: f64,
    pub max_violation: f64,
    pub picard_iters: usize,
    /// Last successive-distance ratio of the window's Picard loop; NaN when
    /// there is none (staggered coupling, or convergence in one pass).
    pub contraction_ratio: f64,
    /// `|σ(t)|²_ℍ + κΔtΣ|σ|²_𝕍`
    pub energy_lhs: f64,
    /// `1 + ΔtΣ|v|²_𝑽`
    pub energy_rhs: f64,
    /// `|v(t)|_𝑽`, kept for the energy report.
    #[serde(skip)]
    pub norm_v_v: f64,
}

/// Picard history of one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub picard_iters: usize,
    /// Successive distances `|S(ṽ) − ṽ|` in `L²(t_start, t_end; 𝑽)`.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub kappa: f64,
    pub nu: f64,
    pub records: Vec<StepRecord>,
    pub windows: Vec<WindowRecord>,
    /// States at every step including `t = 0`, when kept.
    pub states: Vec<CoupledState>,
}

impl Trajectory {
    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("trajectory has an initial record")
    }

    /// Largest `|σ_a(t) − σ_b(t)|_ℍ` over times present in both runs.
    ///
    /// `b` may be a refinement of `a`; times are matched to within a quarter
    /// of the coarser step. Both runs need stored states.
    pub fn sup_stress_gap(&self, other: &Trajectory) -> Result<f64> {
        let (coarse, fine) = if self.dt >= other.dt { (self, other) } else { (other, self) };
        if coarse.states.is_empty() || fine.states.is_empty() {
            return Err(Error::BadParameters("stress gaps need trajectories with stored states".into()));
        }
        let mut worst = 0.0f64;
        let mut matched = 0;
        for s in &coarse.states {
            if let Some(f) = fine.states.iter().find(|f| (f.t - s.t).abs() < 0.25 * coarse.dt) {
                worst = worst.max(s.sigma.sub(&f.sigma).norm_hh());
                matched += 1;
            }
        }
        if matched == 0 {
            return Err(Error::BadParameters("the two trajectories share no output times".into()));
        }
        Ok(worst)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_rows(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(TRAJECTORY_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.t.to_string(),
                r.norm_v_h.to_string(),
                r.norm_sigma_h.to_string(),
                r.norm_sigma_v.to_string(),
                r.max_violation.to_string(),
                r.picard_iters.to_string(),
                r.contraction_ratio.to_string(),
                r.energy_lhs.to_string(),
                r.energy_rhs.to_string(),
            ])?;
        }
        Ok(())
    }
}
