use std::path::Path;

use serde::Serialize;

use crate::coupled::Trajectory;
use crate::error::Result;

/// Discrete energy quantities at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    /// `|σ|²_ℍ + κΔtΣ|σ|²_𝕍`
    pub e1: f64,
    /// `ΔtΣ|σ′|²_ℍ + κ|σ|²_𝕍`; NaN without stored states.
    pub e2: f64,
    /// `|v|²_𝑯 + νΔtΣ|v|²_𝑽`
    pub e3: f64,
    /// `1 + ΔtΣ|v|²_𝑽`
    pub data_v: f64,
    /// `1 + ΔtΣ|σ|²_𝕍`
    pub data_sigma: f64,
    /// `½|σ|²_ℍ + ½|v|²_𝑯`
    pub mechanical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub kappa: f64,
    pub nu: f64,
    pub rows: Vec<EnergyRow>,
    pub sup_e1: f64,
    pub sup_e2: f64,
    pub sup_e3: f64,
    /// `sup_t e1 / data_v(T)`, a candidate for the constant bounding e1.
    pub ratio_e1: f64,
    pub ratio_e2: f64,
    /// `sup_t e3 / data_sigma(T)`
    pub ratio_e3: f64,
    /// Largest one-step increase of `|σ|_ℍ`; nonpositive when nonincreasing.
    pub max_sigma_increase: f64,
    /// Largest one-step increase of the mechanical energy.
    pub max_mechanical_increase: f64,
}

impl EnergyReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Energy left-hand sides and data functionals along a trajectory.
pub fn energy_report(traj: &Trajectory) -> EnergyReport {
    let (dt, kappa, nu) = (traj.dt, traj.kappa, traj.nu);
    let with_states = traj.states.len() == traj.records.len();
    let mut rows = Vec::with_capacity(traj.records.len());
    let (mut sum_sigma_v, mut sum_v_v, mut sum_rate) = (0.0, 0.0, 0.0);
    for (n, r) in traj.records.iter().enumerate() {
        if n > 0 {
            sum_sigma_v += r.norm_sigma_v.powi(2);
            sum_v_v += r.norm_v_v.powi(2);
            if with_states {
                let rate = traj.states[n].sigma.sub(&traj.states[n - 1].sigma).norm_hh() / dt;
                sum_rate += rate * rate;
            }
        }
        rows.push(EnergyRow {
            step: r.step,
            t: r.t,
            e1: r.norm_sigma_h.powi(2) + kappa * dt * sum_sigma_v,
            e2: if with_states { dt * sum_rate + kappa * r.norm_sigma_v.powi(2) } else { f64::NAN },
            e3: r.norm_v_h.powi(2) + nu * dt * sum_v_v,
            data_v: 1.0 + dt * sum_v_v,
            data_sigma: 1.0 + dt * sum_sigma_v,
            mechanical: 0.5 * (r.norm_sigma_h.powi(2) + r.norm_v_h.powi(2)),
        });
    }
    let sup = |f: fn(&EnergyRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let (sup_e1, sup_e2, sup_e3) = (sup(|r| r.e1), if with_states { sup(|r| r.e2) } else { f64::NAN }, sup(|r| r.e3));
    let last = rows.last().copied().expect("trajectory has an initial record");
    let increase = |f: fn(&EnergyRow) -> f64| {
        rows.windows(2).map(|w| f(&w[1]) - f(&w[0])).fold(f64::NEG_INFINITY, f64::max)
    };
    EnergyReport {
        kappa,
        nu,
        sup_e1,
        sup_e2,
        sup_e3,
        ratio_e1: sup_e1 / last.data_v,
        ratio_e2: sup_e2 / last.data_v,
        ratio_e3: sup_e3 / last.data_sigma,
        max_sigma_increase: traj.records.windows(2).map(|w| w[1].norm_sigma_h - w[0].norm_sigma_h).fold(f64::NEG_INFINITY, f64::max),
        max_mechanical_increase: increase(|r| r.mechanical),
        rows,
    }
}
