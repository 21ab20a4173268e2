//! Assertable residuals of the variational inequalities, energy
//! quantities, constraint-level checks, and the structural invariant suite.

mod energy;
mod summary;
mod suite;
mod transport;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraint::ConstraintSnapshot;
use crate::coupled::{CoupledState, Problem, Trajectory};
use crate::error::{Error, Result};
use crate::fields::{divergence, random, strain, tensor_inner, vec_inner, TensorField, VectorField};
use crate::par;

pub use energy::{energy_report, EnergyReport, EnergyRow};
pub use suite::{invariant_suite, SuiteConfig, SuiteEntry, SuiteReport};
pub use summary::{Check, Summary};
pub use transport::{resolvent_check, shrink_transport_check, ResolventCheck, TransportCheck};

/// Worst slack at one recorded step; `slack ≥ 0` means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub step: usize,
    pub t: f64,
    pub min_slack: f64,
    /// `1 + |σ|_ℍ + |v|_𝑽 + |h|_ℍ`
    pub scale: f64,
    pub normalized: f64,
    /// Index of the test tensor or path attaining the minimum.
    pub worst_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub kind: String,
    pub seed: u64,
    pub tests: usize,
    pub rows: Vec<ResidualRow>,
    pub min_slack: f64,
    /// `min slack/scale` over steps.
    pub min_normalized: f64,
    pub worst_step: usize,
}

impl ResidualReport {
    fn new(kind: &str, seed: u64, tests: usize, rows: Vec<ResidualRow>) -> Self {
        let worst = rows
            .iter()
            .min_by(|a, b| a.normalized.total_cmp(&b.normalized))
            .copied();
        ResidualReport {
            kind: kind.into(),
            seed,
            tests,
            min_slack: rows.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min),
            min_normalized: worst.map_or(f64::INFINITY, |r| r.normalized),
            worst_step: worst.map_or(0, |r| r.step),
            rows,
        }
    }

    /// `min slack ≥ −tol·scale` at every step.
    pub fn passes(&self, tol: f64) -> bool {
        self.min_normalized >= -tol
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stored_states(traj: &Trajectory) -> Result<&[CoupledState]> {
    if traj.states.len() < 2 || traj.states.len() != traj.records.len() {
        return Err(Error::BadParameters("residual checks need a trajectory with stored states".into()));
    }
    Ok(&traj.states)
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Data of the pointwise inequality at step `n ≥ 1`, for
/// `slack(τ) = (ε(v) + h − σ′ − κσ, σ − τ)_ℍ − κ(div σ, div(σ − τ))_𝑯`.
struct StepTerms<'a> {
    sigma: &'a TensorField,
    lhs: TensorField,
    div_sigma: VectorField,
    kappa: f64,
    scale: f64,
    k: ConstraintSnapshot,
}

impl<'a> StepTerms<'a> {
    fn new(problem: &Problem, prev: &CoupledState, cur: &'a CoupledState, dt: f64) -> Result<Self> {
        let kappa = problem.effective_kappa();
        let h = problem.strain_rate.sample(cur.sigma.grid(), cur.t);
        let rate = cur.sigma.sub(&prev.sigma).scaled(1.0 / dt);
        let lhs = strain(&cur.v).add(&h).sub(&rate).axpy(-kappa, &cur.sigma);
        Ok(StepTerms {
            sigma: &cur.sigma,
            div_sigma: divergence(&cur.sigma),
            lhs,
            kappa,
            scale: 1.0 + cur.sigma.norm_hh() + cur.v.norm_v() + h.norm_hh(),
            k: problem.constraint.snapshot(cur.t)?,
        })
    }

    fn slack(&self, tau: &TensorField) -> Result<f64> {
        let e = self.sigma.sub(tau);
        let mut s = tensor_inner(&self.lhs, &e)?;
        if self.kappa != 0.0 {
            s -= self.kappa * vec_inner(&self.div_sigma, &divergence(&e))?;
        }
        Ok(s)
    }
}

/// Slack of the pointwise inequality at recorded step `step ≥ 1` for the
/// given test tensors, with `σ′` by backward difference.
pub fn vi_slacks(problem: &Problem, traj: &Trajectory, step: usize, taus: &[TensorField]) -> Result<Vec<f64>> {
    let states = stored_states(traj)?;
    if step == 0 || step >= states.len() {
        return Err(Error::BadParameters(format!("step {step} is not in 1..{}", states.len())));
    }
    let terms = StepTerms::new(problem, &states[step - 1], &states[step], traj.dt)?;
    taus.iter().map(|t| terms.slack(t)).collect()
}

/// Relative node scales of the random test tensors.
const TEST_SCALES: [f64; 3] = [0.1, 1.0, 3.0];

/// Pointwise inequality against `n_tests` random members of `K(t)` per
/// step: with the `κ`-term in the regularized regime, without it in the
/// sweeping regime.
pub fn vi_residual(problem: &Problem, traj: &Trajectory, n_tests: usize, seed: u64) -> Result<ResidualReport> {
    let states = stored_states(traj)?;
    let rows = par::map_jobs((1..states.len()).collect(), |n| -> Result<ResidualRow> {
        let terms = StepTerms::new(problem, &states[n - 1], &states[n], traj.dt)?;
        let grid = *states[n].sigma.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(seed, n));
        let spread = 1.0 + terms.sigma.norm_hh() / grid.volume().sqrt();
        let mut row = ResidualRow {
            step: n,
            t: states[n].t,
            min_slack: f64::INFINITY,
            scale: terms.scale,
            normalized: f64::INFINITY,
            worst_test: 0,
        };
        for i in 0..n_tests {
            let noise = random::gaussian_tensor_field(grid, &mut rng, spread * TEST_SCALES[i % TEST_SCALES.len()]);
            let tau = terms.k.project(&terms.sigma.add(&noise));
            let s = terms.slack(&tau)?;
            if s < row.min_slack {
                row.min_slack = s;
                row.worst_test = i;
            }
        }
        row.normalized = row.min_slack / row.scale;
        Ok(row)
    });
    let kind = if problem.effective_kappa() > 0.0 { "strong_vi_regularized" } else { "strong_vi_sweeping" };
    Ok(ResidualReport::new(kind, seed, n_tests, rows.into_iter().collect::<Result<_>>()?))
}

/// A feasible test path `η^k ∈ K(t_k)` at every recorded time.
pub type TestPath = Vec<TensorField>;

/// Projections of `A + B sin(2πt/T) + C t/T` with random fields `A, B, C`.
pub fn random_feasible_paths(problem: &Problem, traj: &Trajectory, n_paths: usize, seed: u64) -> Result<Vec<TestPath>> {
    let states = stored_states(traj)?;
    let grid = *states[0].sigma.grid();
    let horizon = states.last().expect("nonempty").t;
    let spread = 1.0
        + states.iter().map(|s| s.sigma.norm_hh()).fold(0.0, f64::max) / grid.volume().sqrt();
    let snapshots: Vec<ConstraintSnapshot> =
        states.iter().map(|s| problem.constraint.snapshot(s.t)).collect::<Result<_>>()?;
    Ok((0..n_paths)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(step_seed(seed, i));
            let a = random::gaussian_tensor_field(grid, &mut rng, spread);
            let b = random::gaussian_tensor_field(grid, &mut rng, spread);
            let c = random::gaussian_tensor_field(grid, &mut rng, spread);
            states
                .iter()
                .zip(&snapshots)
                .map(|(s, k)| {
                    let phase = s.t / horizon;
                    k.project(&a.axpy((std::f64::consts::TAU * phase).sin(), &b).axpy(phase, &c))
                })
                .collect()
        })
        .collect())
}

/// Time-integrated inequality against the given feasible paths, with the
/// integrals taken by the right-endpoint rule:
/// `½|σ₀ − η⁰|² − ½|σ^N − η^N|² − Σ Δt[(η′, σ − η) + κ(σ, σ − η)_𝕍 − (ε(v) + h, σ − η)] ≥ 0`.
pub fn weak_vi_slacks(problem: &Problem, traj: &Trajectory, paths: &[TestPath]) -> Result<Vec<Vec<f64>>> {
    let states = stored_states(traj)?;
    let dt = traj.dt;
    let kappa = problem.effective_kappa();
    let grid = *states[0].sigma.grid();
    let drives: Vec<TensorField> = states
        .iter()
        .map(|s| strain(&s.v).add(&problem.strain_rate.sample(&grid, s.t)))
        .collect();
    let div_sigma: Vec<VectorField> = states.iter().map(|s| divergence(&s.sigma)).collect();
    let out = par::map_jobs(paths.iter().collect(), |eta: &TestPath| -> Result<Vec<f64>> {
        if eta.len() != states.len() {
            return Err(Error::BadParameters(format!("test path has {} entries, expected {}", eta.len(), states.len())));
        }
        let initial = 0.5 * states[0].sigma.sub(&eta[0]).norm_hh().powi(2);
        let mut integral = 0.0;
        let mut slacks = Vec::with_capacity(states.len() - 1);
        for n in 1..states.len() {
            let e = states[n].sigma.sub(&eta[n]);
            let rate = eta[n].sub(&eta[n - 1]).scaled(1.0 / dt);
            let mut term = tensor_inner(&rate, &e)? - tensor_inner(&drives[n], &e)?;
            if kappa != 0.0 {
                term += kappa * (tensor_inner(&states[n].sigma, &e)? + vec_inner(&div_sigma[n], &divergence(&e))?);
            }
            integral += dt * term;
            slacks.push(initial - 0.5 * e.norm_hh().powi(2) - integral);
        }
        Ok(slacks)
    });
    out.into_iter().collect()
}

/// [`weak_vi_slacks`] over `n_paths` random feasible paths, minimum per step.
pub fn weak_vi_residual(problem: &Problem, traj: &Trajectory, n_paths: usize, seed: u64) -> Result<ResidualReport> {
    let states = stored_states(traj)?;
    let grid = *states[0].sigma.grid();
    let paths = random_feasible_paths(problem, traj, n_paths, seed)?;
    let slacks = weak_vi_slacks(problem, traj, &paths)?;
    let rows = (1..states.len())
        .map(|n| {
            let h = problem.strain_rate.sample(&grid, states[n].t);
            let scale = 1.0 + states[n].sigma.norm_hh() + states[n].v.norm_v() + h.norm_hh();
            let (worst_test, min_slack) = slacks
                .iter()
                .map(|s| s[n - 1])
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
            ResidualRow { step: n, t: states[n].t, min_slack, scale, normalized: min_slack / scale, worst_test }
        })
        .collect();
    Ok(ResidualReport::new("weak_vi", seed, n_paths, rows))
}

#[cfg(test)]
mod tests;
