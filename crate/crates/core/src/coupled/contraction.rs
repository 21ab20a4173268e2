use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{apply_map, path_distance, Problem, Trajectory, WindowData};
use crate::error::{Error, Result};
use crate::fields::{random, VectorField};

/// Two velocity guesses on the same window, one field per step.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub window: usize,
    pub a: Vec<VectorField>,
    pub b: Vec<VectorField>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowContraction {
    pub index: usize,
    pub t_start: f64,
    pub ratios: Vec<f64>,
    /// Pairs with `ṽ₁ = ṽ₂`, for which no ratio is defined.
    pub skipped: usize,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub window_length: f64,
    pub predicted_bound: f64,
    pub windows: Vec<WindowContraction>,
    /// Largest measured ratio; NaN if every pair was skipped.
    pub max_ratio: f64,
    pub skipped: usize,
}

/// Pairs around the converged velocity of every window, each member
/// perturbed independently by a masked Gaussian field of the given scale.
pub fn perturbed_probes(
    problem: &Problem,
    trajectory: &Trajectory,
    pairs_per_window: usize,
    scale: f64,
    seed: u64,
) -> Result<Vec<ProbePair>> {
    let grid = *problem.constraint.grid();
    let states = stored_states(trajectory)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (w, (first, steps)) in problem.partition()?.into_iter().enumerate() {
        let base = &states[first + 1..=first + steps];
        for _ in 0..pairs_per_window {
            let mut perturb = |v: &VectorField| v.axpy(1.0, &random::gaussian_vector_field(grid, &mut rng, scale));
            let a = base.iter().map(|s| perturb(&s.v)).collect();
            let b = base.iter().map(|s| perturb(&s.v)).collect();
            out.push(ProbePair { window: w, a, b });
        }
    }
    Ok(out)
}

fn stored_states(trajectory: &Trajectory) -> Result<&[super::CoupledState]> {
    if trajectory.states.len() != trajectory.records.len() {
        return Err(Error::BadParameters("contraction measurement needs a trajectory with stored states".into()));
    }
    Ok(&trajectory.states)
}

/// Empirical Lipschitz ratios `|S ṽ₁ − S ṽ₂| / |ṽ₁ − ṽ₂|` of the composed map,
/// each window started from the converged state of `trajectory`.
pub fn measure_contraction(problem: &Problem, trajectory: &Trajectory, probes: &[ProbePair]) -> Result<ContractionReport> {
    let states = stored_states(trajectory)?;
    let partition = problem.partition()?;
    let t0 = problem.window_length()?;
    let mut windows: Vec<WindowContraction> = partition
        .iter()
        .enumerate()
        .map(|(index, &(first, _))| WindowContraction {
            index,
            t_start: problem.time(first),
            ratios: Vec::new(),
            skipped: 0,
            max_ratio: f64::NAN,
        })
        .collect();
    let mut data: Option<WindowData> = None;
    for pair in probes {
        let &(first, steps) = partition
            .get(pair.window)
            .ok_or_else(|| Error::BadParameters(format!("probe refers to window {} of {}", pair.window, partition.len())))?;
        if pair.a.len() != steps || pair.b.len() != steps {
            return Err(Error::BadParameters(format!("probe on window {} must have {steps} fields", pair.window)));
        }
        if data.as_ref().map(|d| d.index) != Some(pair.window) {
            data = Some(WindowData::new(problem, pair.window, first, steps)?);
        }
        let d = data.as_ref().expect("window data was just built");
        let entry = &mut windows[pair.window];
        let gap = path_distance(&pair.a, &pair.b, problem.dt);
        if gap == 0.0 {
            entry.skipped += 1;
            continue;
        }
        let start = &states[first];
        let sa = apply_map(problem, d, start, &pair.a)?;
        let sb = apply_map(problem, d, start, &pair.b)?;
        let ratio = path_distance(&sa.v, &sb.v, problem.dt) / gap;
        entry.max_ratio = if entry.max_ratio.is_nan() { ratio } else { entry.max_ratio.max(ratio) };
        entry.ratios.push(ratio);
    }
    let max_ratio = windows.iter().map(|w| w.max_ratio).filter(|r| !r.is_nan()).fold(f64::NAN, f64::max);
    Ok(ContractionReport {
        window_length: t0,
        predicted_bound: problem.policy().predicted_bound(t0),
        skipped: windows.iter().map(|w| w.skipped).sum(),
        max_ratio,
        windows,
    })
}
