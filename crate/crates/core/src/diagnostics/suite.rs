use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::constraint::ConstraintSnapshot;
use crate::error::{Error, Result};
use crate::fields::{divergence, gradient, random, strain, tensor_inner, vec_inner, Face, FaceSet, Grid, TensorField};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub grids: Vec<Grid>,
    pub gauss_green_pairs: usize,
    pub korn_samples: usize,
    pub projection_pairs: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let grid = |n: [usize; 3]| {
            let h = n.map(|k| 1.0 / k as f64);
            Grid::new(n, h, FaceSet::of(&[Face::XMin])).expect("suite grids are valid")
        };
        SuiteConfig {
            grids: vec![grid([4, 4, 4]), grid([8, 8, 8]), grid([5, 7, 3]), grid([16, 4, 1])],
            gauss_green_pairs: 100,
            korn_samples: 1000,
            projection_pairs: 1000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub invariant: String,
    pub instance: String,
    pub samples: usize,
    /// Worst observed defect; the check passes when `worst ≤ tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub pass: bool,
}

impl SuiteReport {
    /// The first failing entry as an error.
    pub fn check(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.pass) {
            Some(e) => Err(Error::SuiteFailure {
                invariant: e.invariant.clone(),
                instance: format!("{}: worst {:e} > {:e}", e.instance, e.worst, e.tolerance),
            }),
            None => Ok(()),
        }
    }
}

fn entry(invariant: &str, instance: String, samples: usize, worst: f64, tolerance: f64) -> SuiteEntry {
    SuiteEntry { invariant: invariant.into(), instance, samples, worst, tolerance, pass: worst <= tolerance }
}

/// `|(ε(z), τ) + (div τ, z)| / (|ε(z)||τ| + |div τ||z|)`
fn gauss_green(grid: Grid, pairs: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let z = random::gaussian_vector_field(grid, rng, 1.0);
        let tau = random::gaussian_tensor_field(grid, rng, 1.0);
        let (ez, dt) = (strain(&z), divergence(&tau));
        let defect = (tensor_inner(&ez, &tau)? + vec_inner(&dt, &z)?).abs();
        let size = ez.norm_hh() * tau.norm_hh() + dt.norm_h() * z.norm_h();
        worst = worst.max(if size > 0.0 { defect / size } else { defect });
    }
    Ok(worst)
}

/// `max (|ε(z)|_ℍ − |z|_𝑽) / |z|_𝑽`
fn korn(grid: Grid, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let z = random::gaussian_vector_field(grid, rng, 1.0);
        let v = z.norm_v();
        if v > 0.0 {
            worst = worst.max((strain(&z).norm_hh() - v) / v);
        }
    }
    worst.max(0.0)
}

/// On each degenerate axis: the gradient column and the divergence of a
/// tensor loaded only along that axis vanish.
fn degenerate_axes(grid: Grid, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for axis in (0..3).filter(|&a| grid.extents()[a] == 1) {
        let z = random::gaussian_vector_field(grid, rng, 1.0);
        for g in gradient(&z) {
            for row in g {
                worst = worst.max(row[axis].abs());
            }
        }
        let tau = TensorField::from_fn(grid, |x| {
            let mut a = [0.0; 6];
            a[axis] = 1.0 + x[0] * x[0] + x[1];
            SymTensor3::from_array(a)
        });
        for d in divergence(&tau).values() {
            worst = worst.max(d[axis].abs());
        }
    }
    worst
}

fn normal_tensor(rng: &mut ChaCha8Rng, scale: f64) -> SymTensor3 {
    SymTensor3::from_array(std::array::from_fn(|_| scale * rng.sample::<f64, _>(StandardNormal)))
}

struct ProjectionDefects {
    idempotence: f64,
    nonexpansive: f64,
    membership: f64,
}

fn projection_laws(pairs: usize, rng: &mut ChaCha8Rng) -> Result<ProjectionDefects> {
    let mut d = ProjectionDefects { idempotence: 0.0, nonexpansive: 0.0, membership: 0.0 };
    for _ in 0..pairs {
        let g = rng.random_range(0.05..3.0);
        let a = normal_tensor(rng, 2.0);
        let b = normal_tensor(rng, 2.0);
        let (pa, pb) = (a.project_deviatoric_ball(g)?, b.project_deviatoric_ball(g)?);
        let again = pa.project_deviatoric_ball(g)?;
        if again != pa {
            d.idempotence = d.idempotence.max((again - pa).norm().max(f64::MIN_POSITIVE));
        }
        let gap = (pa - pb).norm() - (a - b).norm();
        d.nonexpansive = d.nonexpansive.max(gap / (a - b).norm().max(f64::MIN_POSITIVE));
        d.membership = d.membership.max(pa.von_mises() - g).max(pb.von_mises() - g);
    }
    Ok(d)
}

/// Field-level projection with a random shift lands in the shifted set.
fn shifted_membership(grid: Grid, rng: &mut ChaCha8Rng) -> Result<f64> {
    let shift = random::gaussian_tensor_field(grid, rng, 0.5);
    let g: Vec<f64> = (0..grid.node_count()).map(|_| rng.random_range(0.1..2.0)).collect();
    let k = ConstraintSnapshot::new(0.0, g, shift)?;
    let tau = random::gaussian_tensor_field(grid, rng, 3.0);
    Ok(k.membership(&k.project(&tau), 0.0).max_violation)
}

/// Structural checks: Gauss–Green adjointness, the Korn-type bound,
/// projection laws and degenerate axes, on every configured grid.
pub fn invariant_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    for &grid in &cfg.grids {
        let name = grid.to_string();
        entries.push(entry("gauss_green", name.clone(), cfg.gauss_green_pairs, gauss_green(grid, cfg.gauss_green_pairs, &mut rng)?, 1e-12));
        entries.push(entry("korn", name.clone(), cfg.korn_samples, korn(grid, cfg.korn_samples, &mut rng), 1e-12));
        entries.push(entry("projection_membership_shifted", name.clone(), 1, shifted_membership(grid, &mut rng)?, 1e-12));
        if grid.extents().contains(&1) {
            entries.push(entry("degenerate_axis", name, 1, degenerate_axes(grid, &mut rng), 0.0));
        }
    }
    let d = projection_laws(cfg.projection_pairs, &mut rng)?;
    let n = cfg.projection_pairs;
    entries.push(entry("projection_idempotence", "single_tensor".into(), n, d.idempotence, 0.0));
    entries.push(entry("projection_nonexpansive", "single_tensor".into(), n, d.nonexpansive, 1e-12));
    entries.push(entry("projection_membership", "single_tensor".into(), n, d.membership, 1e-12));
    let pass = entries.iter().all(|e| e.pass);
    Ok(SuiteReport { entries, pass })
}
