use crate::constraint::ConstraintSnapshot;
use crate::error::{Error, Result};
use crate::fields::{div_norm_sq_estimate, divergence, strain, tensor_inner, TensorField};

/// One implicit stress step onto a frozen `K(t_next)`.
///
/// `drive` is `ε(ṽ) + h` evaluated at `t_next`.
#[derive(Debug, Clone, Copy)]
pub struct StressStepProblem<'a> {
    pub sigma_prev: &'a TensorField,
    pub drive: &'a TensorField,
    pub constraint: &'a ConstraintSnapshot,
    pub dt: f64,
    pub kappa: f64,
    pub prox_tol: f64,
    pub prox_max_iters: usize,
}

/// Result of a proximal solve.
#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub tau: TensorField,
    pub iterations: usize,
    /// Final fixed-point residual `|τ − P_K(τ − ∇J(τ)/L)|_ℍ`.
    pub residual: f64,
}

fn check(p: &StressStepProblem) -> Result<()> {
    if !(p.dt > 0.0) || !(p.kappa >= 0.0) {
        return Err(Error::BadParameters(format!("stress step needs dt > 0, kappa >= 0 (dt = {}, kappa = {})", p.dt, p.kappa)));
    }
    p.sigma_prev.same_grid(p.drive)?;
    p.sigma_prev.same_grid(&p.constraint.shift)?;
    Ok(())
}

/// Catching-up step `σ^{n+1} = P_{K(t_next)}(σ^n + Δt·drive)`.
pub fn stress_step_catchup(p: &StressStepProblem) -> Result<TensorField> {
    check(p)?;
    if p.kappa != 0.0 {
        return Err(Error::BadParameters(format!("catching-up step needs kappa = 0, got {}", p.kappa)));
    }
    Ok(p.constraint.project(&p.sigma_prev.axpy(p.dt, p.drive)))
}

/// Minimizes `J(τ) = |τ − σ_prev|²/(2Δt) + κ/2 |τ|²_𝕍 − (drive, τ)` over `K`.
pub fn stress_step_regularized(p: &StressStepProblem) -> Result<ProxOutcome> {
    check(p)?;
    if !(p.kappa > 0.0) {
        return Err(Error::BadParameters(format!("regularized step needs kappa > 0, got {}", p.kappa)));
    }
    let warm = p.constraint.project(&p.sigma_prev.axpy(p.dt, p.drive));
    Prox { sigma_prev: p.sigma_prev, drive: Some(p.drive), k: p.constraint, dt: p.dt, kappa: p.kappa }
        .solve(warm, p.prox_tol, p.prox_max_iters)
}

/// Resolvent `J_λ τ = argmin |π − τ|²/(2λ) + φᵗ(π)`.
///
/// For `κ = 0` this is the projection onto `K`, independent of `λ`.
pub fn yosida_resolvent(
    tau: &TensorField,
    k: &ConstraintSnapshot,
    lambda: f64,
    kappa: f64,
    tol: f64,
    max_iters: usize,
) -> Result<TensorField> {
    if !(lambda > 0.0) || !(kappa >= 0.0) {
        return Err(Error::BadParameters(format!("resolvent needs lambda > 0, kappa >= 0 (lambda = {lambda}, kappa = {kappa})")));
    }
    tau.same_grid(&k.shift)?;
    if kappa == 0.0 {
        return Ok(k.project(tau));
    }
    let warm = k.project(tau);
    Ok(Prox { sigma_prev: tau, drive: None, k, dt: lambda, kappa }.solve(warm, tol, max_iters)?.tau)
}

/// `(τ − J_λ τ)/λ`, the gradient of the Moreau–Yosida envelope.
pub fn yosida_gradient(
    tau: &TensorField,
    k: &ConstraintSnapshot,
    lambda: f64,
    kappa: f64,
    tol: f64,
    max_iters: usize,
) -> Result<TensorField> {
    let j = yosida_resolvent(tau, k, lambda, kappa, tol, max_iters)?;
    Ok(tau.sub(&j).scaled(1.0 / lambda))
}

struct Prox<'a> {
    sigma_prev: &'a TensorField,
    drive: Option<&'a TensorField>,
    k: &'a ConstraintSnapshot,
    dt: f64,
    kappa: f64,
}

const CHECK_EVERY: usize = 10;

impl Prox<'_> {
    /// `∇J(τ) = (τ − σ_prev)/Δt + κτ − κ ε(div τ) − drive`
    fn gradient(&self, tau: &TensorField) -> TensorField {
        let ediv = strain(&divergence(tau));
        let inv_dt = 1.0 / self.dt;
        let kappa = self.kappa;
        let prev = self.sigma_prev.values();
        let e = ediv.values();
        let d = self.drive.map(|d| d.values());
        tau.map(|p, x| {
            let mut g = (*x - prev[p]) * inv_dt + *x * kappa - e[p] * kappa;
            if let Some(d) = d {
                g -= d[p];
            }
            g
        })
    }

    fn step(&self, y: &TensorField, inv_l: f64) -> TensorField {
        self.k.project(&y.axpy(-inv_l, &self.gradient(y)))
    }

    fn residual(&self, x: &TensorField, inv_l: f64) -> f64 {
        x.sub(&self.step(x, inv_l)).norm_hh()
    }

    /// Accelerated projected gradient with fixed step `1/L` and gradient restart.
    fn solve(&self, start: TensorField, tol: f64, max_iters: usize) -> Result<ProxOutcome> {
        let grid = *start.grid();
        let l = 1.0 / self.dt + self.kappa * (1.0 + div_norm_sq_estimate(&grid));
        let inv_l = 1.0 / l;
        let mut x = start;
        let mut res = self.residual(&x, inv_l);
        if res <= tol {
            return Ok(ProxOutcome { tau: x, iterations: 0, residual: res });
        }
        let mut y = x.clone();
        let mut t = 1.0f64;
        for it in 1..=max_iters {
            let x_new = self.step(&y, inv_l);
            let restart = tensor_inner(&y.sub(&x_new), &x_new.sub(&x))? > 0.0;
            if restart {
                t = 1.0;
                y = x_new.clone();
            } else {
                let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = x_new.axpy((t - 1.0) / t_new, &x_new.sub(&x));
                t = t_new;
            }
            x = x_new;
            if it % CHECK_EVERY == 0 || it == max_iters {
                res = self.residual(&x, inv_l);
                if !res.is_finite() {
                    break;
                }
                if res <= tol {
                    return Ok(ProxOutcome { tau: x, iterations: it, residual: res });
                }
            }
        }
        Err(Error::ProxNoConvergence { iterations: max_iters, residual: res })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{ConstraintSet, ShiftField, ThresholdField};
    use crate::fields::{random, tensor_v_inner, Face, FaceSet, Grid};
    use crate::tensor::SymTensor3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snap(grid: Grid, g: f64) -> ConstraintSnapshot {
        ConstraintSet::new(grid, ThresholdField::constant(g).unwrap(), ShiftField::zero()).snapshot(0.0).unwrap()
    }

    fn problem<'a>(prev: &'a TensorField, drive: &'a TensorField, k: &'a ConstraintSnapshot, dt: f64, kappa: f64) -> StressStepProblem<'a> {
        StressStepProblem { sigma_prev: prev, drive, constraint: k, dt, kappa, prox_tol: 1e-12, prox_max_iters: 5000 }
    }

    #[test]
    fn catchup_examples() {
        let g = Grid::point();
        let k = snap(g, 0.5);
        let zero = TensorField::zeros(g);
        let inside = TensorField::constant(g, SymTensor3::diag(0.4, -0.2, -0.2));
        assert_eq!(stress_step_catchup(&problem(&inside, &zero, &k, 0.1, 0.0)).unwrap(), inside);

        let d = SymTensor3::new(1.0, -0.5, -0.5, 0.7, 0.0, -0.3);
        let d = d * (3.0 / d.norm());
        let drive = TensorField::constant(g, d * 10.0);
        let out = stress_step_catchup(&problem(&zero, &drive, &k, 0.1, 0.0)).unwrap();
        assert!((out.values()[0] - d * (1.0 / 3.0)).norm() < 1e-14);
        assert!(stress_step_catchup(&problem(&zero, &drive, &k, 0.1, 1.0)).is_err());
    }

    #[test]
    fn regularized_zero_data_gives_zero() {
        let g = Grid::new([3, 3, 3], [0.5; 3], FaceSet::of(&[Face::XMin])).unwrap();
        let k = snap(g, 1.0);
        let z = TensorField::zeros(g);
        let out = stress_step_regularized(&problem(&z, &z, &k, 0.1, 1.0)).unwrap();
        assert_eq!(out.tau, z);
    }

    #[test]
    fn regularized_unconstrained_point_matches_closed_form() {
        let g = Grid::point();
        let k = snap(g, 1e6);
        let prev = TensorField::constant(g, SymTensor3::new(0.3, -0.1, 0.2, 0.5, -0.4, 0.1));
        let drive = TensorField::constant(g, SymTensor3::new(1.0, 2.0, -1.0, 0.0, 0.3, 0.2));
        let (dt, kappa) = (0.05, 0.7);
        let out = stress_step_regularized(&problem(&prev, &drive, &k, dt, kappa)).unwrap();
        let expect = prev.axpy(dt, &drive).scaled(1.0 / (1.0 + kappa * dt));
        assert!(out.tau.sub(&expect).norm_hh() <= 1e-11);
    }

    /// Plain projected gradient with a small step, as an independent reference.
    fn brute_force(p: &StressStepProblem, iters: usize) -> TensorField {
        let grid = *p.sigma_prev.grid();
        let l = 1.0 / p.dt + p.kappa * (1.0 + grid.difference_norm_bound());
        let step = 0.5 / l;
        let mut x = TensorField::zeros(grid);
        for _ in 0..iters {
            let ediv = strain(&divergence(&x));
            let grad = x
                .sub(p.sigma_prev)
                .scaled(1.0 / p.dt)
                .axpy(p.kappa, &x)
                .axpy(-p.kappa, &ediv)
                .sub(p.drive);
            x = p.constraint.project(&x.axpy(-step, &grad));
        }
        x
    }

    #[test]
    fn regularized_matches_brute_force_on_small_grid() {
        let g = Grid::new([2, 2, 2], [0.5; 3], FaceSet::of(&[Face::XMin])).unwrap();
        let k = snap(g, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let prev = k.project(&random::gaussian_tensor_field(g, &mut rng, 1.0));
        let drive = random::gaussian_tensor_field(g, &mut rng, 20.0);
        let p = problem(&prev, &drive, &k, 0.1, 1.0);
        let out = stress_step_regularized(&p).unwrap();
        let reference = brute_force(&p, 200_000);
        assert!(out.tau.sub(&reference).norm_hh() < 1e-6);
        assert!(k.membership(&out.tau, 1e-12).feasible);
    }

    #[test]
    fn regularized_output_satisfies_variational_inequality() {
        let g = Grid::new([4, 3, 3], [0.25, 0.3, 0.3], FaceSet::of(&[Face::XMin])).unwrap();
        let k = snap(g, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prev = k.project(&random::gaussian_tensor_field(g, &mut rng, 1.0));
        let drive = random::gaussian_tensor_field(g, &mut rng, 10.0);
        let (dt, kappa) = (0.05, 0.5);
        let p = problem(&prev, &drive, &k, dt, kappa);
        let out = stress_step_regularized(&p).unwrap().tau;
        let rhs0 = prev.axpy(dt, &drive).sub(&out);
        let scale = 1.0 + out.norm_hh() + drive.norm_hh();
        for _ in 0..50 {
            let test = k.project(&random::gaussian_tensor_field(g, &mut rng, 1.0));
            let diff = test.sub(&out);
            let lhs = tensor_inner(&rhs0, &diff).unwrap();
            let rhs = dt * kappa * tensor_v_inner(&out, &diff).unwrap();
            assert!(lhs <= rhs + 1e-9 * scale, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn resolvent_examples() {
        let g = Grid::point();
        let k = snap(g, 0.5);
        let inside = TensorField::constant(g, SymTensor3::diag(0.2, -0.1, -0.1));
        assert_eq!(yosida_resolvent(&inside, &k, 0.3, 0.0, 1e-12, 100).unwrap(), inside);
        let outside = TensorField::constant(g, SymTensor3::diag(4.0, -2.0, -2.0));
        let a = yosida_resolvent(&outside, &k, 0.5, 0.0, 1e-12, 100).unwrap();
        let b = yosida_resolvent(&outside, &k, 0.1, 0.0, 1e-12, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, k.project(&outside));

        let big = snap(g, 1e6);
        let tau = TensorField::constant(g, SymTensor3::new(1.0, 2.0, 3.0, -1.0, 0.5, 0.25));
        let j = yosida_resolvent(&tau, &big, 0.4, 1.0, 1e-13, 1000).unwrap();
        assert!(j.sub(&tau.scaled(1.0 / 1.4)).norm_hh() < 1e-12);
        assert!(yosida_resolvent(&tau, &big, 0.0, 1.0, 1e-13, 10).is_err());
    }

    #[test]
    fn yosida_gradient_lies_in_normal_cone() {
        let g = Grid::new([3, 3, 2], [0.3; 3], FaceSet::of(&[Face::YMin])).unwrap();
        let k = snap(g, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tau = random::gaussian_tensor_field(g, &mut rng, 2.0);
        let lambda = 0.2;
        let j = yosida_resolvent(&tau, &k, lambda, 0.0, 1e-12, 100).unwrap();
        let grad = yosida_gradient(&tau, &k, lambda, 0.0, 1e-12, 100).unwrap();
        for _ in 0..30 {
            let test = k.project(&random::gaussian_tensor_field(g, &mut rng, 1.0));
            assert!(tensor_inner(&grad, &test.sub(&j)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn catchup_is_nonexpansive() {
        let g = Grid::new([3, 3, 3], [0.3; 3], FaceSet::of(&[Face::XMin])).unwrap();
        let k = snap(g, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let drive = random::gaussian_tensor_field(g, &mut rng, 3.0);
        for _ in 0..20 {
            let a = random::gaussian_tensor_field(g, &mut rng, 1.0);
            let b = random::gaussian_tensor_field(g, &mut rng, 1.0);
            let pa = stress_step_catchup(&problem(&a, &drive, &k, 0.1, 0.0)).unwrap();
            let pb = stress_step_catchup(&problem(&b, &drive, &k, 0.1, 0.0)).unwrap();
            assert!(pa.sub(&pb).norm_hh() <= a.sub(&b).norm_hh() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let g = Grid::new([4, 4, 4], [0.25; 3], FaceSet::of(&[Face::XMin])).unwrap();
        let k = snap(g, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prev = TensorField::zeros(g);
        let drive = random::gaussian_tensor_field(g, &mut rng, 10.0);
        let mut p = problem(&prev, &drive, &k, 0.5, 1.0);
        p.prox_max_iters = 2;
        assert!(matches!(stress_step_regularized(&p), Err(Error::ProxNoConvergence { iterations: 2, .. })));
    }
}
