use crate::error::{Error, Result};
use crate::fields::{laplacian_form_apply, vec_inner, VectorField};

/// One implicit velocity step `(I + νΔt A) v = v_prev + Δt·source`.
#[derive(Debug, Clone, Copy)]
pub struct VelocityStepProblem<'a> {
    pub v_prev: &'a VectorField,
    /// `div σ + f` at the step time.
    pub source: &'a VectorField,
    pub nu: f64,
    pub dt: f64,
    pub linear_tol: f64,
    pub linear_max_iters: usize,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub v: VectorField,
    pub iterations: usize,
    /// Final `|rhs − Mv|_H / |rhs|_H`.
    pub residual: f64,
}

/// Conjugate gradients on the masked space, started from the right-hand side.
pub fn velocity_step(p: &VelocityStepProblem) -> Result<CgOutcome> {
    if !(p.dt > 0.0) || !(p.nu > 0.0) {
        return Err(Error::BadParameters(format!("velocity step needs dt > 0, nu > 0 (dt = {}, nu = {})", p.dt, p.nu)));
    }
    p.v_prev.same_grid(p.source)?;
    let c = p.nu * p.dt;
    let apply = |z: &VectorField| z.axpy(1.0, &laplacian_form_apply(z, c));
    let mut rhs = p.v_prev.axpy(p.dt, p.source);
    rhs.apply_mask();
    let b_norm = rhs.norm_h();
    if b_norm == 0.0 {
        return Ok(CgOutcome { v: rhs, iterations: 0, residual: 0.0 });
    }
    let mut x = rhs.clone();
    let mut r = rhs.sub(&apply(&x));
    let mut rr = vec_inner(&r, &r)?;
    let target = (p.linear_tol * b_norm).powi(2);
    if rr <= target {
        return Ok(CgOutcome { v: x, iterations: 0, residual: rr.sqrt() / b_norm });
    }
    let mut d = r.clone();
    for it in 1..=p.linear_max_iters {
        let md = apply(&d);
        let alpha = rr / vec_inner(&d, &md)?;
        x = x.axpy(alpha, &d);
        r = r.axpy(-alpha, &md);
        let rr_new = vec_inner(&r, &r)?;
        if !rr_new.is_finite() {
            break;
        }
        if rr_new <= target {
            return Ok(CgOutcome { v: x, iterations: it, residual: rr_new.sqrt() / b_norm });
        }
        d = r.axpy(rr_new / rr, &d);
        rr = rr_new;
    }
    Err(Error::LinearNoConvergence { iterations: p.linear_max_iters, residual: rr.sqrt() / b_norm })
}
