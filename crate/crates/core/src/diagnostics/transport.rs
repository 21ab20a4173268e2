use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraint::ConstraintSet;
use crate::error::{Error, Result};
use crate::fields::{divergence, random, tensor_inner, vec_inner};
use crate::subsolvers::yosida_resolvent;

/// Membership of shrink-transported points in the later set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportCheck {
    pub samples: usize,
    /// Pairs whose threshold gap reached `C₁`.
    pub skipped_wide: usize,
    pub worst_violation: f64,
}

/// Transports random `τ ∈ K(s)` to `t > s` for `samples` random triples and
/// records the worst membership violation in `K(t)`.
pub fn shrink_transport_check(cs: &ConstraintSet, horizon: f64, samples: usize, seed: u64) -> Result<TransportCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 2.0 * (2.0 * cs.threshold().c2()).sqrt();
    let mut out = TransportCheck { samples, skipped_wide: 0, worst_violation: 0.0 };
    for _ in 0..samples {
        let (a, b) = (rng.random_range(0.0..=horizon), rng.random_range(0.0..=horizon));
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let tau = cs.project(&random::gaussian_tensor_field(*cs.grid(), &mut rng, spread), s)?;
        match cs.shrink_transport(&tau, s, t, 1e-12) {
            Ok(shrink) => {
                let m = cs.membership(&shrink.tau, t, 0.0)?;
                out.worst_violation = out.worst_violation.max(m.max_violation);
            }
            Err(Error::WindowTooWide { .. }) => out.skipped_wide += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Optimality of the resolvent `π = J_λ τ` against feasible tests `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventCheck {
    pub samples: usize,
    pub tests: usize,
    /// `min [κ(π, η − π)_𝕍 − ((τ − π)/λ, η − π)_ℍ] / scale`; nonnegative
    /// when `(τ − π)/λ − κ∇½|π|²_𝕍` lies in the normal cone at `π`.
    pub worst_normalized_slack: f64,
}

/// Samples the resolvent at time `t` and checks its variational inequality.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_check(
    cs: &ConstraintSet,
    t: f64,
    lambda: f64,
    kappa: f64,
    samples: usize,
    tests: usize,
    (tol, max_iters): (f64, usize),
    seed: u64,
) -> Result<ResolventCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snap = cs.snapshot(t)?;
    let grid = *cs.grid();
    let spread = 3.0 * (2.0 * cs.threshold().c2()).sqrt();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let tau = random::gaussian_tensor_field(grid, &mut rng, spread);
        let pi = yosida_resolvent(&tau, &snap, lambda, kappa, tol, max_iters)?;
        let grad = tau.sub(&pi).scaled(1.0 / lambda);
        let div_pi = divergence(&pi);
        for _ in 0..tests {
            let eta = snap.project(&random::gaussian_tensor_field(grid, &mut rng, spread));
            let e = eta.sub(&pi);
            let div_e = divergence(&e);
            let v_term = kappa * (tensor_inner(&pi, &e)? + vec_inner(&div_pi, &div_e)?);
            let slack = v_term - tensor_inner(&grad, &e)?;
            let e_v = (e.norm_hh().powi(2) + div_e.norm_h().powi(2)).sqrt();
            let scale = 1.0 + grad.norm_hh() * e.norm_hh() + kappa * pi.norm_vv() * e_v;
            worst = worst.min(slack / scale);
        }
    }
    Ok(ResolventCheck { samples, tests, worst_normalized_slack: worst })
}
