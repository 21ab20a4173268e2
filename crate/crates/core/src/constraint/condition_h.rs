//! Continuity data `α`, `β` of the family `{φᵗ}` and a numerical check of
//! the two transport inequalities.
//!
//! With `φᵗ = κ/2 |·|²_𝕍 + I_{K(t)}` (regularized) or `φᵗ = I_{K(t)}`
//! (indicator), a point `τ ∈ K(s)` moved by the shrink transport to `τ_*`
//! must satisfy
//!
//! ```text
//! |τ_* − τ|_ℍ        ≤ (∫_s^t α_r)(1 + φˢ(τ)^{1/2})
//! φᵗ(τ_*) − φˢ(τ)    ≤ (∫_s^t β_r)(1 + |φˢ(τ)|)
//! ```

use serde::Serialize;

use super::ConstraintSet;
use crate::error::{Error, Result};
use crate::fields::TensorField;
use crate::Regime;

/// `sup_t |σ*(t)|_ℍ` and `sup_t |σ*(t)|_𝕍` over a time sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftBounds {
    pub sup_h: f64,
    pub sup_v: f64,
}

/// Sampled `α(t)`, `β(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HData {
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Worst slacks of the two inequalities; nonnegative means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HReport {
    pub checks: usize,
    /// Pairs whose threshold gap reached `C₁` (outside the transport window).
    pub skipped_wide: usize,
    pub worst_h1_slack: f64,
    pub worst_h2_slack: f64,
    pub worst_pair: Option<(f64, f64)>,
    pub failures: usize,
    pub pass: bool,
}

const SIMPSON_PANELS: usize = 64;

fn simpson(a: f64, b: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let n = SIMPSON_PANELS;
    let h = (b - a) / n as f64;
    let mut acc = f(a)? + f(b)?;
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

/// Per-time ingredients of `α` and `β`.
#[derive(Debug, Clone, Copy)]
struct Rates {
    /// `|g′(t)|_{C(Ω̄)} / C₁`
    g: f64,
    /// `|σ*′(t)|_ℍ`
    shift_h: f64,
    /// `|σ*′(t)|_𝕍`
    shift_v: f64,
}

impl ConstraintSet {
    /// Sup norms of `σ*` over `samples + 1` equally spaced times on `[0, horizon]`.
    pub fn shift_bounds(&self, horizon: f64, samples: usize) -> ShiftBounds {
        super::sample_times(horizon, samples).into_iter().fold(ShiftBounds { sup_h: 0.0, sup_v: 0.0 }, |b, t| {
            let s = self.shift.at(&self.grid, t);
            ShiftBounds { sup_h: b.sup_h.max(s.norm_hh()), sup_v: b.sup_v.max(s.norm_vv()) }
        })
    }

    fn rates(&self, t: f64) -> Result<Rates> {
        let dg = self.threshold.rate(&self.grid, t)?;
        let g = dg.iter().fold(0.0f64, |m, x| m.max(x.abs())) / self.threshold.c1();
        let ds = self.shift.rate(&self.grid, t)?;
        Ok(Rates { g, shift_h: ds.norm_hh(), shift_v: ds.norm_vv() })
    }

    /// `α(t)`, `β(t)` at one time.
    ///
    /// Regularized: `α = |g′|/C₁ (√(2/κ) + |σ*|_{C(ℍ)}) + |σ*′|_ℍ`,
    /// `β = (1 + |σ*|_{C(𝕍)})|σ*′|_𝕍 + (2/C₁)|σ*|_{C(𝕍)}|g′|`.
    /// Indicator: `α_r = |g′|/C₁ (r + |σ*|_{C(ℍ)}) + |σ*′|_ℍ`, `β = 0`.
    pub fn alpha_beta(&self, t: f64, r: f64, kappa: f64, regime: Regime, b: ShiftBounds) -> Result<(f64, f64)> {
        let q = self.rates(t)?;
        Ok(combine(q.g, q.shift_h, q.shift_v, r, kappa, regime, b))
    }

    pub fn condition_h_data(
        &self,
        times: &[f64],
        r: f64,
        kappa: f64,
        regime: Regime,
        bounds: ShiftBounds,
    ) -> Result<HData> {
        check_kappa(kappa, regime)?;
        let mut alpha = Vec::with_capacity(times.len());
        let mut beta = Vec::with_capacity(times.len());
        for &t in times {
            let (a, b) = self.alpha_beta(t, r, kappa, regime, bounds)?;
            alpha.push(a);
            beta.push(b);
        }
        Ok(HData { times: times.to_vec(), alpha, beta })
    }
}

fn check_kappa(kappa: f64, regime: Regime) -> Result<()> {
    if regime == Regime::Regularized && !(kappa > 0.0) {
        return Err(Error::BadParameters(format!("regularized regime needs kappa > 0, got {kappa}")));
    }
    Ok(())
}

fn combine(ig: f64, ih: f64, iv: f64, r: f64, kappa: f64, regime: Regime, b: ShiftBounds) -> (f64, f64) {
    match regime {
        Regime::Regularized => {
            let a = ig * ((2.0 / kappa).sqrt() + b.sup_h) + ih;
            let be = (1.0 + b.sup_v) * iv + 2.0 * b.sup_v * ig;
            (a, be)
        }
        Regime::Sweeping => (ig * (r + b.sup_h) + ih, 0.0),
    }
}

/// Checks both inequalities for every `(s, t)` pair and sample.
///
/// Samples are first projected onto `K(s)`, so arbitrary fields may be
/// passed. `horizon` fixes the time range for the sup norms of `σ*`.
pub fn verify_condition_h(
    cs: &ConstraintSet,
    pairs: &[(f64, f64)],
    samples: &[TensorField],
    kappa: f64,
    regime: Regime,
    horizon: f64,
) -> Result<HReport> {
    check_kappa(kappa, regime)?;
    let bounds = cs.shift_bounds(horizon, 64);
    let mut rep = HReport {
        checks: 0,
        skipped_wide: 0,
        worst_h1_slack: f64::INFINITY,
        worst_h2_slack: f64::INFINITY,
        worst_pair: None,
        failures: 0,
        pass: true,
    };
    let phi = |tau: &TensorField| match regime {
        Regime::Regularized => 0.5 * kappa * tau.norm_vv().powi(2),
        Regime::Sweeping => 0.0,
    };
    for &(a, b) in pairs {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        // α_r is affine in r, so the three integrals cover every sample.
        let ig = simpson(s, t, |l| Ok(cs.rates(l)?.g))?;
        let ih = simpson(s, t, |l| Ok(cs.rates(l)?.shift_h))?;
        let iv = simpson(s, t, |l| Ok(cs.rates(l)?.shift_v))?;
        let snap = cs.snapshot(s)?;
        for sample in samples {
            let tau = snap.project(sample);
            let shrink = match cs.shrink_transport(&tau, s, t, 1e-10) {
                Ok(x) => x,
                Err(Error::WindowTooWide { .. }) => {
                    rep.skipped_wide += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let r = tau.norm_hh();
            let (int_a, int_b) = combine(ig, ih, iv, r, kappa, regime, bounds);
            let phi_s = phi(&tau);
            let phi_t = phi(&shrink.tau);
            let lhs1 = shrink.tau.sub(&tau).norm_hh();
            let rhs1 = int_a * (1.0 + phi_s.sqrt());
            let lhs2 = phi_t - phi_s;
            let rhs2 = int_b * (1.0 + phi_s.abs());
            let slack1 = rhs1 - lhs1;
            let slack2 = rhs2 - lhs2;
            rep.checks += 1;
            let tol1 = 1e-12 * (1.0 + rhs1 + lhs1);
            let tol2 = 1e-12 * (1.0 + rhs2.abs() + phi_t + phi_s);
            if slack1 < -tol1 || slack2 < -tol2 {
                rep.failures += 1;
            }
            if slack1.min(slack2) < rep.worst_h1_slack.min(rep.worst_h2_slack) {
                rep.worst_pair = Some((s, t));
            }
            rep.worst_h1_slack = rep.worst_h1_slack.min(slack1);
            rep.worst_h2_slack = rep.worst_h2_slack.min(slack2);
        }
    }
    rep.pass = rep.failures == 0;
    Ok(rep)
}
