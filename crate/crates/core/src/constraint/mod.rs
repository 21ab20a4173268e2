//! The moving admissible sets `K̃(t) = {τ : ½|τᴰ|² ≤ g(t,·)}` and
//! `K(t) = K̃(t) − σ*(t)`.

mod condition_h;

pub use condition_h::{verify_condition_h, HData, HReport, ShiftBounds};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, TensorField};
use crate::par;
use crate::source::{ConstantScalar, ScalarSource, TensorSource, ZeroTensor};

/// Time regularity of the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRegularity {
    /// `g ∈ H¹(0,T;C(Ω̄))`; the rate `g′` is available.
    #[serde(rename = "h1")]
    H1InTime,
    /// `g` merely continuous; no rate is used.
    Continuous,
}

/// Time regularity of the shift `σ*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftRegularity {
    #[serde(rename = "h1_v")]
    H1V,
    #[serde(rename = "h1_h")]
    H1H,
}

/// Yield threshold `g(t,x)` with certified bounds `0 < C₁ ≤ g ≤ C₂`.
#[derive(Clone)]
pub struct ThresholdField {
    source: Arc<dyn ScalarSource>,
    c1: f64,
    c2: f64,
    regularity: ThresholdRegularity,
}

impl fmt::Debug for ThresholdField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThresholdField")
            .field("source", &self.source)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("regularity", &self.regularity)
            .finish()
    }
}

impl ThresholdField {
    pub fn new(
        source: impl ScalarSource + 'static,
        c1: f64,
        c2: f64,
        regularity: ThresholdRegularity,
    ) -> Result<Self> {
        Self::from_arc(Arc::new(source), c1, c2, regularity)
    }

    pub fn from_arc(
        source: Arc<dyn ScalarSource>,
        c1: f64,
        c2: f64,
        regularity: ThresholdRegularity,
    ) -> Result<Self> {
        if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
            return Err(Error::BadParameters(format!("threshold bounds need 0 < C1 <= C2, got C1 = {c1}, C2 = {c2}")));
        }
        Ok(ThresholdField { source, c1, c2, regularity })
    }

    /// `g ≡ value` with `C₁ = C₂ = value`.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(ConstantScalar(value), value, value, ThresholdRegularity::H1InTime)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn regularity(&self) -> ThresholdRegularity {
        self.regularity
    }

    pub fn source(&self) -> &Arc<dyn ScalarSource> {
        &self.source
    }

    pub fn values(&self, grid: &Grid, t: f64) -> Vec<f64> {
        self.source.sample(grid, t)
    }

    /// `g′(t, ·)`; unavailable for a continuous-only threshold.
    pub fn rate(&self, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        if self.regularity == ThresholdRegularity::Continuous {
            return Err(Error::MissingDerivative("threshold is tagged continuous".into()));
        }
        self.source
            .sample_rate(grid, t)
            .ok_or_else(|| Error::MissingDerivative("threshold source has no time derivative".into()))
    }

    /// Checks `C₁ ≤ g ≤ C₂` at every node and listed time, and finiteness of
    /// `g′` for an H¹ threshold.
    pub fn validate(&self, grid: &Grid, times: &[f64]) -> Result<ValidationReport> {
        let mut rep = ValidationReport { min: f64::INFINITY, max: f64::NEG_INFINITY, samples: 0 };
        for &t in times {
            let g = self.values(grid, t);
            for (node, &value) in g.iter().enumerate() {
                if !(value >= self.c1 && value <= self.c2 && value > 0.0) {
                    return Err(Error::ThresholdViolation { t, node, value, lower: self.c1, upper: self.c2 });
                }
                rep.min = rep.min.min(value);
                rep.max = rep.max.max(value);
            }
            rep.samples += g.len();
            if self.regularity == ThresholdRegularity::H1InTime {
                let r = self.rate(grid, t)?;
                if let Some(node) = r.iter().position(|x| !x.is_finite()) {
                    return Err(Error::MissingDerivative(format!("g' is not finite at t = {t}, node {node}")));
                }
            }
        }
        Ok(rep)
    }
}

/// Range of the threshold over a validation sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

/// `n + 1` equally spaced times on `[0, horizon]`.
pub fn sample_times(horizon: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// The shift `σ*(t)`.
#[derive(Clone)]
pub struct ShiftField {
    source: Arc<dyn TensorSource>,
    regularity: ShiftRegularity,
}

impl fmt::Debug for ShiftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShiftField")
            .field("source", &self.source)
            .field("regularity", &self.regularity)
            .finish()
    }
}

impl ShiftField {
    pub fn new(source: impl TensorSource + 'static, regularity: ShiftRegularity) -> Self {
        ShiftField { source: Arc::new(source), regularity }
    }

    pub fn zero() -> Self {
        Self::new(ZeroTensor, ShiftRegularity::H1V)
    }

    pub fn regularity(&self) -> ShiftRegularity {
        self.regularity
    }

    pub fn is_static(&self) -> bool {
        self.source.is_static()
    }

    pub fn at(&self, grid: &Grid, t: f64) -> TensorField {
        self.source.sample(grid, t)
    }

    pub fn rate(&self, grid: &Grid, t: f64) -> Result<TensorField> {
        self.source
            .sample_rate(grid, t)
            .ok_or_else(|| Error::MissingDerivative("shift source has no time derivative".into()))
    }
}

/// Outcome of a membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub feasible: bool,
    /// `max_x (½|(τ+σ*)ᴰ|² − g)`, clamped below at zero.
    pub max_violation: f64,
    /// Node attaining the largest violation, if any node is violated.
    pub node: Option<usize>,
}

/// `K(t)` frozen at one time: threshold values and shift on the grid.
#[derive(Debug, Clone)]
pub struct ConstraintSnapshot {
    pub t: f64,
    pub g: Vec<f64>,
    pub shift: TensorField,
}

impl ConstraintSnapshot {
    /// Builds a snapshot from sampled data; every `g` must be positive.
    pub fn new(t: f64, g: Vec<f64>, shift: TensorField) -> Result<Self> {
        if g.len() != shift.grid().node_count() {
            return Err(Error::GridMismatch);
        }
        if let Some(&bad) = g.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::NonPositiveThreshold(bad));
        }
        Ok(ConstraintSnapshot { t, g, shift })
    }

    pub fn grid(&self) -> &Grid {
        self.shift.grid()
    }

    /// Nodewise `P_K(τ) = P_Z(τ + σ*) − σ*`.
    pub fn project(&self, tau: &TensorField) -> TensorField {
        debug_assert_eq!(tau.grid(), self.grid());
        let s = self.shift.values();
        tau.map(|p, x| {
            let shifted = *x + s[p];
            if shifted.von_mises() <= self.g[p] {
                *x
            } else {
                shifted.project_unchecked(self.g[p]) - s[p]
            }
        })
    }

    pub fn membership(&self, tau: &TensorField, tol: f64) -> Membership {
        let s = self.shift.values();
        let v = tau.values();
        let excess = par::map_indexed(v.len(), |p| (v[p] + s[p]).von_mises() - self.g[p]);
        let (node, worst) = excess
            .iter()
            .enumerate()
            .fold((None, 0.0), |(n, w), (p, &e)| if e > w || e.is_nan() { (Some(p), e) } else { (n, w) });
        Membership { feasible: worst <= tol, max_violation: worst, node }
    }
}

/// `K(t)` over the whole horizon.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    grid: Grid,
    threshold: ThresholdField,
    shift: ShiftField,
}

/// Result of transporting a point of `K(s)` into `K(t)`.
#[derive(Debug, Clone)]
pub struct Shrink {
    pub tau: TensorField,
    pub theta: f64,
    /// `max_x |g(t,x) − g(s,x)|`
    pub gap: f64,
}

impl ConstraintSet {
    pub fn new(grid: Grid, threshold: ThresholdField, shift: ShiftField) -> Self {
        ConstraintSet { grid, threshold, shift }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn threshold(&self) -> &ThresholdField {
        &self.threshold
    }

    pub fn shift(&self) -> &ShiftField {
        &self.shift
    }

    pub fn snapshot(&self, t: f64) -> Result<ConstraintSnapshot> {
        ConstraintSnapshot::new(t, self.threshold.values(&self.grid, t), self.shift.at(&self.grid, t))
    }

    pub fn membership(&self, tau: &TensorField, t: f64, tol: f64) -> Result<Membership> {
        tau.same_grid(&TensorField::zeros(self.grid))?;
        Ok(self.snapshot(t)?.membership(tau, tol))
    }

    pub fn project(&self, tau: &TensorField, t: f64) -> Result<TensorField> {
        tau.same_grid(&TensorField::zeros(self.grid))?;
        Ok(self.snapshot(t)?.project(tau))
    }

    /// Moves `τ ∈ K(s)` into `K(t)` by `τ_* = θ(τ + σ*(s)) − σ*(t)` with
    /// `θ = 1 − max|g(t) − g(s)|/C₁`.
    pub fn shrink_transport(&self, tau: &TensorField, s: f64, t: f64, tol: f64) -> Result<Shrink> {
        let from = self.snapshot(s)?;
        let m = from.membership(tau, tol);
        if !m.feasible {
            return Err(Error::BadParameters(format!(
                "shrink transport needs a point of K({s}); violation {:e}",
                m.max_violation
            )));
        }
        let g_t = self.threshold.values(&self.grid, t);
        let (theta, gap) = shrink_factor(&from.g, &g_t, self.threshold.c1())?;
        let shift_t = self.shift.at(&self.grid, t);
        let tau_star = tau.add(&from.shift).scaled(theta).sub(&shift_t);
        Ok(Shrink { tau: tau_star, theta, gap })
    }
}

/// `θ = 1 − max|g_t − g_s|/C₁` and the gap itself; fails once the gap
/// reaches `C₁`.
pub fn shrink_factor(g_s: &[f64], g_t: &[f64], c1: f64) -> Result<(f64, f64)> {
    let gap = g_s.iter().zip(g_t).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
    if gap >= c1 {
        return Err(Error::WindowTooWide { gap, c1 });
    }
    Ok((1.0 - gap / c1, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fields::{random, Face, FaceSet};
    use crate::source::{ExprScalar, FnScalar, FnTensor};
    use crate::tensor::SymTensor3;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid4() -> Grid {
        Grid::new([4, 4, 4], [0.25; 3], FaceSet::of(&[Face::XMin])).unwrap()
    }

    fn expr_threshold(s: &str, c1: f64, c2: f64) -> ThresholdField {
        ThresholdField::new(ExprScalar(Expr::parse(s).unwrap()), c1, c2, ThresholdRegularity::H1InTime).unwrap()
    }

    #[test]
    fn validate_examples() {
        let g = grid4();
        let times = sample_times(1.0, 20);
        let r = ThresholdField::constant(1.0).unwrap().validate(&g, &times).unwrap();
        assert_eq!((r.min, r.max), (1.0, 1.0));
        assert!(expr_threshold("1.5 + 0.4*sin(t)", 1.0, 2.0).validate(&g, &times).is_ok());
        match expr_threshold("t", 0.1, 2.0).validate(&g, &times) {
            Err(Error::ThresholdViolation { t, value, .. }) => assert_eq!((t, value), (0.0, 0.0)),
            other => panic!("{other:?}"),
        }
        assert!(ThresholdField::constant(0.0).is_err());
    }

    #[test]
    fn continuous_threshold_has_no_rate() {
        let th = ThresholdField::new(ConstantScalar(1.0), 1.0, 1.0, ThresholdRegularity::Continuous).unwrap();
        assert!(matches!(th.rate(&grid4(), 0.0), Err(Error::MissingDerivative(_))));
        let th = ThresholdField::new(FnScalar::new(|_, _| 1.0), 1.0, 1.0, ThresholdRegularity::H1InTime).unwrap();
        assert!(th.validate(&grid4(), &[0.0]).is_err());
    }

    #[test]
    fn membership_examples() {
        let g = Grid::point();
        let s = SymTensor3::new(0.1, 0.2, -0.3, 0.05, 0.0, 0.02);
        let cs = ConstraintSet::new(
            g,
            ThresholdField::constant(1.0).unwrap(),
            ShiftField::new(FnTensor::new(move |_, _| s).with_rate(|_, _| SymTensor3::ZERO), ShiftRegularity::H1V),
        );
        let m = cs.membership(&TensorField::constant(g, -s), 0.0, 0.0).unwrap();
        assert!(m.feasible && m.max_violation == 0.0 && m.node.is_none());
        let d = SymTensor3::diag(2.0, -1.0, -1.0) * 2f64.sqrt();
        let m = cs.membership(&TensorField::constant(g, d - s), 0.0, 1e-10).unwrap();
        assert!(!m.feasible);
        assert!((m.max_violation - 5.0).abs() < 1e-12);
        assert_eq!(m.node, Some(0));
    }

    #[test]
    fn project_examples() {
        let g = Grid::point();
        let cs = ConstraintSet::new(g, ThresholdField::constant(1.0).unwrap(), ShiftField::zero());
        let d = SymTensor3::diag(2.0, -1.0, -1.0);
        let p = cs.project(&TensorField::constant(g, d), 0.0).unwrap();
        assert!((p.values()[0] - d * (1.0 / 3f64.sqrt())).norm() < 1e-14);

        let s = SymTensor3::new(3.0, -1.0, 0.5, 2.0, 0.0, 1.0);
        let w = SymTensor3::new(0.2, 0.1, -0.3, 0.1, 0.1, 0.0);
        let cs = ConstraintSet::new(
            g,
            ThresholdField::constant(1.0).unwrap(),
            ShiftField::new(FnTensor::new(move |_, _| s), ShiftRegularity::H1H),
        );
        let tau = TensorField::constant(g, -s + w);
        assert_eq!(cs.project(&tau, 0.0).unwrap(), tau);
    }

    #[test]
    fn shrink_examples() {
        let g = grid4();
        let th = expr_threshold("2 - t", 1.0, 2.0);
        let cs = ConstraintSet::new(g, th, ShiftField::zero());
        let tau = TensorField::zeros(g);
        let r = cs.shrink_transport(&tau, 0.0, 0.5, 1e-10).unwrap();
        assert!((r.theta - 0.5).abs() < 1e-15);
        assert!(matches!(cs.shrink_transport(&tau, 0.0, 1.0, 1e-10), Err(Error::WindowTooWide { .. })));

        let cs = ConstraintSet::new(g, ThresholdField::constant(1.3).unwrap(), ShiftField::zero());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = cs.project(&random::gaussian_tensor_field(g, &mut rng, 2.0), 0.0).unwrap();
        let r = cs.shrink_transport(&tau, 0.0, 0.7, 1e-12).unwrap();
        assert_eq!(r.theta, 1.0);
        assert_eq!(r.tau, tau);
    }

    #[test]
    fn shrink_rejects_infeasible_input() {
        let g = Grid::point();
        let cs = ConstraintSet::new(g, ThresholdField::constant(1.0).unwrap(), ShiftField::zero());
        let tau = TensorField::constant(g, SymTensor3::diag(5.0, -5.0, 0.0));
        assert!(matches!(cs.shrink_transport(&tau, 0.0, 0.1, 1e-10), Err(Error::BadParameters(_))));
    }

    fn moving_set() -> ConstraintSet {
        let th = ThresholdField::new(
            FnScalar::new(|t, x| 1.2 + 0.3 * (2.0 * t + x[0]).cos())
                .with_rate(|t, x| -0.6 * (2.0 * t + x[0]).sin()),
            0.9,
            1.5,
            ThresholdRegularity::H1InTime,
        )
        .unwrap();
        let shift = ShiftField::new(
            FnTensor::new(|t, x| SymTensor3::new(0.0, 0.0, 0.0, 0.1 * t.sin() * x[1], 0.0, 0.05 * t))
                .with_rate(|t, x| SymTensor3::new(0.0, 0.0, 0.0, 0.1 * t.cos() * x[1], 0.0, 0.05)),
            ShiftRegularity::H1V,
        );
        ConstraintSet::new(grid4(), th, shift)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_is_idempotent_feasible_nonexpansive(seed in 0u64..1_000_000, t in 0.0f64..1.0) {
            let cs = moving_set();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random::gaussian_tensor_field(*cs.grid(), &mut rng, 2.0);
            let b = random::gaussian_tensor_field(*cs.grid(), &mut rng, 2.0);
            let pa = cs.project(&a, t).unwrap();
            let pb = cs.project(&b, t).unwrap();
            prop_assert!(cs.membership(&pa, t, 1e-12).unwrap().feasible);
            let ppa = cs.project(&pa, t).unwrap();
            prop_assert!(ppa.sub(&pa).norm_hh() <= 1e-13 * (1.0 + pa.norm_hh()));
            prop_assert!(pa.sub(&pb).norm_hh() <= a.sub(&b).norm_hh() * (1.0 + 1e-12));
        }

        #[test]
        fn shrink_lands_in_target_set(seed in 0u64..1_000_000, s in 0.0f64..1.0, dt in -0.3f64..0.3) {
            let cs = moving_set();
            let t = (s + dt).clamp(0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tau = cs.project(&random::gaussian_tensor_field(*cs.grid(), &mut rng, 2.0), s).unwrap();
            let r = cs.shrink_transport(&tau, s, t, 1e-12).unwrap();
            prop_assert!(r.theta > 0.0 && r.theta <= 1.0);
            prop_assert!(cs.membership(&r.tau, t, 1e-12).unwrap().feasible);
        }
    }
}
