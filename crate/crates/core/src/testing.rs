//! Problem fixtures shared by unit tests.

use std::sync::Arc;

use crate::constraint::{ConstraintSet, ShiftField, ShiftRegularity, ThresholdField, ThresholdRegularity};
use crate::coupled::{Problem, SolverConfig};
use crate::fields::{Face, FaceSet, Grid, TensorField, VectorField};
use crate::source::{FnScalar, FnTensor, FnVector, ZeroTensor, ZeroVector};
use crate::tensor::SymTensor3;
use crate::Regime;

pub fn grid(n: usize) -> Grid {
    Grid::new([n; 3], [1.0 / n as f64; 3], FaceSet::of(&[Face::XMin])).unwrap()
}

pub fn zero_problem(regime: Regime) -> Problem {
    let g = grid(3);
    Problem {
        constraint: ConstraintSet::new(g, ThresholdField::constant(1.0).unwrap(), ShiftField::zero()),
        force: Arc::new(ZeroVector),
        strain_rate: Arc::new(ZeroTensor),
        v0: VectorField::zeros(g),
        sigma0: TensorField::zeros(g),
        horizon: 1.0,
        dt: 0.05,
        regime,
        kappa: 1.0,
        nu: 1.0,
        config: SolverConfig::default(),
    }
}

/// Moving threshold and shift, body force, and a shear drive strong enough
/// to reach the yield surface within the horizon.
pub fn smooth_problem(n: usize, regime: Regime, dt: f64) -> Problem {
    let g = grid(n);
    let threshold = ThresholdField::new(
        FnScalar::new(|t, x| 0.6 + 0.15 * (2.0 * t + x[0]).cos()).with_rate(|t, x| -0.3 * (2.0 * t + x[0]).sin()),
        0.45,
        0.75,
        ThresholdRegularity::H1InTime,
    )
    .unwrap();
    let shift = ShiftField::new(
        FnTensor::new(|t, x| SymTensor3::new(0.0, 0.0, 0.0, 0.03 * t * x[1], 0.0, 0.0))
            .with_rate(|_, x| SymTensor3::new(0.0, 0.0, 0.0, 0.03 * x[1], 0.0, 0.0)),
        ShiftRegularity::H1V,
    );
    Problem {
        constraint: ConstraintSet::new(g, threshold, shift),
        force: Arc::new(FnVector::new(|t, x| [0.0, (1.0 + t) * x[0], 0.0])),
        strain_rate: Arc::new(FnTensor::new(|_, _| SymTensor3::new(0.4, -0.2, -0.2, 4.0, 0.0, 0.0))),
        v0: VectorField::from_fn(g, |x| [0.5 * x[0], 0.0, 0.0]),
        sigma0: TensorField::zeros(g),
        horizon: 0.4,
        dt,
        regime,
        kappa: 1.0,
        nu: 1.0,
        config: SolverConfig::default(),
    }
}
