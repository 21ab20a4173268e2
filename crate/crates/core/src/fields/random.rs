//! Seeded Gaussian fields for probes and property tests.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Grid, TensorField, VectorField};
use crate::tensor::SymTensor3;

/// i.i.d. N(0, scale²) components, masked on Dirichlet nodes.
pub fn gaussian_vector_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R, scale: f64) -> VectorField {
    let data = (0..grid.node_count())
        .map(|_| {
            let v: [f64; 3] = std::array::from_fn(|_| scale * rng.sample::<f64, _>(StandardNormal));
            v
        })
        .collect();
    VectorField::from_values(grid, data).expect("length matches grid")
}

/// i.i.d. N(0, scale²) for each of the six independent components.
pub fn gaussian_tensor_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R, scale: f64) -> TensorField {
    let data = (0..grid.node_count())
        .map(|_| {
            SymTensor3::from_array(std::array::from_fn(|_| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }))
        })
        .collect();
    TensorField::from_values(grid, data).expect("length matches grid")
}
