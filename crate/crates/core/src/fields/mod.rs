//! Grid-sampled vector and tensor fields, the discrete strain/divergence pair
//! and the inner products built on them.

mod export;
mod grid;
mod ops;
pub mod random;

pub use export::{read_snapshot_csv, write_snapshot_csv, write_vtk};
pub use grid::{Face, FaceSet, Grid};
pub use ops::{
    div_norm_sq_estimate, divergence, form_v, gradient, grad_inner, laplacian_form_apply, strain,
    tensor_inner, tensor_v_inner, vec_inner, Gradient,
};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::SymTensor3;

/// A 3-vector per node. Dirichlet nodes always hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<[f64; 3]>,
}

/// A symmetric tensor per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    data: Vec<SymTensor3>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, data: vec![[0.0; 3]; grid.node_count()] }
    }

    /// Samples `f(position)` at every node and applies the Dirichlet mask.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3] + Sync + Send) -> Self {
        let data = par::map_indexed(grid.node_count(), |p| {
            if grid.is_dirichlet_node(p) {
                [0.0; 3]
            } else {
                f(grid.position(p))
            }
        });
        VectorField { grid, data }
    }

    /// Wraps raw node values, zeroing Dirichlet nodes.
    pub fn from_values(grid: Grid, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        let mut v = VectorField { grid, data };
        v.apply_mask();
        Ok(v)
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(data.len(), grid.node_count());
        VectorField { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn apply_mask(&mut self) {
        let grid = self.grid;
        par::for_each_mut(&mut self.data, |p, v| {
            if grid.is_dirichlet_node(p) {
                *v = [0.0; 3];
            }
        });
    }

    /// Largest magnitude found on Dirichlet nodes (zero for a masked field).
    pub fn mask_violation(&self) -> f64 {
        let grid = self.grid;
        par::max(self.data.len(), |p| {
            if grid.is_dirichlet_node(p) {
                let v = self.data[p];
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            } else {
                0.0
            }
        })
        .max(0.0)
    }

    pub fn same_grid(&self, o: &VectorField) -> Result<()> {
        if self.grid == o.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self + s·o`
    pub fn axpy(&self, s: f64, o: &VectorField) -> VectorField {
        let data = par::map_indexed(self.data.len(), |p| {
            let a = self.data[p];
            let b = o.data[p];
            [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
        });
        VectorField { grid: self.grid, data }
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        let data = self.data.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect();
        VectorField { grid: self.grid, data }
    }

    pub fn sub(&self, o: &VectorField) -> VectorField {
        self.axpy(-1.0, o)
    }

    pub fn norm_h(&self) -> f64 {
        vec_inner(self, self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// `|z|_V`, the L² norm of the discrete gradient.
    pub fn norm_v(&self) -> f64 {
        let g = gradient(self);
        (grad_inner(&g, &g) * self.grid.cell_volume()).max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        TensorField { grid, data: vec![SymTensor3::ZERO; grid.node_count()] }
    }

    pub fn constant(grid: Grid, t: SymTensor3) -> Self {
        TensorField { grid, data: vec![t; grid.node_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> SymTensor3 + Sync + Send) -> Self {
        let data = par::map_indexed(grid.node_count(), |p| f(grid.position(p)));
        TensorField { grid, data }
    }

    pub fn from_values(grid: Grid, data: Vec<SymTensor3>) -> Result<Self> {
        if data.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        Ok(TensorField { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[SymTensor3] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [SymTensor3] {
        &mut self.data
    }

    pub fn same_grid(&self, o: &TensorField) -> Result<()> {
        if self.grid == o.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise map over node values.
    pub fn map(&self, f: impl Fn(usize, &SymTensor3) -> SymTensor3 + Sync + Send) -> TensorField {
        let data = par::map_indexed(self.data.len(), |p| f(p, &self.data[p]));
        TensorField { grid: self.grid, data }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(
        &self,
        o: &TensorField,
        f: impl Fn(&SymTensor3, &SymTensor3) -> SymTensor3 + Sync + Send,
    ) -> TensorField {
        debug_assert_eq!(self.grid, o.grid);
        let data = par::map_indexed(self.data.len(), |p| f(&self.data[p], &o.data[p]));
        TensorField { grid: self.grid, data }
    }

    /// `self + s·o`
    pub fn axpy(&self, s: f64, o: &TensorField) -> TensorField {
        self.zip_map(o, |a, b| *a + *b * s)
    }

    pub fn add(&self, o: &TensorField) -> TensorField {
        self.zip_map(o, |a, b| *a + *b)
    }

    pub fn sub(&self, o: &TensorField) -> TensorField {
        self.zip_map(o, |a, b| *a - *b)
    }

    pub fn scaled(&self, s: f64) -> TensorField {
        self.map(|_, a| *a * s)
    }

    pub fn norm_hh(&self) -> f64 {
        tensor_inner(self, self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// `|τ|_𝕍 = (|τ|² + |div τ|²)^{1/2}`
    pub fn norm_vv(&self) -> f64 {
        tensor_v_inner(self, self).unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|t| t.is_finite())
    }
}
