use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::{Axis, Grid};
use super::{random, TensorField, VectorField};
use crate::error::Result;
use crate::par;
use crate::tensor::SymTensor3;

/// Discrete gradient: `g[p][i][j] = D_j z_i` at node `p`.
pub type Gradient = Vec<[[f64; 3]; 3]>;

/// One-sided difference along an axis: forward, except backward at the
/// last node, zero on a degenerate axis.
#[inline]
fn diff(ax: Axis, c: usize, p: usize, get: impl Fn(usize) -> f64) -> f64 {
    if ax.n == 1 {
        return 0.0;
    }
    if c + 1 < ax.n {
        (get(p + ax.stride) - get(p)) * ax.inv_h
    } else {
        (get(p) - get(p - ax.stride)) * ax.inv_h
    }
}

/// Transpose of [`diff`] with respect to the plain nodal sum.
#[inline]
fn diff_t(ax: Axis, c: usize, p: usize, get: impl Fn(usize) -> f64) -> f64 {
    if ax.n == 1 {
        return 0.0;
    }
    let mut acc = 0.0;
    if c >= 1 {
        acc += get(p - ax.stride);
    }
    if c + 1 < ax.n {
        acc -= get(p);
    } else {
        acc += get(p);
    }
    if c + 2 == ax.n {
        acc -= get(p + ax.stride);
    }
    acc * ax.inv_h
}

pub fn gradient(z: &VectorField) -> Gradient {
    let grid = *z.grid();
    let axes = grid.axes();
    let d = z.values();
    par::map_indexed(grid.node_count(), |p| {
        let c = grid.coords(p);
        let mut g = [[0.0; 3]; 3];
        for (i, row) in g.iter_mut().enumerate() {
            for (j, gij) in row.iter_mut().enumerate() {
                *gij = diff(axes[j], c[j], p, |q| d[q][i]);
            }
        }
        g
    })
}

/// Symmetric part of the discrete gradient.
pub fn strain(z: &VectorField) -> TensorField {
    let g = gradient(z);
    let data = g
        .iter()
        .map(|g| {
            SymTensor3::new(
                g[0][0],
                g[1][1],
                g[2][2],
                0.5 * (g[0][1] + g[1][0]),
                0.5 * (g[0][2] + g[2][0]),
                0.5 * (g[1][2] + g[2][1]),
            )
        })
        .collect();
    TensorField { grid: *z.grid(), data }
}

/// Negative adjoint of [`strain`]: `(ε(z), τ)_ℍ + (div τ, z)_H = 0` for
/// every masked `z`. The traction condition on the free faces is carried by
/// the boundary rows of the transposed difference.
pub fn divergence(tau: &TensorField) -> VectorField {
    let grid = *tau.grid();
    let axes = grid.axes();
    let d = tau.values();
    let data = par::map_indexed(grid.node_count(), |p| {
        if grid.is_dirichlet_node(p) {
            return [0.0; 3];
        }
        let c = grid.coords(p);
        let mut out = [0.0; 3];
        for (i, oi) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..3 {
                s += diff_t(axes[j], c[j], p, |q| d[q].get(i, j));
            }
            *oi = -s;
        }
        out
    });
    VectorField::from_raw(grid, data)
}

/// Applies the operator induced by `ν((·,·))`: `ν DᵀD` per component, masked.
pub fn laplacian_form_apply(z: &VectorField, nu: f64) -> VectorField {
    let grid = *z.grid();
    let axes = grid.axes();
    let g = gradient(z);
    let data = par::map_indexed(grid.node_count(), |p| {
        if grid.is_dirichlet_node(p) {
            return [0.0; 3];
        }
        let c = grid.coords(p);
        let mut out = [0.0; 3];
        for (i, oi) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..3 {
                s += diff_t(axes[j], c[j], p, |q| g[q][i][j]);
            }
            *oi = nu * s;
        }
        out
    });
    VectorField::from_raw(grid, data)
}

/// `(z, z̃)_H`
pub fn vec_inner(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.same_grid(b)?;
    let (x, y) = (a.values(), b.values());
    let s = par::sum(x.len(), |p| x[p][0] * y[p][0] + x[p][1] * y[p][1] + x[p][2] * y[p][2]);
    Ok(s * a.grid().cell_volume())
}

/// `(τ, τ̃)_ℍ`
pub fn tensor_inner(a: &TensorField, b: &TensorField) -> Result<f64> {
    a.same_grid(b)?;
    let (x, y) = (a.values(), b.values());
    let s = par::sum(x.len(), |p| x[p].frobenius_inner(&y[p]));
    Ok(s * a.grid().cell_volume())
}

/// Unweighted nodal sum of `∇z : ∇z̃`; multiply by the cell volume for `((z, z̃))`.
pub fn grad_inner(a: &Gradient, b: &Gradient) -> f64 {
    par::sum(a.len(), |p| {
        let (x, y) = (&a[p], &b[p]);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += x[i][j] * y[i][j];
            }
        }
        acc
    })
}

/// `((z, z̃))` with quadrature weight.
pub fn form_v(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.same_grid(b)?;
    Ok(grad_inner(&gradient(a), &gradient(b)) * a.grid().cell_volume())
}

/// `(τ, τ̃)_𝕍 = (τ, τ̃)_ℍ + (div τ, div τ̃)_H`
pub fn tensor_v_inner(a: &TensorField, b: &TensorField) -> Result<f64> {
    a.same_grid(b)?;
    let h = tensor_inner(a, b)?;
    let d = vec_inner(&divergence(a), &divergence(b))?;
    Ok(h + d)
}

fn cache() -> &'static Mutex<HashMap<GridKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<GridKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

#[derive(Hash, PartialEq, Eq)]
struct GridKey([usize; 3], [u64; 3], Vec<bool>);

impl GridKey {
    fn of(g: &Grid) -> Self {
        let h = g.spacings();
        let faces = super::Face::ALL.iter().map(|f| g.dirichlet_faces().contains(*f)).collect();
        GridKey(g.extents(), [h[0].to_bits(), h[1].to_bits(), h[2].to_bits()], faces)
    }
}

const POWER_STEPS: usize = 50;

/// Estimate of `‖div‖²` on ℍ from power iteration on `−ε∘div`, inflated by
/// 10% and capped by the analytic difference bound. Cached per grid.
pub fn div_norm_sq_estimate(grid: &Grid) -> f64 {
    let key = GridKey::of(grid);
    if let Some(v) = cache().lock().unwrap().get(&key) {
        return *v;
    }
    let bound = grid.difference_norm_bound();
    let est = if bound == 0.0 {
        0.0
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut tau = random::gaussian_tensor_field(*grid, &mut rng, 1.0);
        let mut lambda = 0.0;
        for _ in 0..POWER_STEPS {
            let n = tau.norm_hh();
            if n == 0.0 {
                break;
            }
            tau = tau.scaled(1.0 / n);
            let next = strain(&divergence(&tau)).scaled(-1.0);
            lambda = tensor_inner(&tau, &next).unwrap_or(0.0);
            tau = next;
        }
        (1.1 * lambda).min(bound)
    };
    cache().lock().unwrap().insert(key, est);
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::fields::{Face, FaceSet};

    fn grid(n: [usize; 3]) -> Grid {
        Grid::new(n, [0.3, 0.25, 0.2], FaceSet::of(&[Face::XMin])).unwrap()
    }

    #[test]
    fn difference_transpose_is_exact() {
        for n in 1..6 {
            let ax = Axis { n, stride: 1, inv_h: 1.7 };
            let u: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
            let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos() + 0.2).collect();
            let lhs: f64 = (0..n).map(|p| diff(ax, p, p, |q| u[q]) * w[p]).sum();
            let rhs: f64 = (0..n).map(|p| u[p] * diff_t(ax, p, p, |q| w[q])).sum();
            assert!((lhs - rhs).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn zero_inputs_give_zero_outputs() {
        let g = grid([4, 3, 2]);
        assert_eq!(strain(&VectorField::zeros(g)), TensorField::zeros(g));
        assert_eq!(divergence(&TensorField::zeros(g)), VectorField::zeros(g));
        assert_eq!(laplacian_form_apply(&VectorField::zeros(g), 1.0), VectorField::zeros(g));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random::gaussian_vector_field(g, &mut rng, 1.0);
        let t = random::gaussian_tensor_field(g, &mut rng, 1.0);
        assert_eq!(vec_inner(&VectorField::zeros(g), &z).unwrap(), 0.0);
        assert_eq!(tensor_inner(&TensorField::zeros(g), &t).unwrap(), 0.0);
        assert_eq!(form_v(&VectorField::zeros(g), &z).unwrap(), 0.0);
        assert_eq!(tensor_v_inner(&TensorField::zeros(g), &t).unwrap(), 0.0);
    }

    #[test]
    fn linear_field_has_unit_strain_and_volume_norm() {
        let g = Grid::homogeneous([5, 4, 3], [0.2, 0.3, 0.5]).unwrap();
        let z = VectorField::from_fn(g, |x| [x[0], 0.0, 0.0]);
        let e = strain(&z);
        for t in e.values() {
            assert!((t.t11 - 1.0).abs() < 1e-14);
            assert!(t.t22.abs() + t.t33.abs() + t.t12.abs() + t.t13.abs() + t.t23.abs() < 1e-14);
        }
        let nv = form_v(&z, &z).unwrap();
        assert!((nv - g.volume()).abs() < 1e-13 * g.volume());
    }

    #[test]
    fn constant_tensor_has_zero_interior_divergence() {
        let g = Grid::homogeneous([5, 5, 5], [0.25; 3]).unwrap();
        let t = TensorField::constant(g, SymTensor3::new(1.0, -2.0, 0.5, 0.3, -0.1, 0.7));
        let d = divergence(&t);
        for p in 0..g.node_count() {
            let c = g.coords(p);
            if c.iter().all(|&k| k >= 1 && k + 2 < 5) {
                assert!(d.values()[p].iter().all(|x| x.abs() < 1e-13));
            }
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = VectorField::zeros(grid([3, 3, 3]));
        let b = VectorField::zeros(grid([4, 3, 3]));
        assert_eq!(vec_inner(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn laplacian_is_symmetric_and_matches_form() {
        let g = grid([4, 4, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let z = random::gaussian_vector_field(g, &mut rng, 1.0);
            let w = random::gaussian_vector_field(g, &mut rng, 1.0);
            let az = laplacian_form_apply(&z, 0.7);
            let aw = laplacian_form_apply(&w, 0.7);
            let l = vec_inner(&az, &w).unwrap();
            let r = vec_inner(&z, &aw).unwrap();
            assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
            let q = vec_inner(&az, &z).unwrap();
            let f = 0.7 * form_v(&z, &z).unwrap();
            assert!((q - f).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn power_estimate_is_below_analytic_bound() {
        let g = grid([6, 5, 4]);
        let est = div_norm_sq_estimate(&g);
        assert!(est > 0.0 && est <= g.difference_norm_bound());
        assert_eq!(div_norm_sq_estimate(&Grid::point()), 0.0);
    }
}
