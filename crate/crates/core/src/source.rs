//! Time-dependent data sampled onto a grid: scalar thresholds, tensor fields
//! (σ*, h) and vector fields (f).
//!
//! Every source reports a value at `(t, node)` and, when it knows one, the
//! time derivative. Rates are right-continuous at kinks.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{Grid, TensorField, VectorField};
use crate::par;
use crate::tensor::SymTensor3;

/// A scalar function of `(t, x)` sampled at grid nodes.
pub trait ScalarSource: Send + Sync + fmt::Debug {
    fn sample(&self, grid: &Grid, t: f64) -> Vec<f64>;

    /// `∂/∂t` at the nodes, or `None` when the source has no derivative.
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<Vec<f64>>;
}

pub trait TensorSource: Send + Sync + fmt::Debug {
    fn sample(&self, grid: &Grid, t: f64) -> TensorField;
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<TensorField>;

    /// `true` when the field never changes in time.
    fn is_static(&self) -> bool {
        false
    }
}

pub trait VectorSource: Send + Sync + fmt::Debug {
    fn sample(&self, grid: &Grid, t: f64) -> VectorField;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScalar(pub f64);

impl ScalarSource for ConstantScalar {
    fn sample(&self, grid: &Grid, _t: f64) -> Vec<f64> {
        vec![self.0; grid.node_count()]
    }
    fn sample_rate(&self, grid: &Grid, _t: f64) -> Option<Vec<f64>> {
        Some(vec![0.0; grid.node_count()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprScalar(pub Expr);

impl ScalarSource for ExprScalar {
    fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        par::map_indexed(grid.node_count(), |p| self.0.eval(t, grid.position(p)))
    }
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        Some(par::map_indexed(grid.node_count(), |p| self.0.eval_dt(t, grid.position(p)).1))
    }
}

type ScalarFn = Arc<dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync>;

/// Scalar given by a closure `g(t, x)` with optional derivative closure.
#[derive(Clone)]
pub struct FnScalar {
    f: ScalarFn,
    df: Option<ScalarFn>,
}

impl FnScalar {
    pub fn new(f: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        FnScalar { f: Arc::new(f), df: None }
    }

    pub fn with_rate(mut self, df: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        self.df = Some(Arc::new(df));
        self
    }
}

impl fmt::Debug for FnScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnScalar").field("has_rate", &self.df.is_some()).finish()
    }
}

impl ScalarSource for FnScalar {
    fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        par::map_indexed(grid.node_count(), |p| (self.f)(t, grid.position(p)))
    }
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        let df = self.df.as_ref()?;
        Some(par::map_indexed(grid.node_count(), |p| df(t, grid.position(p))))
    }
}

/// Time-sampled values with linear interpolation and constant extension.
///
/// Each row holds either one value (spatially uniform) or one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TableScalar {
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl TableScalar {
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != rows.len() {
            return Err(Error::Parse("threshold table needs one row per time and at least one row".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("threshold table times must be strictly increasing".into()));
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Parse("threshold table rows must have equal nonzero width".into()));
        }
        Ok(TableScalar { times, rows })
    }

    /// Reads `t, value[, value…]` rows; a header line is allowed.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)?;
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) if v.len() >= 2 => {
                    times.push(v[0]);
                    rows.push(v[1..].to_vec());
                }
                Err(_) if k == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!("{}: bad table row {}", path.display(), k + 1)));
                }
            }
        }
        TableScalar::new(times, rows)
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    fn check_width(&self, grid: &Grid) {
        assert!(
            self.width() == 1 || self.width() == grid.node_count(),
            "table width {} does not fit grid {grid}",
            self.width()
        );
    }

    /// Segment index `k` with `times[k] ≤ t < times[k+1]`, or `None` outside.
    fn segment(&self, t: f64) -> Option<usize> {
        let n = self.times.len();
        if n < 2 || t < self.times[0] || t >= self.times[n - 1] {
            return None;
        }
        Some(self.times.partition_point(|&s| s <= t) - 1)
    }

    fn value_at(&self, t: f64, col: usize) -> f64 {
        let n = self.times.len();
        match self.segment(t) {
            Some(k) => {
                let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
                (1.0 - w) * self.rows[k][col] + w * self.rows[k + 1][col]
            }
            None if t < self.times[0] => self.rows[0][col],
            None => self.rows[n - 1][col],
        }
    }

    fn rate_at(&self, t: f64, col: usize) -> f64 {
        match self.segment(t) {
            Some(k) => (self.rows[k + 1][col] - self.rows[k][col]) / (self.times[k + 1] - self.times[k]),
            None => 0.0,
        }
    }

    /// Validates the table against a grid before use.
    pub fn fits(&self, grid: &Grid) -> Result<()> {
        if self.width() == 1 || self.width() == grid.node_count() {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "threshold table has {} values per row; expected 1 or {} for grid {grid}",
                self.width(),
                grid.node_count()
            )))
        }
    }
}

impl ScalarSource for TableScalar {
    fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        self.check_width(grid);
        let col = |p: usize| if self.width() == 1 { 0 } else { p };
        (0..grid.node_count()).map(|p| self.value_at(t, col(p))).collect()
    }
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        self.check_width(grid);
        let col = |p: usize| if self.width() == 1 { 0 } else { p };
        Some((0..grid.node_count()).map(|p| self.rate_at(t, col(p))).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroTensor;

impl TensorSource for ZeroTensor {
    fn sample(&self, grid: &Grid, _t: f64) -> TensorField {
        TensorField::zeros(*grid)
    }
    fn sample_rate(&self, grid: &Grid, _t: f64) -> Option<TensorField> {
        Some(TensorField::zeros(*grid))
    }
    fn is_static(&self) -> bool {
        true
    }
}

/// Six component expressions in the order (11, 22, 33, 12, 13, 23).
#[derive(Debug, Clone, PartialEq)]
pub struct ExprTensor(pub [Expr; 6]);

impl TensorSource for ExprTensor {
    fn sample(&self, grid: &Grid, t: f64) -> TensorField {
        TensorField::from_fn(*grid, |x| SymTensor3::from_array(std::array::from_fn(|c| self.0[c].eval(t, x))))
    }
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<TensorField> {
        Some(TensorField::from_fn(*grid, |x| {
            SymTensor3::from_array(std::array::from_fn(|c| self.0[c].eval_dt(t, x).1))
        }))
    }
    fn is_static(&self) -> bool {
        self.0.iter().all(|e| !e.depends_on_t())
    }
}

type TensorFn = Arc<dyn Fn(f64, [f64; 3]) -> SymTensor3 + Send + Sync>;

/// Tensor field given by closures for the value and (optionally) the rate.
#[derive(Clone)]
pub struct FnTensor {
    f: TensorFn,
    df: Option<TensorFn>,
}

impl FnTensor {
    pub fn new(f: impl Fn(f64, [f64; 3]) -> SymTensor3 + Send + Sync + 'static) -> Self {
        FnTensor { f: Arc::new(f), df: None }
    }

    pub fn with_rate(mut self, df: impl Fn(f64, [f64; 3]) -> SymTensor3 + Send + Sync + 'static) -> Self {
        self.df = Some(Arc::new(df));
        self
    }
}

impl fmt::Debug for FnTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnTensor").field("has_rate", &self.df.is_some()).finish()
    }
}

impl TensorSource for FnTensor {
    fn sample(&self, grid: &Grid, t: f64) -> TensorField {
        TensorField::from_fn(*grid, |x| (self.f)(t, x))
    }
    fn sample_rate(&self, grid: &Grid, t: f64) -> Option<TensorField> {
        let df = self.df.as_ref()?;
        Some(TensorField::from_fn(*grid, |x| df(t, x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroVector;

impl VectorSource for ZeroVector {
    fn sample(&self, grid: &Grid, _t: f64) -> VectorField {
        VectorField::zeros(*grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprVector(pub [Expr; 3]);

impl VectorSource for ExprVector {
    fn sample(&self, grid: &Grid, t: f64) -> VectorField {
        VectorField::from_fn(*grid, |x| std::array::from_fn(|c| self.0[c].eval(t, x)))
    }
}

type VectorFn = Arc<dyn Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync>;

#[derive(Clone)]
pub struct FnVector(VectorFn);

impl FnVector {
    pub fn new(f: impl Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync + 'static) -> Self {
        FnVector(Arc::new(f))
    }
}

impl fmt::Debug for FnVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnVector")
    }
}

impl VectorSource for FnVector {
    fn sample(&self, grid: &Grid, t: f64) -> VectorField {
        VectorField::from_fn(*grid, |x| (self.0)(t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_and_extends() {
        let tab = TableScalar::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![2.0], vec![1.5]]).unwrap();
        let g = Grid::point();
        assert_eq!(tab.sample(&g, -1.0), vec![1.0]);
        assert_eq!(tab.sample(&g, 0.5), vec![1.5]);
        assert_eq!(tab.sample(&g, 1.5), vec![1.75]);
        assert_eq!(tab.sample(&g, 3.0), vec![1.5]);
        assert_eq!(tab.sample_rate(&g, 0.5), Some(vec![1.0]));
        assert_eq!(tab.sample_rate(&g, 1.0), Some(vec![-0.5]));
        assert_eq!(tab.sample_rate(&g, 2.0), Some(vec![0.0]));
    }

    #[test]
    fn table_rejects_bad_shapes() {
        assert!(TableScalar::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(TableScalar::new(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(TableScalar::new(vec![], vec![]).is_err());
    }

    #[test]
    fn table_reads_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        std::fs::write(&p, "t,g\n0,1.0\n0.5,1.4\n1,1.2\n").unwrap();
        let tab = TableScalar::from_csv(&p).unwrap();
        assert_eq!(tab.sample(&Grid::point(), 0.25), vec![1.2]);
    }

    #[test]
    fn expression_tensor_static_flag() {
        let e = |s: &str| Expr::parse(s).unwrap();
        let st = ExprTensor([e("0"), e("0"), e("0"), e("0.1*x2"), e("0"), e("0")]);
        assert!(st.is_static());
        let dy = ExprTensor([e("0"), e("0"), e("0"), e("0.1*sin(t)"), e("0"), e("0")]);
        assert!(!dy.is_static());
        let r = dy.sample_rate(&Grid::point(), 0.0).unwrap();
        assert!((r.values()[0].t12 - 0.1).abs() < 1e-15);
    }
}
