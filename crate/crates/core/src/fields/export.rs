//! Snapshot files: legacy ASCII VTK structured points and flat CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Grid, TensorField, VectorField};
use crate::error::{Error, Result};
use crate::tensor::SymTensor3;

pub const SNAPSHOT_COLUMNS: [&str; 13] =
    ["node", "x1", "x2", "x3", "v1", "v2", "v3", "s11", "s22", "s33", "s12", "s13", "s23"];

/// Writes `v` and `σ` as one VTK dataset: a vector array for `v` and one
/// scalar array per stress component.
pub fn write_vtk(path: &Path, t: f64, v: &VectorField, sigma: &TensorField) -> Result<()> {
    if v.grid() != sigma.grid() {
        return Err(Error::GridMismatch);
    }
    let g = v.grid();
    let [nx, ny, nz] = g.extents();
    let [hx, hy, hz] = g.spacings();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "snapshot t={t:e}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {hx:e} {hy:e} {hz:e}")?;
    writeln!(w, "POINT_DATA {}", g.node_count())?;
    writeln!(w, "VECTORS v double")?;
    for x in v.values() {
        writeln!(w, "{:e} {:e} {:e}", x[0], x[1], x[2])?;
    }
    let names = ["s11", "s22", "s33", "s12", "s13", "s23"];
    for (c, name) in names.iter().enumerate() {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for s in sigma.values() {
            writeln!(w, "{:e}", s.to_array()[c])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot_csv(path: &Path, v: &VectorField, sigma: &TensorField) -> Result<()> {
    if v.grid() != sigma.grid() {
        return Err(Error::GridMismatch);
    }
    let g = v.grid();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SNAPSHOT_COLUMNS)?;
    for p in 0..g.node_count() {
        let x = g.position(p);
        let vv = v.values()[p];
        let s = sigma.values()[p].to_array();
        let mut row = vec![p.to_string()];
        row.extend(x.iter().chain(vv.iter()).chain(s.iter()).map(|a| format!("{a:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot_csv`] back onto `grid`.
/// The velocity is returned as stored, without the boundary mask.
pub fn read_snapshot_csv(path: &Path, grid: Grid) -> Result<(VectorField, TensorField)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(SNAPSHOT_COLUMNS.iter().copied()) {
        return Err(Error::Parse(format!("{}: unexpected snapshot header", path.display())));
    }
    let n = grid.node_count();
    let mut v = vec![[0.0; 3]; n];
    let mut s = vec![SymTensor3::ZERO; n];
    let mut seen = vec![false; n];
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}: column {}: {e}", path.display(), SNAPSHOT_COLUMNS[k])))
        };
        let p: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("{}: node index: {e}", path.display())))?;
        if p >= n {
            return Err(Error::GridMismatch);
        }
        v[p] = [num(4)?, num(5)?, num(6)?];
        s[p] = SymTensor3::from_array([num(7)?, num(8)?, num(9)?, num(10)?, num(11)?, num(12)?]);
        seen[p] = true;
    }
    if seen.iter().any(|b| !b) {
        return Err(Error::Parse(format!("{}: missing nodes for grid {grid}", path.display())));
    }
    Ok((VectorField::from_raw(grid, v), TensorField::from_values(grid, s)?))
}
