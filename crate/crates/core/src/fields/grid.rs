use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the six faces of the box domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn axis(self) -> usize {
        (self as usize) / 2
    }

    pub fn is_max(self) -> bool {
        (self as usize) % 2 == 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Face::XMin => "x-",
            Face::XMax => "x+",
            Face::YMin => "y-",
            Face::YMax => "y+",
            Face::ZMin => "z-",
            Face::ZMax => "z+",
        }
    }

    pub fn parse(s: &str) -> Result<Face> {
        Face::ALL
            .into_iter()
            .find(|f| f.label() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown face '{s}' (expected x-, x+, y-, y+, z-, z+)")))
    }
}

/// A set of box faces, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FaceSet(u8);

impl FaceSet {
    pub const EMPTY: FaceSet = FaceSet(0);

    pub fn of(faces: &[Face]) -> FaceSet {
        FaceSet(faces.iter().fold(0, |m, f| m | f.bit()))
    }

    pub fn contains(self, f: Face) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self) -> FaceSet {
        FaceSet(!self.0 & 0b11_1111)
    }

    pub fn faces(self) -> Vec<Face> {
        Face::ALL.into_iter().filter(|f| self.contains(*f)).collect()
    }
}

impl Serialize for FaceSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let labels: Vec<&str> = self.faces().into_iter().map(Face::label).collect();
        labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FaceSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        let faces = labels
            .iter()
            .map(|l| Face::parse(l))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(FaceSet::of(&faces))
    }
}

/// A collocated nodal grid on the box `[0, (nx-1)hx] × … `.
///
/// Each node owns one cell of volume `hx·hy·hz` for quadrature. Nodes lying
/// on a Dirichlet face carry zero velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: [usize; 3],
    h: [f64; 3],
    dirichlet: FaceSet,
    homogeneous: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Axis {
    pub n: usize,
    pub stride: usize,
    pub inv_h: f64,
}

impl Grid {
    /// A grid with mixed boundary conditions; both the Dirichlet and the
    /// traction-free part must be nonempty.
    pub fn new(n: [usize; 3], h: [f64; 3], dirichlet: FaceSet) -> Result<Grid> {
        Self::check_extents(n, h)?;
        if dirichlet.is_empty() {
            return Err(Error::InvalidGrid("Dirichlet boundary is empty".into()));
        }
        if dirichlet.complement().is_empty() {
            return Err(Error::InvalidGrid("traction-free boundary is empty".into()));
        }
        for f in dirichlet.faces() {
            if n[f.axis()] == 1 {
                return Err(Error::InvalidGrid(format!(
                    "Dirichlet face {} lies on a degenerate axis",
                    f.label()
                )));
            }
        }
        Ok(Grid { n, h, dirichlet, homogeneous: false })
    }

    /// A grid without boundary masks, used for spatially homogeneous runs.
    pub fn homogeneous(n: [usize; 3], h: [f64; 3]) -> Result<Grid> {
        Self::check_extents(n, h)?;
        Ok(Grid { n, h, dirichlet: FaceSet::EMPTY, homogeneous: true })
    }

    /// The single-node grid: every derivative vanishes.
    pub fn point() -> Grid {
        Grid { n: [1, 1, 1], h: [1.0; 3], dirichlet: FaceSet::EMPTY, homogeneous: true }
    }

    fn check_extents(n: [usize; 3], h: [f64; 3]) -> Result<()> {
        if n.contains(&0) {
            return Err(Error::InvalidGrid(format!("extents must be at least 1, got {n:?}")));
        }
        if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got {h:?}")));
        }
        Ok(())
    }

    pub fn extents(&self) -> [usize; 3] {
        self.n
    }

    pub fn spacings(&self) -> [f64; 3] {
        self.h
    }

    pub fn dirichlet_faces(&self) -> FaceSet {
        self.dirichlet
    }

    pub fn neumann_faces(&self) -> FaceSet {
        if self.homogeneous {
            FaceSet::EMPTY
        } else {
            self.dirichlet.complement()
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Quadrature weight of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    /// Measure of the domain under nodal quadrature.
    pub fn volume(&self) -> f64 {
        self.node_count() as f64 * self.cell_volume()
    }

    #[inline]
    pub fn coords(&self, p: usize) -> [usize; 3] {
        let i = p % self.n[0];
        let j = (p / self.n[0]) % self.n[1];
        let k = p / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    pub fn position(&self, p: usize) -> [f64; 3] {
        let c = self.coords(p);
        [c[0] as f64 * self.h[0], c[1] as f64 * self.h[1], c[2] as f64 * self.h[2]]
    }

    #[inline]
    pub fn is_dirichlet_node(&self, p: usize) -> bool {
        if self.dirichlet.is_empty() {
            return false;
        }
        let c = self.coords(p);
        Face::ALL.into_iter().filter(|f| self.dirichlet.contains(*f)).any(|f| {
            let a = f.axis();
            if f.is_max() {
                c[a] + 1 == self.n[a]
            } else {
                c[a] == 0
            }
        })
    }

    /// `true` at nodes where the velocity is free.
    pub fn free_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|p| !self.is_dirichlet_node(p)).collect()
    }

    pub(crate) fn axes(&self) -> [Axis; 3] {
        let strides = [1, self.n[0], self.n[0] * self.n[1]];
        std::array::from_fn(|a| Axis { n: self.n[a], stride: strides[a], inv_h: 1.0 / self.h[a] })
    }

    /// Upper bound on `Σ_a ‖D_a‖²`, which also bounds `‖div‖²` on ℍ.
    ///
    /// The one-sided stencil repeats the last edge, so `‖D_a‖²` approaches
    /// `(2 + 2√2)/h²` rather than `4/h²`; `5/h²` covers every length.
    pub fn difference_norm_bound(&self) -> f64 {
        (0..3)
            .filter(|&a| self.n[a] > 1)
            .map(|a| 5.0 / (self.h[a] * self.h[a]))
            .sum()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n[0], self.n[1], self.n[2])
    }
}
