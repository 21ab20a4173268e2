//! Symmetric 3×3 tensors and the deviatoric-ball projection.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric 3×3 tensor stored as its six independent components.
///
/// Inner products use the full 3×3 sum, so every off-diagonal product is
/// counted twice.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor3 {
    pub t11: f64,
    pub t22: f64,
    pub t33: f64,
    pub t12: f64,
    pub t13: f64,
    pub t23: f64,
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: SymTensor3 = SymTensor3::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);

    pub const fn new(t11: f64, t22: f64, t33: f64, t12: f64, t13: f64, t23: f64) -> Self {
        SymTensor3 { t11, t22, t33, t12, t13, t23 }
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor3::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Components in the fixed order (11, 22, 33, 12, 13, 23).
    pub fn to_array(self) -> [f64; 6] {
        [self.t11, self.t22, self.t33, self.t12, self.t13, self.t23]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        SymTensor3::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Entry (i, j), zero-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.t11,
            (1, 1) => self.t22,
            (2, 2) => self.t33,
            (0, 1) => self.t12,
            (0, 2) => self.t13,
            (1, 2) => self.t23,
            _ => panic!("index out of range: ({i}, {j})"),
        }
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        [
            [self.t11, self.t12, self.t13],
            [self.t12, self.t22, self.t23],
            [self.t13, self.t23, self.t33],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.t11 + self.t22 + self.t33
    }

    /// Spherical part (trace/3)·I.
    pub fn trace_term(&self) -> SymTensor3 {
        let m = self.trace() / 3.0;
        SymTensor3::diag(m, m, m)
    }

    pub fn deviator(&self) -> SymTensor3 {
        let m = self.trace() / 3.0;
        SymTensor3::new(self.t11 - m, self.t22 - m, self.t33 - m, self.t12, self.t13, self.t23)
    }

    pub fn frobenius_inner(&self, o: &SymTensor3) -> f64 {
        self.t11 * o.t11
            + self.t22 * o.t22
            + self.t33 * o.t33
            + 2.0 * (self.t12 * o.t12 + self.t13 * o.t13 + self.t23 * o.t23)
    }

    pub fn norm_sq(&self) -> f64 {
        self.frobenius_inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Value of the von Mises function ½|τᴰ|².
    pub fn von_mises(&self) -> f64 {
        0.5 * self.deviator().norm_sq()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Nearest point of `{π : ½|πᴰ|² ≤ g}` in the Frobenius metric.
    ///
    /// Only the deviator is rescaled; the spherical part is kept. A feasible
    /// input is returned unchanged.
    pub fn project_deviatoric_ball(&self, g: f64) -> Result<SymTensor3> {
        if !(g > 0.0) {
            return Err(Error::NonPositiveThreshold(g));
        }
        Ok(self.project_unchecked(g))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, g: f64) -> SymTensor3 {
        let dev = self.deviator();
        let dn2 = dev.norm_sq();
        if 0.5 * dn2 <= g {
            return *self;
        }
        let mut s = (2.0 * g).sqrt() / dn2.sqrt();
        let base = self.trace_term();
        let mut p = base + dev * s;
        // Round-off can leave p a few ulps outside the ball; pull it in so a
        // second projection sees a feasible point and returns it unchanged.
        while p.von_mises() > g {
            s *= 1.0 - 4.0 * f64::EPSILON;
            p = base + dev * s;
        }
        p
    }
}

impl Add for SymTensor3 {
    type Output = SymTensor3;
    fn add(self, o: SymTensor3) -> SymTensor3 {
        SymTensor3::new(
            self.t11 + o.t11,
            self.t22 + o.t22,
            self.t33 + o.t33,
            self.t12 + o.t12,
            self.t13 + o.t13,
            self.t23 + o.t23,
        )
    }
}

impl Sub for SymTensor3 {
    type Output = SymTensor3;
    fn sub(self, o: SymTensor3) -> SymTensor3 {
        SymTensor3::new(
            self.t11 - o.t11,
            self.t22 - o.t22,
            self.t33 - o.t33,
            self.t12 - o.t12,
            self.t13 - o.t13,
            self.t23 - o.t23,
        )
    }
}

impl Mul<f64> for SymTensor3 {
    type Output = SymTensor3;
    fn mul(self, s: f64) -> SymTensor3 {
        SymTensor3::new(
            self.t11 * s,
            self.t22 * s,
            self.t33 * s,
            self.t12 * s,
            self.t13 * s,
            self.t23 * s,
        )
    }
}

impl Neg for SymTensor3 {
    type Output = SymTensor3;
    fn neg(self) -> SymTensor3 {
        self * -1.0
    }
}

impl AddAssign for SymTensor3 {
    fn add_assign(&mut self, o: SymTensor3) {
        *self = *self + o;
    }
}

impl SubAssign for SymTensor3 {
    fn sub_assign(&mut self, o: SymTensor3) {
        *self = *self - o;
    }
}
