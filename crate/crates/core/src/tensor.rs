//! Small fixed-size linear algebra for d ≤ 2.
//!
//! Points always carry two slots; in one dimension the second slot is zero
//! and ignored.

pub const MAX_DIM: usize = 2;

pub type Point = [f64; MAX_DIM];

pub fn dot(u: &Point, v: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| u[k] * v[k]).sum()
}

pub fn norm(u: &Point, dim: usize) -> f64 {
    dot(u, u, dim).sqrt()
}

/// Symmetric 2×2 matrix. In one dimension only `xx` is meaningful.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn scalar(v: f64, dim: usize) -> Self {
        if dim == 1 {
            Sym2 { xx: v, xy: 0.0, yy: 0.0 }
        } else {
            Sym2 { xx: v, xy: 0.0, yy: v }
        }
    }

    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2 { xx: self.xx + other.xx, xy: self.xy + other.xy, yy: self.yy + other.yy }
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2 { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }

    pub fn mul_vec(&self, v: &Point, dim: usize) -> Point {
        if dim == 1 {
            [self.xx * v[0], 0.0]
        } else {
            [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
        }
    }

    /// Product `self · self`, which is again symmetric.
    pub fn square(&self, dim: usize) -> Sym2 {
        if dim == 1 {
            Sym2 { xx: self.xx * self.xx, xy: 0.0, yy: 0.0 }
        } else {
            Sym2 {
                xx: self.xx * self.xx + self.xy * self.xy,
                xy: self.xy * (self.xx + self.yy),
                yy: self.xy * self.xy + self.yy * self.yy,
            }
        }
    }

    /// Eigenvalues in ascending order. For `dim == 1` both entries equal `xx`.
    pub fn eigenvalues(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let mean = 0.5 * (self.xx + self.yy);
        let half_gap = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    /// Principal square root of a positive semidefinite matrix.
    ///
    /// Uses the closed form `√A = (A + s I) / t` with `s = √det A` and
    /// `t = √(tr A + 2s)`.
    pub fn sqrt_psd(&self, dim: usize) -> Sym2 {
        if dim == 1 {
            return Sym2 { xx: self.xx.max(0.0).sqrt(), xy: 0.0, yy: 0.0 };
        }
        let det = (self.xx * self.yy - self.xy * self.xy).max(0.0);
        let s = det.sqrt();
        let t = (self.xx + self.yy + 2.0 * s).max(0.0).sqrt();
        if t == 0.0 {
            return Sym2::ZERO;
        }
        Sym2 { xx: (self.xx + s) / t, xy: self.xy / t, yy: (self.yy + s) / t }
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn max_abs_diff(&self, other: &Sym2) -> f64 {
        (self.xx - other.xx).abs().max((self.xy - other.xy).abs()).max((self.yy - other.yy).abs())
    }
}
