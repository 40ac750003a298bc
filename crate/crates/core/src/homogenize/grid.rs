//! Cell-centred grids and scalar fields on the unit torus.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::PdeError;
use crate::tensor::{Point, MAX_DIM};

/// `n^d` cells of side `h = 1/n`; cell `(i, j)` is centred at `((i+½)h, (j+½)h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self, PdeError> {
        if dim != 1 && dim != 2 {
            return Err(PdeError::BadGrid(format!("dimension {dim} not supported")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(PdeError::BadGrid(format!("n = {n} must be a power of two ≥ 16")));
        }
        Ok(TorusGrid { dim, n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.n, c / self.n)
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let (i, j) = self.coords(c);
        let h = self.h();
        let mut p = [(i as f64 + 0.5) * h, 0.0];
        if self.dim == 2 {
            p[1] = (j as f64 + 0.5) * h;
        }
        p
    }

    /// Same dimension, twice the resolution.
    pub fn refined(&self) -> TorusGrid {
        TorusGrid { dim: self.dim, n: 2 * self.n }
    }
}

/// Cell values of a scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl TorusField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        TorusField { grid, values }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.cells()).map(|c| f(&grid.cell_center(c))).collect();
        TorusField { grid, values }
    }

    /// Midpoint quadrature `h^d Σ v`.
    pub fn integral(&self) -> f64 {
        self.grid.volume() * self.values.iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `h^d Σ u v`.
    pub fn dot(&self, other: &TorusField) -> f64 {
        self.grid.volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Periodic (bi)linear interpolation between cell centres.
    pub fn interpolate(&self, x: &Point) -> f64 {
        let n = self.grid.n;
        let locate = |v: f64| {
            let s = v * n as f64 - 0.5;
            let fl = s.floor();
            let i0 = (fl as i64).rem_euclid(n as i64) as usize;
            (i0, (i0 + 1) % n, s - fl)
        };
        let (i0, i1, tx) = locate(x[0]);
        if self.grid.dim == 1 {
            return (1.0 - tx) * self.values[i0] + tx * self.values[i1];
        }
        let (j0, j1, ty) = locate(x[1]);
        let v = |i, j| self.values[self.grid.index(i, j)];
        (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0)) + ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1))
    }

    /// Writes `x[,y],value` rows at the cell centres.
    pub fn write_csv<W: Write>(&self, mut out: W, name: &str) -> io::Result<()> {
        if self.grid.dim == 1 {
            writeln!(out, "x,{name}")?;
        } else {
            writeln!(out, "x,y,{name}")?;
        }
        for (c, v) in self.values.iter().enumerate() {
            let p = self.grid.cell_center(c);
            for coord in &p[..self.grid.dim.min(MAX_DIM)] {
                write!(out, "{coord},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(1, 8).is_err());
        assert!(TorusGrid::new(1, 48).is_err());
        assert!(TorusGrid::new(3, 16).is_err());
        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(g.cells(), 256);
        assert_eq!(g.cell_center(g.index(3, 5)), [3.5 / 16.0, 5.5 / 16.0]);
    }

    #[test]
    fn interpolation_reproduces_linear_data_and_wraps() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = TorusField::from_fn(g, |p| (2.0 * std::f64::consts::PI * p[0]).sin() + p[1].cos());
        let c = g.index(7, 9);
        assert!((f.interpolate(&g.cell_center(c)) - f.values[c]).abs() < 1e-14);
        assert!((f.interpolate(&[1.3, -0.2]) - f.interpolate(&[0.3, 0.8])).abs() < 1e-14);
    }

    #[test]
    fn csv_layout() {
        let g = TorusGrid::new(1, 16).unwrap();
        let f = TorusField::from_fn(g, |p| p[0]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, "u").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x,u"));
        assert_eq!(text.lines().count(), 17);
    }
}
