//! Uniform cell-centered grids: the periodic spatial torus and the truncated
//! trait axis.
//!
//! Both grids use midpoint quadrature, so a sampled function is integrated as
//! `spacing * sum(values)` everywhere in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on the `dim`-dimensional torus `[0, period)^dim`.
///
/// Cells are stored with the first axis varying fastest, so in two dimensions
/// cell `(i, j)` has flat index `i + points_per_dim * j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_dim: usize,
    period: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_dim: usize, period: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        if points_per_dim < 4 {
            return Err(Error::param(
                "points_per_dim",
                format!("too few points: need at least 4, got {points_per_dim}"),
            ));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::param("period", format!("must be positive, got {period}")));
        }
        Ok(Self {
            dim,
            points_per_dim,
            period,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points_per_dim as f64
    }

    pub fn num_cells(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    /// Volume of one cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Wraps any signed index onto `0..points_per_dim`.
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.points_per_dim as isize) as usize
    }

    /// Per-axis indices of a flat cell index.
    pub fn axis_indices(&self, cell: usize) -> [usize; 2] {
        let m = self.points_per_dim;
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell % m, cell / m]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] + self.points_per_dim * idx[1]
        }
    }

    /// Cell center coordinates; unused trailing components are zero.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        let h = self.spacing();
        let idx = self.axis_indices(cell);
        let mut x = [0.0; 2];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = (idx[axis] as f64 + 0.5) * h;
        }
        x
    }

    /// Flat index of the neighbour `offset` cells away along `axis`.
    pub fn neighbor(&self, cell: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.axis_indices(cell);
        idx[axis] = self.wrap(idx[axis] as isize + offset);
        self.flat_index(idx)
    }

    /// Periodic distance between two cell centers (Euclidean over the
    /// per-axis minimal images).
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let xa = self.center(a);
        let xb = self.center(b);
        let mut s = 0.0;
        for axis in 0..self.dim {
            let mut d = (xa[axis] - xb[axis]).abs() % self.period;
            if d > 0.5 * self.period {
                d = self.period - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Midpoint quadrature over the torus.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.num_cells() {
            return Err(Error::LengthMismatch {
                expected: self.num_cells(),
                got: values.len(),
            });
        }
        Ok(self.cell_volume() * values.iter().sum::<f64>())
    }
}

/// Uniform cell-centered grid on the truncated trait interval `[y_min, y_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitGrid {
    y_min: f64,
    y_max: f64,
    points: usize,
}

impl TraitGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(y_min: f64, y_max: f64, points: usize) -> Result<Self> {
        if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
            return Err(Error::param(
                "trait_bounds",
                format!("need y_min < y_max, got [{y_min}, {y_max}]"),
            ));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::param(
                "trait_points",
                format!("too few points: need at least {}, got {points}", Self::MIN_POINTS),
            ));
        }
        Ok(Self {
            y_min,
            y_max,
            points,
        })
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.y_max - self.y_min) / self.points as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.spacing()
    }

    /// Left edge of cell `j`.
    pub fn edge(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.center(j)).collect()
    }

    /// Midpoint quadrature `h_y * sum(values)`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points {
            return Err(Error::LengthMismatch {
                expected: self.points,
                got: values.len(),
            });
        }
        Ok(self.spacing() * values.iter().sum::<f64>())
    }

    /// Grids are compatible when they describe the same cells up to rounding.
    pub fn same_as(&self, other: &TraitGrid) -> bool {
        let tol = 1e-12 * (self.y_max - self.y_min).abs().max(1.0);
        self.points == other.points
            && (self.y_min - other.y_min).abs() <= tol
            && (self.y_max - other.y_max).abs() <= tol
    }

    /// Default truncation `[lo - 8 sqrt(A), hi + 8 sqrt(A)]` around the range
    /// `[lo, hi]` swept by the optimal trait.
    pub fn auto(lo: f64, hi: f64, a: f64, points: usize) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::param("A", format!("must be positive, got {a}")));
        }
        let margin = 8.0 * a.sqrt();
        Self::new(lo - margin, hi + margin, points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_spacing_and_counts() {
        let g = TorusGrid::new(1, 64, 1.0).unwrap();
        assert_eq!(g.spacing(), 1.0 / 64.0);
        assert_eq!(g.num_cells(), 64);
        let g2 = TorusGrid::new(2, 32, 1.0).unwrap();
        assert_eq!(g2.num_cells(), 1024);
    }

    #[test]
    fn torus_rejects_bad_input() {
        let err = TorusGrid::new(1, 3, 1.0).unwrap_err();
        assert!(err.to_string().contains("too few points"));
        assert!(TorusGrid::new(3, 16, 1.0).is_err());
        assert!(TorusGrid::new(1, 16, 0.0).is_err());
        assert!(TorusGrid::new(1, 16, -2.0).is_err());
    }

    #[test]
    fn periodic_wrap_and_distance() {
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        for i in 0..8isize {
            assert_eq!(g.wrap(i + 8), i as usize);
            assert_eq!(g.wrap(i - 8), i as usize);
        }
        assert_eq!(g.neighbor(0, 0, -1), 7);
        assert!((g.distance(0, 7) - 0.125).abs() < 1e-15);
        for a in 0..8 {
            for b in 0..8 {
                assert!(g.distance(a, b) <= 0.5 + 1e-15);
            }
            assert!(g.center(a)[0] >= 0.0 && g.center(a)[0] < 1.0);
        }
        let g2 = TorusGrid::new(2, 4, 1.0).unwrap();
        let c = g2.flat_index([3, 2]);
        assert_eq!(g2.axis_indices(c), [3, 2]);
        assert_eq!(g2.neighbor(c, 1, 2), g2.flat_index([3, 0]));
    }

    #[test]
    fn trait_grid_spacing() {
        let g = TraitGrid::new(-8.0, 8.0, 256).unwrap();
        assert_eq!(g.spacing(), 1.0 / 16.0);
        assert_eq!(g.center(0), -8.0 + 1.0 / 32.0);
        let g2 = TraitGrid::new(-8.0, 8.0, 512).unwrap();
        assert_eq!(g2.spacing(), 0.5 * g.spacing());
        assert!(TraitGrid::new(2.0, 2.0, 100).is_err());
        assert!(TraitGrid::new(3.0, 2.0, 100).is_err());
        assert!(TraitGrid::new(0.0, 1.0, 15).is_err());
    }

    #[test]
    fn integrate_constants_and_gaussian() {
        for m in [16, 100, 256, 512] {
            let g = TraitGrid::new(-8.0, 8.0, m).unwrap();
            let v = g.integrate(&vec![1.0; m]).unwrap();
            assert!((v - 16.0).abs() < 1e-12);
            assert_eq!(g.integrate(&vec![0.0; m]).unwrap(), 0.0);
        }
        let g = TraitGrid::new(-8.0, 8.0, 512).unwrap();
        let vals: Vec<f64> = g
            .centers()
            .iter()
            .map(|y| (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .collect();
        assert!((g.integrate(&vals).unwrap() - 1.0).abs() < 1e-10);
        assert!(g.integrate(&vals[1..]).is_err());
    }

    #[test]
    fn midpoint_exact_for_affine() {
        let g = TraitGrid::new(-1.3, 2.9, 37).unwrap();
        let vals: Vec<f64> = g.centers().iter().map(|y| 3.0 * y - 0.7).collect();
        let exact = 1.5 * (2.9f64.powi(2) - 1.3f64.powi(2)) - 0.7 * 4.2;
        assert!((g.integrate(&vals).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn integrate_is_linear() {
        use proptest::prelude::*;
        let g = TraitGrid::new(-4.0, 4.0, 32).unwrap();
        proptest!(|(u in proptest::collection::vec(-10.0f64..10.0, 32),
                    v in proptest::collection::vec(-10.0f64..10.0, 32),
                    a in -5.0f64..5.0, b in -5.0f64..5.0)| {
            let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = g.integrate(&w).unwrap();
            let rhs = a * g.integrate(&u).unwrap() + b * g.integrate(&v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        });
    }
}
