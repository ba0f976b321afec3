//! Implicit diffusion `∂_t u = Δ_x u` on the periodic torus.
//!
//! Each step solves a constant-coefficient cyclic tridiagonal system per grid
//! line (Thomas algorithm plus a Sherman–Morrison correction for the two
//! corner entries). Fields are stored as `cells × width` row-major blocks and
//! all `width` columns are swept together, so one factorization serves every
//! trait slice. In two dimensions the axes are split (x then y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::TorusGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionScheme {
    /// Second order, unconditionally stable; positivity holds only for data
    /// that is smooth on the grid scale.
    #[default]
    CrankNicolson,
    /// First order, unconditionally stable and positivity preserving.
    BackwardEuler,
}

/// Factorized cyclic tridiagonal operator `(1 + 2c) I − c (S + S⁻¹)`.
#[derive(Clone, Debug)]
struct CyclicFactor {
    n: usize,
    off: f64,
    c_prime: Vec<f64>,
    inv_den: Vec<f64>,
    z: Vec<f64>,
    corr_den: f64,
    gamma: f64,
    beta: f64,
}

impl CyclicFactor {
    fn new(n: usize, c: f64) -> Self {
        let b = 1.0 + 2.0 * c;
        let off = -c;
        let (alpha, beta) = (off, off);
        let gamma = -b;
        let mut diag = vec![b; n];
        diag[0] = b - gamma;
        diag[n - 1] = b - alpha * beta / gamma;
        let mut c_prime = vec![0.0; n];
        let mut inv_den = vec![0.0; n];
        inv_den[0] = 1.0 / diag[0];
        c_prime[0] = off * inv_den[0];
        for i in 1..n {
            let den = diag[i] - off * c_prime[i - 1];
            inv_den[i] = 1.0 / den;
            c_prime[i] = off * inv_den[i];
        }
        let mut fac = Self {
            n,
            off,
            c_prime,
            inv_den,
            z: Vec::new(),
            corr_den: 0.0,
            gamma,
            beta,
        };
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = alpha;
        fac.thomas(&mut z, 1);
        fac.corr_den = 1.0 + z[0] + beta * z[n - 1] / gamma;
        fac.z = z;
        fac
    }

    /// In-place tridiagonal solve on `n` rows of `w` columns.
    fn thomas(&self, r: &mut [f64], w: usize) {
        let n = self.n;
        for v in &mut r[..w] {
            *v *= self.inv_den[0];
        }
        for i in 1..n {
            let (prev, cur) = r.split_at_mut(i * w);
            let prev = &prev[(i - 1) * w..];
            let cur = &mut cur[..w];
            for k in 0..w {
                cur[k] = (cur[k] - self.off * prev[k]) * self.inv_den[i];
            }
        }
        for i in (0..n - 1).rev() {
            let (cur, next) = r.split_at_mut((i + 1) * w);
            let cur = &mut cur[i * w..];
            let next = &next[..w];
            for k in 0..w {
                cur[k] -= self.c_prime[i] * next[k];
            }
        }
    }

    fn solve(&self, r: &mut [f64], w: usize) {
        self.thomas(r, w);
        let n = self.n;
        for k in 0..w {
            let fact = (r[k] + self.beta * r[(n - 1) * w + k] / self.gamma) / self.corr_den;
            if fact != 0.0 {
                for i in 0..n {
                    r[i * w + k] -= fact * self.z[i];
                }
            }
        }
    }
}

/// One implicit diffusion step of fixed size on a fixed torus grid.
#[derive(Clone, Debug)]
pub struct SpatialDiffusion {
    grid: TorusGrid,
    scheme: DiffusionScheme,
    /// `dt / h²` weight of the explicit half (Crank–Nicolson only).
    explicit_c: f64,
    factor: CyclicFactor,
}

impl SpatialDiffusion {
    pub fn new(grid: &TorusGrid, dt: f64, scheme: DiffusionScheme) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let r = dt / grid.spacing().powi(2);
        let (implicit_c, explicit_c) = match scheme {
            DiffusionScheme::CrankNicolson => (0.5 * r, 0.5 * r),
            DiffusionScheme::BackwardEuler => (r, 0.0),
        };
        Ok(Self {
            grid: grid.clone(),
            scheme,
            explicit_c,
            factor: CyclicFactor::new(grid.points_per_dim(), implicit_c),
        })
    }

    pub fn scheme(&self) -> DiffusionScheme {
        self.scheme
    }

    /// Advances `data` (`num_cells × width`, row-major) by one step.
    pub fn apply(&self, data: &mut [f64], width: usize) {
        let m = self.grid.points_per_dim();
        debug_assert_eq!(data.len(), self.grid.num_cells() * width);
        let mut line = vec![0.0; m * width];
        let mut rhs = vec![0.0; m * width];
        let lines: Vec<(usize, usize)> = match self.grid.dim() {
            1 => vec![(0, 1)],
            _ => (0..m).map(|j| (j * m, 1)).collect(),
        };
        for &(base, stride) in &lines {
            self.apply_line(data, width, base, stride, &mut line, &mut rhs);
        }
        if self.grid.dim() == 2 {
            for i in 0..m {
                self.apply_line(data, width, i, m, &mut line, &mut rhs);
            }
        }
    }

    fn apply_line(
        &self,
        data: &mut [f64],
        w: usize,
        base: usize,
        stride: usize,
        line: &mut [f64],
        rhs: &mut [f64],
    ) {
        let m = self.grid.points_per_dim();
        for k in 0..m {
            let row = (base + k * stride) * w;
            line[k * w..(k + 1) * w].copy_from_slice(&data[row..row + w]);
        }
        if self.explicit_c > 0.0 {
            let c = self.explicit_c;
            for k in 0..m {
                let km = (k + m - 1) % m;
                let kp = (k + 1) % m;
                for col in 0..w {
                    let u = line[k * w + col];
                    rhs[k * w + col] =
                        u + c * (line[km * w + col] - 2.0 * u + line[kp * w + col]);
                }
            }
        } else {
            rhs.copy_from_slice(line);
        }
        self.factor.solve(rhs, w);
        for k in 0..m {
            let row = (base + k * stride) * w;
            data[row..row + w].copy_from_slice(&rhs[k * w..(k + 1) * w]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cyclic_matvec(u: &[f64], c: f64) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| (1.0 + 2.0 * c) * u[i] - c * (u[(i + n - 1) % n] + u[(i + 1) % n]))
            .collect()
    }

    #[test]
    fn cyclic_solve_inverts_matvec() {
        for n in [4, 7, 64] {
            let f = CyclicFactor::new(n, 13.7);
            let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) - 4.0).collect();
            let mut r = cyclic_matvec(&x, 13.7);
            f.solve(&mut r, 1);
            for (a, b) in r.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10, "{a} {b}");
            }
        }
    }

    #[test]
    fn conserves_mass_and_decays_modes() {
        let grid = TorusGrid::new(1, 64, 1.0).unwrap();
        let dt = 1e-3;
        let d = SpatialDiffusion::new(&grid, dt, DiffusionScheme::CrankNicolson).unwrap();
        let mut u: Vec<f64> = (0..64)
            .map(|i| 1.0 + 0.3 * (2.0 * PI * grid.center(i)[0]).sin())
            .collect();
        let before: f64 = u.iter().sum();
        for _ in 0..100 {
            d.apply(&mut u, 1);
        }
        let after: f64 = u.iter().sum();
        assert!((before - after).abs() < 1e-10 * before);
        // Mode amplitude decays like exp(-4π² t) up to O(dt² + h²).
        let amp = (u[16] - 1.0) / (2.0 * PI * grid.center(16)[0]).sin();
        let exact = 0.3 * (-4.0 * PI * PI * 0.1f64).exp();
        assert!((amp - exact).abs() < 1e-3 * 0.3, "{amp} {exact}");
    }

    #[test]
    fn constants_are_fixed_and_columns_independent() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let d = SpatialDiffusion::new(&grid, 0.05, DiffusionScheme::BackwardEuler).unwrap();
        let mut u = vec![0.0; 64 * 2];
        for c in 0..64 {
            u[2 * c] = 2.5;
            u[2 * c + 1] = (c % 5) as f64;
        }
        let total: f64 = (0..64).map(|c| u[2 * c + 1]).sum();
        d.apply(&mut u, 2);
        for c in 0..64 {
            assert!((u[2 * c] - 2.5).abs() < 1e-13);
            assert!(u[2 * c + 1] >= 0.0);
        }
        let after: f64 = (0..64).map(|c| u[2 * c + 1]).sum();
        assert!((total - after).abs() < 1e-10);
    }
}
