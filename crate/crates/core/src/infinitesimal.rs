//! The infinitesimal reproduction operator
//!
//! ```text
//! T(μ)(y) = ∫∫ Γ_{A/2}(y − (y₁ + y₂)/2) μ(y₁) μ(y₂) dy₁ dy₂
//! ```
//!
//! An offspring's trait is the midparent value plus Gaussian segregation
//! noise of variance `A/2`. On a cell-centered grid with spacing `h` every
//! midparent value `(y_a + y_b)/2` falls on the half-spacing lattice
//! `y_min + (s + 1) h/2` with `s = a + b`, so the fast path first builds the
//! midparent masses `q_s = h² Σ_{a+b=s} μ_a μ_b` (a discrete self-convolution)
//! and then convolves them with the kernel sampled on that half-spacing
//! lattice. No interpolation is involved and nothing wraps around: mass that
//! the kernel pushes beyond the grid ends is lost and shows up as a mass
//! defect.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grids::TraitGrid;
use crate::measures::{self, ensure_same_grid, gaussian_density, GridMeasure};

/// Precomputed segregation kernel `Γ_{A/2}` for one trait grid.
#[derive(Clone, Debug)]
pub struct ReproductionKernel {
    a: f64,
    grid: TraitGrid,
    /// `Γ_{A/2}(k h/2)` for `k = -(2M-2) ..= 2M-2`, stored at `k + 2M - 2`.
    table: Vec<f64>,
    scale: f64,
}

impl ReproductionKernel {
    pub fn new(a: f64, grid: &TraitGrid) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("A", format!("must be positive, got {a}")));
        }
        let m = grid.len() as isize;
        let half = 0.5 * grid.spacing();
        let table = (-(2 * m - 2)..=(2 * m - 2))
            .map(|k| gaussian_density(k as f64 * half, 0.5 * a))
            .collect();
        Ok(Self {
            a,
            grid: grid.clone(),
            table,
            scale: 1.0,
        })
    }

    /// Fault-injection hook: multiplies every kernel sample by `scale`, which
    /// breaks mass conservation when `scale != 1`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.table.iter_mut().for_each(|v| *v *= scale / self.scale);
        self.scale = scale;
        self
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    /// `Γ_{A/2}(k h/2)`.
    #[inline]
    fn at(&self, k: isize) -> f64 {
        let m = self.grid.len() as isize;
        self.table[(k + 2 * m - 2) as usize]
    }

    /// Kernel mass captured on grid `y_j` for a midparent at index `s`.
    pub fn kernel_mass(&self, s: usize) -> f64 {
        let m = self.grid.len();
        (0..m).map(|j| self.at(2 * j as isize - s as isize)).sum::<f64>() * self.grid.spacing()
    }

    fn check_input(&self, mu: &GridMeasure) -> Result<()> {
        ensure_same_grid(&self.grid, mu.grid())?;
        mu.check_probability()
    }

    /// Fast path on a raw density slice; writes `T(μ)` into `out`.
    ///
    /// `scratch` must hold at least `2M - 1` values. Summation order is
    /// fixed, so results are reproducible bit for bit.
    pub fn apply_into(&self, density: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let m = self.grid.len();
        let h = self.grid.spacing();
        debug_assert_eq!(density.len(), m);
        debug_assert_eq!(out.len(), m);
        let q = &mut scratch[..2 * m - 1];
        q.iter_mut().for_each(|v| *v = 0.0);
        // Midparent masses, exploiting the symmetry of the self-convolution.
        let h2 = h * h;
        for a in 0..m {
            let da = density[a];
            if da == 0.0 {
                continue;
            }
            q[2 * a] += h2 * da * da;
            let twice = 2.0 * h2 * da;
            for b in (a + 1)..m {
                q[a + b] += twice * density[b];
            }
        }
        let offset = 2 * m - 2;
        for (j, o) in out.iter_mut().enumerate() {
            let base = offset + 2 * j;
            let mut acc = 0.0;
            for (s, qs) in q.iter().enumerate() {
                acc += self.table[base - s] * qs;
            }
            *o = acc;
        }
    }
}

/// Reference `T(μ)`: the direct double sum over parent pairs for every
/// offspring cell, `O(M³)`.
pub fn apply_t_oracle(mu: &GridMeasure, kernel: &ReproductionKernel) -> Result<GridMeasure> {
    kernel.check_input(mu)?;
    let grid = mu.grid();
    let m = grid.len();
    let h = grid.spacing();
    let d = mu.density();
    let mut out = vec![0.0; m];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (a, da) in d.iter().enumerate() {
            let mut inner = 0.0;
            for (b, db) in d.iter().enumerate() {
                inner += kernel.at(2 * j as isize - (a + b) as isize) * db;
            }
            acc += da * inner;
        }
        *o = h * h * acc;
    }
    Ok(GridMeasure::from_parts(grid.clone(), out))
}

/// `T(μ)` via midparent self-convolution followed by the kernel convolution,
/// `O(M²)`.
pub fn apply_t_fast(mu: &GridMeasure, kernel: &ReproductionKernel) -> Result<GridMeasure> {
    kernel.check_input(mu)?;
    let m = mu.grid().len();
    let mut scratch = vec![0.0; 2 * m - 1];
    let mut out = vec![0.0; m];
    kernel.apply_into(mu.density(), &mut scratch, &mut out);
    Ok(GridMeasure::from_parts(mu.grid().clone(), out))
}

/// `W_p(Tμ, Tν) / W_p(μ, ν)` for equal-mean inputs, `p ∈ {2, 4}`.
pub fn contraction_ratio(
    mu: &GridMeasure,
    nu: &GridMeasure,
    kernel: &ReproductionKernel,
    p: u32,
) -> Result<f64> {
    if p != 2 && p != 4 {
        return Err(Error::param("p", format!("must be 2 or 4, got {p}")));
    }
    let (m_mu, m_nu) = (mu.mean()?, nu.mean()?);
    if (m_mu - m_nu).abs() > 1e-9 {
        return Err(Error::MeanMismatch(m_mu, m_nu));
    }
    let before = measures::wasserstein(mu, nu, p)?;
    if before == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let t_mu = apply_t_fast(mu, kernel)?;
    let t_nu = apply_t_fast(nu, kernel)?;
    Ok(measures::wasserstein(&t_mu, &t_nu, p)? / before)
}

/// Outcome of pushing one measure through `T`, for property reports.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConservationCheck {
    pub mass_error: f64,
    pub mean_error: f64,
    pub variance_map_error: f64,
    pub min_value: f64,
}

pub fn conservation_check(mu: &GridMeasure, kernel: &ReproductionKernel) -> Result<ConservationCheck> {
    let before = measures::moments(mu)?;
    let t_mu = apply_t_fast(mu, kernel)?;
    let after = measures::moments(&t_mu)?;
    Ok(ConservationCheck {
        mass_error: (after.mass - before.mass).abs(),
        mean_error: (after.mean - before.mean).abs(),
        variance_map_error: (after.variance - (0.5 * before.variance + 0.5 * kernel.a())).abs(),
        min_value: t_mu.density().iter().copied().fold(f64::INFINITY, f64::min),
    })
}
