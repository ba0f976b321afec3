//! Densities on a trait grid, their moments, and exact one-dimensional
//! Wasserstein distances.
//!
//! A [`GridMeasure`] stores density values at cell centers and is read as a
//! piecewise-constant density, so its CDF is piecewise linear. The quantile
//! functions of two such measures are then piecewise linear in `u` and
//! `W_p^p = ∫_0^1 |F⁻¹(u) − G⁻¹(u)|^p du` is evaluated in closed form on the
//! merged breakpoints. Moments, on the other hand, use point-value midpoint
//! quadrature like every other integral in the crate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::TraitGrid;

/// Inputs used as probabilities must have `|mass - 1|` below this.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// A nonnegative density sampled at the cell centers of a [`TraitGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    grid: TraitGrid,
    density: Vec<f64>,
}

/// Mass and the first central moments of a [`GridMeasure`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
    pub fourth_central: f64,
}

/// Normalized Gaussian density of variance `variance` at `y`.
pub fn gaussian_density(y: f64, variance: f64) -> f64 {
    (-0.5 * y * y / variance).exp() / (2.0 * PI * variance).sqrt()
}

/// True when a Gaussian `(mean, variance)` sits closer than six standard
/// deviations to either end of the grid.
pub fn near_boundary(grid: &TraitGrid, mean: f64, variance: f64) -> bool {
    let reach = 6.0 * variance.sqrt();
    mean - reach < grid.y_min() || mean + reach > grid.y_max()
}

impl GridMeasure {
    pub fn new(grid: TraitGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: density.len(),
            });
        }
        if let Some(bad) = density.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param(
                "density",
                format!("entries must be finite and nonnegative, found {bad}"),
            ));
        }
        Ok(Self { grid, density })
    }

    /// Builds a measure without validation; callers guarantee nonnegativity.
    pub(crate) fn from_parts(grid: TraitGrid, density: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), density.len());
        Self { grid, density }
    }

    pub fn from_fn(grid: TraitGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let density = grid.centers().into_iter().map(f).collect();
        Self::new(grid, density)
    }

    /// All mass in cell `j`, as a probability.
    pub fn single_cell(grid: TraitGrid, j: usize) -> Result<Self> {
        if j >= grid.len() {
            return Err(Error::param("cell", format!("{j} is outside the grid")));
        }
        let mut density = vec![0.0; grid.len()];
        density[j] = 1.0 / grid.spacing();
        Ok(Self { grid, density })
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn into_density(self) -> Vec<f64> {
        self.density
    }

    pub fn mass(&self) -> f64 {
        self.grid.spacing() * self.density.iter().sum::<f64>()
    }

    /// Copy rescaled to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(Self {
            grid: self.grid.clone(),
            density: self.density.iter().map(|v| v / m).collect(),
        })
    }

    /// Translates the density by a whole number of cells, filling with zeros.
    pub fn shifted_cells(&self, k: isize) -> Self {
        let m = self.density.len() as isize;
        let density = (0..m)
            .map(|j| {
                let src = j - k;
                if (0..m).contains(&src) {
                    self.density[src as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            density,
        }
    }

    pub fn check_probability(&self) -> Result<()> {
        let m = self.mass();
        if (m - 1.0).abs() > NORMALIZATION_TOL || !m.is_finite() {
            return Err(Error::NotNormalized { mass: m });
        }
        Ok(())
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(moments(self)?.mean)
    }

    /// `∫ f dμ` by midpoint quadrature.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid.spacing();
        self.density
            .iter()
            .enumerate()
            .map(|(j, d)| f(self.grid.center(j)) * d)
            .sum::<f64>()
            * h
    }

    /// `∫ |μ - ν|` on a shared grid.
    pub fn l1_distance(&self, other: &GridMeasure) -> Result<f64> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.spacing())
    }
}

pub(crate) fn ensure_same_grid(a: &TraitGrid, b: &TraitGrid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{a:?} vs {b:?}")))
    }
}

/// Samples `Γ_variance(· − mean)` at the cell centers.
///
/// The result is deliberately not renormalized; its mass defect reflects the
/// truncation of the grid. A warning is logged when the Gaussian comes within
/// six standard deviations of the grid ends.
pub fn gaussian_on_grid(mean: f64, variance: f64, grid: &TraitGrid) -> Result<GridMeasure> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param(
            "variance",
            format!("must be positive, got {variance}"),
        ));
    }
    if !mean.is_finite() {
        return Err(Error::param("mean", "must be finite"));
    }
    if near_boundary(grid, mean, variance) {
        log::warn!(
            "Gaussian (mean {mean}, variance {variance}) is within 6 standard deviations \
             of the trait grid boundary [{}, {}]",
            grid.y_min(),
            grid.y_max()
        );
    }
    let density = grid
        .centers()
        .into_iter()
        .map(|y| gaussian_density(y - mean, variance))
        .collect();
    Ok(GridMeasure::from_parts(grid.clone(), density))
}

/// Mass, mean, central variance, and central fourth moment.
pub fn moments(mu: &GridMeasure) -> Result<MomentSummary> {
    let grid = &mu.grid;
    let h = grid.spacing();
    let mass = mu.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut first = 0.0;
    for (j, d) in mu.density.iter().enumerate() {
        first += grid.center(j) * d;
    }
    let mean = first * h / mass;
    let (mut second, mut fourth) = (0.0, 0.0);
    for (j, d) in mu.density.iter().enumerate() {
        let c = grid.center(j) - mean;
        let c2 = c * c;
        second += c2 * d;
        fourth += c2 * c2 * d;
    }
    Ok(MomentSummary {
        mass,
        mean,
        variance: second * h / mass,
        fourth_central: fourth * h / mass,
    })
}

/// One linear piece of a quantile function: on `[u_lo, u_hi]` the quantile
/// runs linearly from `y_lo` to `y_hi` (a single grid cell).
#[derive(Clone, Copy, Debug)]
struct QuantilePiece {
    u_lo: f64,
    u_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl QuantilePiece {
    fn at(&self, u: f64) -> f64 {
        let s = ((u - self.u_lo) / (self.u_hi - self.u_lo)).clamp(0.0, 1.0);
        self.y_lo + s * (self.y_hi - self.y_lo)
    }
}

fn quantile_pieces(mu: &GridMeasure) -> Vec<QuantilePiece> {
    let grid = &mu.grid;
    let h = grid.spacing();
    let total: f64 = mu.density.iter().sum();
    let last_positive = mu.density.iter().rposition(|d| *d > 0.0);
    let mut pieces = Vec::with_capacity(mu.density.len());
    let mut acc = 0.0;
    let mut u = 0.0;
    for (j, d) in mu.density.iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        acc += d;
        let u_hi = if Some(j) == last_positive {
            1.0
        } else {
            acc / total
        };
        if u_hi > u {
            pieces.push(QuantilePiece {
                u_lo: u,
                u_hi,
                y_lo: grid.edge(j),
                y_hi: grid.edge(j) + h,
            });
            u = u_hi;
        }
    }
    pieces
}

/// Generalized inverse of the piecewise-linear CDF of `mu`.
pub fn quantile(mu: &GridMeasure, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::param("u", format!("must lie in (0, 1), got {u}")));
    }
    mu.check_probability()?;
    let pieces = quantile_pieces(mu);
    let idx = pieces.partition_point(|p| p.u_hi < u);
    let piece = pieces[idx.min(pieces.len() - 1)];
    Ok(piece.at(u))
}

fn check_order(p: u32) -> Result<()> {
    match p {
        1 | 2 | 4 => Ok(()),
        _ => Err(Error::param("p", format!("must be 1, 2 or 4, got {p}"))),
    }
}

/// `∫_0^1 |d0 + (d1 - d0) s|^p ds`.
fn linear_power_integral(d0: f64, d1: f64, p: u32) -> f64 {
    match p {
        1 => {
            if d0 * d1 >= 0.0 {
                0.5 * (d0.abs() + d1.abs())
            } else {
                0.5 * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
            }
        }
        2 => (d0 * d0 + d0 * d1 + d1 * d1) / 3.0,
        4 => {
            let (a2, b2) = (d0 * d0, d1 * d1);
            (a2 * a2 + a2 * d0 * d1 + a2 * b2 + d0 * d1 * b2 + b2 * b2) / 5.0
        }
        _ => unreachable!("order validated by caller"),
    }
}

/// `W_p^p(μ, ν)` from the monotone coupling of the piecewise-linear
/// quantile functions.
pub fn wasserstein_pow(mu: &GridMeasure, nu: &GridMeasure, p: u32) -> Result<f64> {
    check_order(p)?;
    ensure_same_grid(&mu.grid, &nu.grid)?;
    mu.check_probability()?;
    nu.check_probability()?;
    let a = quantile_pieces(mu);
    let b = quantile_pieces(nu);
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let u_next = a[i].u_hi.min(b[j].u_hi);
        if u_next > u {
            let d0 = a[i].at(u) - b[j].at(u);
            let d1 = a[i].at(u_next) - b[j].at(u_next);
            total += (u_next - u) * linear_power_integral(d0, d1, p);
            u = u_next;
        }
        if a[i].u_hi <= u_next {
            i += 1;
        }
        if b[j].u_hi <= u_next {
            j += 1;
        }
    }
    Ok(total)
}

/// Exact `W_p(μ, ν)` for `p ∈ {1, 2, 4}`.
pub fn wasserstein(mu: &GridMeasure, nu: &GridMeasure, p: u32) -> Result<f64> {
    Ok(wasserstein_pow(mu, nu, p)?.powf(1.0 / p as f64))
}

/// Cell masses `h_y μ_j / mass` paired with cell centers.
pub fn atoms(mu: &GridMeasure) -> Vec<(f64, f64)> {
    let total: f64 = mu.density.iter().sum();
    mu.density
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(j, d)| (mu.grid.center(j), d / total))
        .collect()
}

/// Transport cost `Σ π_ab |x_a − y_b|^p` of the north-west-corner plan
/// between two lists of atoms, taken in the order given.
pub fn north_west_corner_cost(a: &[(f64, f64)], b: &[(f64, f64)], p: u32) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut ra = a.first().map_or(0.0, |x| x.1);
    let mut rb = b.first().map_or(0.0, |x| x.1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let moved = ra.min(rb);
        cost += moved * (a[i].0 - b[j].0).abs().powi(p as i32);
        ra -= moved;
        rb -= moved;
        // Rounding residue left on the final atom is dropped.
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    cost
}

/// Reference `W_p`: every cell becomes an atom at its center and the sorted
/// atoms are matched greedily (north-west corner), which is the optimal plan
/// for convex costs on the line. Differs from [`wasserstein`] by `O(h_y)`.
pub fn wasserstein_oracle(mu: &GridMeasure, nu: &GridMeasure, p: u32) -> Result<f64> {
    check_order(p)?;
    ensure_same_grid(&mu.grid, &nu.grid)?;
    mu.check_probability()?;
    nu.check_probability()?;
    let a = atoms(mu);
    let b = atoms(nu);
    Ok(north_west_corner_cost(&a, &b, p).powf(1.0 / p as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TraitGrid {
        TraitGrid::new(-8.0, 8.0, 512).unwrap()
    }

    #[test]
    fn gaussian_mass_and_moments() {
        let g = grid();
        let mu = gaussian_on_grid(0.0, 1.0, &g).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-10);
        let m = moments(&mu).unwrap();
        assert!(m.mean.abs() < 1e-12);
        assert!((m.variance - 1.0).abs() < 1e-10);
        assert!((m.fourth_central - 3.0).abs() < 1e-9);
        let a = 0.7;
        let m = moments(&gaussian_on_grid(2.0, a, &g).unwrap()).unwrap();
        assert!((m.mean - 2.0).abs() < 1e-10);
        assert!((m.variance - a).abs() < 1e-10);
        assert!((m.fourth_central - 3.0 * a * a).abs() < 1e-9);
        assert!(m.fourth_central >= m.variance * m.variance);
    }

    #[test]
    fn gaussian_rejects_bad_variance_and_flags_boundary() {
        let g = grid();
        assert!(gaussian_on_grid(0.0, 0.0, &g).is_err());
        assert!(gaussian_on_grid(0.0, -1.0, &g).is_err());
        assert!(near_boundary(&g, 5.0, 1.0));
        assert!(!near_boundary(&g, 1.0, 1.0));
    }

    #[test]
    fn single_cell_variance_is_tiny() {
        let g = TraitGrid::new(-8.0, 8.0, 256).unwrap();
        let mu = GridMeasure::single_cell(g.clone(), 100).unwrap();
        let m = moments(&mu).unwrap();
        assert!(m.variance <= g.spacing().powi(2) / 12.0 + 1e-14);
        assert!((m.mean - g.center(100)).abs() < 1e-12);
    }

    #[test]
    fn mixture_moments() {
        let g = TraitGrid::new(-12.0, 12.0, 768).unwrap();
        let mu = GridMeasure::from_fn(g, |y| {
            0.5 * gaussian_density(y + 2.0, 1.0) + 0.5 * gaussian_density(y - 2.0, 1.0)
        })
        .unwrap();
        let m = moments(&mu).unwrap();
        assert!(m.mean.abs() < 1e-10);
        assert!((m.variance - 5.0).abs() < 1e-8, "{}", m.variance);
    }

    #[test]
    fn zero_mass_rejected() {
        let g = TraitGrid::new(0.0, 1.0, 16).unwrap();
        let mu = GridMeasure::new(g, vec![0.0; 16]).unwrap();
        assert!(matches!(moments(&mu), Err(Error::ZeroMass)));
    }

    #[test]
    fn quantiles() {
        let g = grid();
        let mu = gaussian_on_grid(0.0, 1.0, &g).unwrap().normalized().unwrap();
        let h = g.spacing();
        assert!(quantile(&mu, 0.5).unwrap().abs() <= h);
        assert!((quantile(&mu, 0.841_344_746_068_543).unwrap() - 1.0).abs() <= 2.0 * h);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..1000 {
            let q = quantile(&mu, k as f64 / 1000.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
        assert!(quantile(&mu, 0.0).is_err());
        assert!(quantile(&mu, 1.0).is_err());
    }

    #[test]
    fn two_atoms_are_one_apart_for_every_order() {
        let g = TraitGrid::new(-1.0 / 64.0, 2.0 - 1.0 / 64.0, 64).unwrap();
        assert!(g.center(0).abs() < 1e-15);
        assert!((g.center(32) - 1.0).abs() < 1e-15);
        let mu = GridMeasure::single_cell(g.clone(), 0).unwrap();
        let nu = GridMeasure::single_cell(g, 32).unwrap();
        for p in [1, 2, 4] {
            assert!((wasserstein(&mu, &nu, p).unwrap() - 1.0).abs() < 1e-12);
            assert!((wasserstein_oracle(&mu, &nu, p).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(wasserstein(&mu, &mu, p).unwrap(), 0.0);
            assert_eq!(wasserstein_oracle(&mu, &mu, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_gaussians() {
        let g = TraitGrid::new(-10.0, 12.0, 704).unwrap();
        // 2 is a whole number of cells (h = 1/32).
        let mu = gaussian_on_grid(0.0, 1.0, &g).unwrap().normalized().unwrap();
        let nu = mu.shifted_cells(64);
        assert!((wasserstein(&mu, &nu, 2).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_vs_stretched_uniform() {
        let g = TraitGrid::new(0.0, 2.0, 64).unwrap();
        let mu = GridMeasure::from_fn(g.clone(), |y| if y < 1.0 { 1.0 } else { 0.0 }).unwrap();
        let nu = GridMeasure::from_fn(g, |_| 0.5).unwrap();
        let w2 = wasserstein(&mu, &nu, 2).unwrap();
        assert!((w2 - 1.0 / 3f64.sqrt()).abs() < 1e-6);
        // ∫_0^1 u du = 1/2 and ∫_0^1 u^4 du = 1/5.
        assert!((wasserstein(&mu, &nu, 1).unwrap() - 0.5).abs() < 1e-9);
        assert!((wasserstein(&mu, &nu, 4).unwrap() - 0.2f64.powf(0.25)).abs() < 1e-9);
    }

    #[test]
    fn distance_to_dirac_is_pth_moment() {
        let g = TraitGrid::new(-6.0, 6.0, 384).unwrap();
        let mu = gaussian_on_grid(0.3, 0.8, &g).unwrap().normalized().unwrap();
        let j = 200;
        let ybar = g.center(j);
        let delta = GridMeasure::single_cell(g.clone(), j).unwrap();
        let h = g.spacing();
        for p in [1u32, 2, 4] {
            let lhs = wasserstein_pow(&mu, &delta, p).unwrap();
            let rhs = mu.expect(|y| (y - ybar).abs().powi(p as i32));
            // The grid Dirac occupies a whole cell of width h.
            assert!((lhs - rhs).abs() < 4.0 * h * rhs.max(1.0), "p={p} {lhs} {rhs}");
            let oracle = wasserstein_oracle(&mu, &delta, p).unwrap().powi(p as i32);
            assert!((oracle - rhs).abs() < 1e-9, "p={p} {oracle} {rhs}");
        }
    }

    #[test]
    fn rejects_unnormalized_and_bad_order() {
        let g = grid();
        let mu = gaussian_on_grid(0.0, 1.0, &g).unwrap();
        let twice = GridMeasure::new(g.clone(), mu.density().iter().map(|v| 2.0 * v).collect())
            .unwrap();
        assert!(matches!(
            wasserstein(&mu, &twice, 2),
            Err(Error::NotNormalized { .. })
        ));
        assert!(wasserstein(&mu, &mu, 3).is_err());
        let other = gaussian_on_grid(0.0, 1.0, &TraitGrid::new(-8.0, 8.0, 256).unwrap()).unwrap();
        assert!(matches!(
            wasserstein(&mu, &other, 2),
            Err(Error::GridMismatch(_))
        ));
    }
}
