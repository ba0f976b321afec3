//! Seeded random probability measures for property checks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grids::TraitGrid;
use crate::measures::{gaussian_density, GridMeasure};

/// Shape limits for [`random_measure`].
#[derive(Clone, Copy, Debug)]
pub struct MeasureShape {
    /// Component means are drawn from `[-mean_range, mean_range]`.
    pub mean_range: f64,
    pub min_variance: f64,
    pub max_variance: f64,
    pub max_components: usize,
    /// Probability of adding a flat block component.
    pub block_probability: f64,
}

impl Default for MeasureShape {
    fn default() -> Self {
        Self {
            mean_range: 2.0,
            min_variance: 0.2,
            max_variance: 1.5,
            max_components: 3,
            block_probability: 0.3,
        }
    }
}

impl MeasureShape {
    /// Half-width a trait grid needs around 0 for the sampled measures (and
    /// their images under `T` with parameter `a`) to have negligible tails.
    pub fn support_half_width(&self, a: f64) -> f64 {
        self.mean_range + 2.0 + 10.0 * self.max_variance.max(a).sqrt()
    }
}

/// A normalized mixture of Gaussians, possibly with one flat block.
pub fn random_measure<R: Rng>(grid: &TraitGrid, shape: &MeasureShape, rng: &mut R) -> Result<GridMeasure> {
    let k = rng.random_range(1..=shape.max_components.max(1));
    let comps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.1..1.0),
                rng.random_range(-shape.mean_range..=shape.mean_range),
                rng.random_range(shape.min_variance..=shape.max_variance),
            )
        })
        .collect();
    let block = if rng.random_bool(shape.block_probability) {
        let lo = rng.random_range(-shape.mean_range..shape.mean_range);
        let width = rng.random_range(0.5..2.0);
        Some((rng.random_range(0.1..0.5), lo, lo + width))
    } else {
        None
    };
    let density = grid
        .centers()
        .into_iter()
        .map(|y| {
            let mut v: f64 = comps.iter().map(|(w, m, s2)| w * gaussian_density(y - m, *s2)).sum();
            if let Some((w, lo, hi)) = block {
                if y >= lo && y < hi {
                    v += w / (hi - lo);
                }
            }
            v
        })
        .collect();
    GridMeasure::new(grid.clone(), density)?.normalized()
}

/// `ν_λ ∝ ν e^{λ y}` with `λ` chosen so that the mean of `ν_λ` is `target`.
pub fn tilt_to_mean(nu: &GridMeasure, target: f64) -> Result<GridMeasure> {
    let ys = nu.grid().centers();
    let d = nu.density();
    let tilted = |lambda: f64| -> (Vec<f64>, f64, f64) {
        // Shift the exponent for stability.
        let shift = ys
            .iter()
            .zip(d)
            .filter(|(_, v)| **v > 0.0)
            .map(|(y, _)| lambda * y)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = ys.iter().zip(d).map(|(y, v)| v * (lambda * y - shift).exp()).collect();
        let s0: f64 = w.iter().sum();
        let s1: f64 = w.iter().zip(&ys).map(|(w, y)| w * y).sum();
        let s2: f64 = w.iter().zip(&ys).map(|(w, y)| w * y * y).sum();
        let mean = s1 / s0;
        (w, mean, s2 / s0 - mean * mean)
    };
    let mut lambda = 0.0;
    for _ in 0..100 {
        let (w, mean, var) = tilted(lambda);
        let gap = mean - target;
        if gap.abs() <= 1e-13 {
            return GridMeasure::new(nu.grid().clone(), w)?.normalized();
        }
        if !(var > 0.0) {
            break;
        }
        // The mean is increasing in λ with derivative equal to the variance.
        lambda -= (gap / var).clamp(-5.0, 5.0);
    }
    Err(Error::param(
        "target",
        format!("could not tilt measure to mean {target}"),
    ))
}
