//! Observables that quantify how close a kinetic run is to its macroscopic
//! limit: distance of the trait profiles to the local Gaussian, residuals of
//! the kinetic moments in the macroscopic equations, Hölder quotients of
//! space-time fields, and power-law rate fits across `γ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::grids::TorusGrid;
use crate::kbm::KbmTrajectory;
use crate::measures::{gaussian_density, wasserstein, GridMeasure};
use crate::sim::{KineticState, SimTrajectory, N_FLOOR};

/// Default cap on the number of sampled pairs in [`holder_quotient`].
pub const HOLDER_PAIR_CAP: usize = 1_000_000;

/// Per-cell `W₂(ñ(x, ·), Γ_A(· − Z(x)))`.
pub fn gaussian_deviation_profile(state: &KineticState, a: f64) -> Result<Vec<f64>> {
    if !(a > 0.0) {
        return Err(Error::param("A", format!("must be positive, got {a}")));
    }
    let traits = state.traits();
    let h = traits.spacing();
    let ys = traits.centers();
    (0..state.torus().num_cells())
        .into_par_iter()
        .map(|c| {
            let col = state.column(c);
            let sum: f64 = col.iter().sum();
            let mass = sum * h;
            if !(mass >= N_FLOOR) {
                return Err(Error::Invariant {
                    t: state.t,
                    what: format!("population size N = {mass} below floor at cell {c}"),
                });
            }
            let z = ys.iter().zip(col).map(|(y, v)| y * v).sum::<f64>() / sum;
            let profile = GridMeasure::from_parts(traits.clone(), col.iter().map(|v| v / mass).collect());
            let target: Vec<f64> = ys.iter().map(|y| gaussian_density(y - z, a)).collect();
            let tmass = target.iter().sum::<f64>() * h;
            let target = GridMeasure::from_parts(traits.clone(), target.into_iter().map(|v| v / tmass).collect());
            wasserstein(&profile, &target, 2)
        })
        .collect()
}

/// `max_x W₂(ñ(x, ·), Γ_A(· − Z(x)))`.
pub fn gaussian_deviation(state: &KineticState, a: f64) -> Result<f64> {
    Ok(gaussian_deviation_profile(state, a)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub t: f64,
    pub gauss_dev: f64,
    pub v_max: f64,
    pub mass_leak: f64,
}

/// `t_burn = max(5 dt, γ^{-1/2})`.
pub fn burn_in(dt: f64, gamma: f64) -> f64 {
    let relax = if gamma > 0.0 {
        gamma.powf(-0.5)
    } else {
        f64::INFINITY
    };
    (5.0 * dt).max(relax)
}

/// One snapshot of macroscopic fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFrame {
    pub t: f64,
    pub n: Vec<f64>,
    pub z: Vec<f64>,
}

/// Time series of `(N, Z)` on a torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSeries {
    pub torus: TorusGrid,
    pub frames: Vec<MacroFrame>,
}

impl MacroSeries {
    pub fn from_sim(traj: &SimTrajectory) -> Self {
        Self {
            torus: traj.final_state.torus().clone(),
            frames: traj
                .snapshots
                .iter()
                .map(|s| MacroFrame {
                    t: s.t,
                    n: s.moments.n.clone(),
                    z: s.moments.z.clone(),
                })
                .collect(),
        }
    }

    pub fn from_kbm(traj: &KbmTrajectory) -> Self {
        Self {
            torus: traj.last().torus().clone(),
            frames: traj
                .snapshots
                .iter()
                .map(|m| MacroFrame {
                    t: m.t,
                    n: m.n().to_vec(),
                    z: m.z(),
                })
                .collect(),
        }
    }
}

/// `φ_N` and `φ_Z` at the interior snapshot times.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub times: Vec<f64>,
    pub phi_n: Vec<Vec<f64>>,
    pub phi_z: Vec<Vec<f64>>,
    /// Largest snapshot spacing used by the time differences; the residuals
    /// carry an `O(cadence² + h_x²)` differencing error.
    pub cadence: f64,
}

impl Residuals {
    /// `sup_{t ≥ t_burn} (‖φ_N(t)‖_∞ + ‖φ_Z(t)‖_∞)`, or 0 if no time qualifies.
    pub fn sup_after(&self, t_burn: f64) -> f64 {
        self.norms_after(t_burn)
            .into_iter()
            .map(|(n, z)| n + z)
            .fold(0.0, f64::max)
    }

    /// `(‖φ_N(t)‖_∞, ‖φ_Z(t)‖_∞)` for every time `t ≥ t_burn`.
    pub fn norms_after(&self, t_burn: f64) -> Vec<(f64, f64)> {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        self.times
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= t_burn)
            .map(|(k, _)| (sup(&self.phi_n[k]), sup(&self.phi_z[k])))
            .collect()
    }
}

fn laplacian(torus: &TorusGrid, f: &[f64], c: usize) -> f64 {
    let h2 = torus.spacing().powi(2);
    (0..torus.dim())
        .map(|axis| {
            (f[torus.neighbor(c, axis, -1)] - 2.0 * f[c] + f[torus.neighbor(c, axis, 1)]) / h2
        })
        .sum()
}

fn gradient(torus: &TorusGrid, f: &[f64], c: usize) -> [f64; 2] {
    let h = torus.spacing();
    let mut g = [0.0; 2];
    for (axis, ga) in g.iter_mut().enumerate().take(torus.dim()) {
        *ga = (f[torus.neighbor(c, axis, 1)] - f[torus.neighbor(c, axis, -1)]) / (2.0 * h);
    }
    g
}

/// Residuals of a moment trajectory in the macroscopic equations:
///
/// ```text
/// φ_N = (∂_t N − Δ N)/N − 1 + ½(Z − y_opt)² + N
/// φ_Z = ∂_t Z − Δ Z − 2 ∇N·∇Z / N + A (Z − y_opt)
/// ```
///
/// with three-point time differences over the snapshot times and centered
/// periodic differences in space. Reported at every snapshot that has a
/// neighbor on both sides.
pub fn kbm_residuals(series: &MacroSeries, env: &Environment, a: f64) -> Result<Residuals> {
    let frames = &series.frames;
    if frames.len() < 3 {
        return Err(Error::param(
            "snapshots",
            format!("residuals need at least 3 snapshots, got {}", frames.len()),
        ));
    }
    let torus = &series.torus;
    let cells = torus.num_cells();
    let period = torus.period();
    for f in frames {
        if f.n.len() != cells || f.z.len() != cells {
            return Err(Error::LengthMismatch {
                expected: cells,
                got: f.n.len().min(f.z.len()),
            });
        }
        if let Some(c) = f.n.iter().position(|v| !(*v >= N_FLOOR)) {
            return Err(Error::Invariant {
                t: f.t,
                what: format!("population size N = {} below floor at cell {c}", f.n[c]),
            });
        }
    }
    let mut out = Residuals {
        times: Vec::new(),
        phi_n: Vec::new(),
        phi_z: Vec::new(),
        cadence: 0.0,
    };
    for k in 1..frames.len() - 1 {
        let (prev, cur, next) = (&frames[k - 1], &frames[k], &frames[k + 1]);
        let h1 = cur.t - prev.t;
        let h2 = next.t - cur.t;
        if !(h1 > 0.0 && h2 > 0.0) {
            return Err(Error::param("snapshots", "snapshot times must increase"));
        }
        out.cadence = out.cadence.max(h1).max(h2);
        let wm = -h2 / (h1 * (h1 + h2));
        let w0 = (h2 - h1) / (h1 * h2);
        let wp = h1 / (h2 * (h1 + h2));
        let ddt = |p: f64, c: f64, n: f64| wm * p + w0 * c + wp * n;
        let mut phi_n = Vec::with_capacity(cells);
        let mut phi_z = Vec::with_capacity(cells);
        for c in 0..cells {
            let n = cur.n[c];
            let z = cur.z[c];
            let yopt = env.eval(cur.t, &torus.center(c), period);
            let dn = ddt(prev.n[c], n, next.n[c]);
            let dz = ddt(prev.z[c], z, next.z[c]);
            let gn = gradient(torus, &cur.n, c);
            let gz = gradient(torus, &cur.z, c);
            let d = z - yopt;
            phi_n.push((dn - laplacian(torus, &cur.n, c)) / n - 1.0 + 0.5 * d * d + n);
            phi_z.push(
                dz - laplacian(torus, &cur.z, c) - 2.0 * (gn[0] * gz[0] + gn[1] * gz[1]) / n
                    + a * d,
            );
        }
        out.times.push(cur.t);
        out.phi_n.push(phi_n);
        out.phi_z.push(phi_z);
    }
    Ok(out)
}

/// A scalar field sampled on `times × torus cells`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub torus: TorusGrid,
    pub times: Vec<f64>,
    /// `values[k][c]` is the field at `times[k]` and cell `c`.
    pub values: Vec<Vec<f64>>,
}

/// `max |f(t,x) − f(s,y)| / (|t − s| + d(x, y))^θ` over pairs of distinct
/// lattice points. All pairs are used when there are at most `cap` of them;
/// otherwise `cap` pairs are drawn uniformly with a seeded generator. Draws
/// for a larger cap extend those for a smaller one, so the value is monotone
/// in `cap` for a fixed seed.
pub fn holder_quotient(field: &SpaceTimeField, theta: f64, cap: usize, seed: u64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", format!("must lie in (0, 1), got {theta}")));
    }
    let cells = field.torus.num_cells();
    if field.values.len() != field.times.len() {
        return Err(Error::LengthMismatch {
            expected: field.times.len(),
            got: field.values.len(),
        });
    }
    if let Some(row) = field.values.iter().find(|r| r.len() != cells) {
        return Err(Error::LengthMismatch {
            expected: cells,
            got: row.len(),
        });
    }
    let points = cells * field.times.len();
    let quotient = |i: usize, j: usize| {
        let (ki, ci) = (i / cells, i % cells);
        let (kj, cj) = (j / cells, j % cells);
        let dist = (field.times[ki] - field.times[kj]).abs() + field.torus.distance(ci, cj);
        if dist == 0.0 {
            return 0.0;
        }
        (field.values[ki][ci] - field.values[kj][cj]).abs() / dist.powf(theta)
    };
    let total_pairs = points.saturating_mul(points.saturating_sub(1)) / 2;
    if total_pairs <= cap {
        let mut best = 0.0f64;
        for i in 0..points {
            for j in i + 1..points {
                best = best.max(quotient(i, j));
            }
        }
        return Ok(best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..cap {
        let i = rng.random_range(0..points);
        let mut j = rng.random_range(0..points - 1);
        if j >= i {
            j += 1;
        }
        best = best.max(quotient(i, j));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub theta: f64,
    pub c: f64,
    pub r2: f64,
}

/// Least squares for `log e = log c − θ log γ`.
pub fn fit_power_law(gammas: &[f64], errors: &[f64]) -> Result<PowerLawFit> {
    if gammas.len() != errors.len() {
        return Err(Error::LengthMismatch {
            expected: gammas.len(),
            got: errors.len(),
        });
    }
    if gammas.len() < 3 {
        return Err(Error::param(
            "gamma_list",
            format!("need ≥ 3 points for a rate fit, got {}", gammas.len()),
        ));
    }
    if gammas.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("errors", "rate fit needs positive finite values"));
    }
    let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::param("gamma_list", "rate fit needs distinct γ values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let scale = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    let r2 = if ss_res <= 1e-24 * scale * scale * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit {
        theta: -slope,
        c: intercept.exp(),
        r2,
    })
}

/// Error measures of one member of a `γ` sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepErrors {
    pub gamma: f64,
    /// `sup_{t ≥ t_burn} max_x W₂(ñ, Γ_A(· − Z))`
    pub gauss_dev_sup: f64,
    /// Same supremum including the burn-in interval.
    pub gauss_dev_sup_all: f64,
    /// `sup_{t ≥ t_burn} ‖N_sim − N_kbm‖_∞`
    pub macro_err_n: f64,
    /// `sup_{t ≥ t_burn} ‖Z_sim − Z_kbm‖_∞`
    pub macro_err_z: f64,
    /// `sup_{t ≥ t_burn} ‖φ_N‖_∞`
    pub resid_n: f64,
    /// `sup_{t ≥ t_burn} ‖φ_Z‖_∞`
    pub resid_z: f64,
    /// `max_{t, x} V`
    pub v_max: f64,
    pub t_burn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub gammas: Vec<f64>,
    pub errors: Vec<SweepErrors>,
    /// Rate fit per error family; families with a zero entry are skipped.
    pub fits: BTreeMap<String, PowerLawFit>,
}

type Family = (&'static str, fn(&SweepErrors) -> f64);

impl SweepReport {
    /// Sorts members by `γ`, checks the sweep shape, and fits every family.
    pub fn assemble(mut errors: Vec<SweepErrors>) -> Result<Self> {
        errors.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        if errors.len() < 3 {
            return Err(Error::param(
                "gamma_list",
                format!("need ≥ 3 γ values, got {}", errors.len()),
            ));
        }
        if errors.windows(2).any(|w| !(w[0].gamma < w[1].gamma)) {
            return Err(Error::param("gamma_list", "γ values must be distinct"));
        }
        let gammas: Vec<f64> = errors.iter().map(|e| e.gamma).collect();
        let families: [Family; 5] = [
            ("gauss_dev", |e| e.gauss_dev_sup),
            ("macro_err_n", |e| e.macro_err_n),
            ("macro_err_z", |e| e.macro_err_z),
            ("resid_n", |e| e.resid_n),
            ("resid_z", |e| e.resid_z),
        ];
        let mut fits = BTreeMap::new();
        for (name, get) in families {
            let vals: Vec<f64> = errors.iter().map(get).collect();
            if vals.iter().all(|v| *v > 0.0 && v.is_finite()) {
                fits.insert(name.to_string(), fit_power_law(&gammas, &vals)?);
            }
        }
        Ok(Self {
            gammas,
            errors,
            fits,
        })
    }
}
