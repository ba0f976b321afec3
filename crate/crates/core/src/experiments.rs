//! Experiment drivers behind the command-line subcommands. Each takes a
//! resolved [`RunConfig`] and, optionally, an output directory.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::diagnostics::{
    burn_in, gaussian_deviation, kbm_residuals, DeviationRecord, MacroSeries, SweepErrors, SweepReport,
};
use crate::error::{Error, Result};
use crate::grids::TraitGrid;
use crate::infinitesimal::{apply_t_fast, apply_t_oracle, conservation_check, contraction_ratio, ReproductionKernel};
use crate::kbm::{run_kbm_with, KbmTrajectory, MacroState};
use crate::measures::{atoms, gaussian_on_grid, north_west_corner_cost, wasserstein, wasserstein_oracle, wasserstein_pow, GridMeasure};
use crate::output::{header, write_csv, write_json, write_snapshot};
use crate::sampling::{random_measure, tilt_to_mean, MeasureShape};
use crate::sim::{init_state, run_sim, KineticState, SimObserver, SimSnapshot, SimTrajectory};

/// Records the distance to the local Gaussian and the fourth-moment maximum
/// at every snapshot.
pub struct DeviationObserver {
    pub a: f64,
    pub records: Vec<DeviationRecord>,
}

impl SimObserver for DeviationObserver {
    fn observe(&mut self, state: &KineticState, snap: &SimSnapshot) -> Result<()> {
        self.records.push(DeviationRecord {
            t: snap.t,
            gauss_dev: gaussian_deviation(state, self.a)?,
            v_max: snap.moments.v.iter().copied().fold(0.0, f64::max),
            mass_leak: snap.leak_rate,
        });
        Ok(())
    }
}

/// Kinetic run with deviation records at every snapshot.
pub fn run_sim_recorded(cfg: &RunConfig, gamma: f64) -> Result<(SimTrajectory, Vec<DeviationRecord>)> {
    let state0 = init_state(&cfg.torus(), &cfg.traits(), &cfg.initial_data())?;
    let mut obs = DeviationObserver {
        a: cfg.a,
        records: Vec::new(),
    };
    let traj = run_sim(state0, &cfg.sim_params(gamma), &cfg.env, cfg.t_end, &mut [&mut obs])?;
    Ok((traj, obs.records))
}

/// Macroscopic run on the same time lattice as the kinetic one.
pub fn run_kbm_for(cfg: &RunConfig) -> Result<KbmTrajectory> {
    let m0 = MacroState::from_profiles(&cfg.torus(), &cfg.n0, &cfg.z0)?;
    run_kbm_with(m0, &cfg.env, cfg.a, cfg.dt(), cfg.t_end, cfg.snapshot_every(), cfg.diffusion)
}

fn cell_coords(cfg: &RunConfig) -> Vec<[f64; 2]> {
    let torus = cfg.torus();
    (0..torus.num_cells()).map(|c| torus.center(c)).collect()
}

fn snapshot_name(base: &str, text: bool) -> String {
    format!("{base}.{}", if text { "csv" } else { "bin" })
}

#[derive(Clone, Debug, Serialize)]
pub struct SimSummary {
    pub gamma: f64,
    pub steps: usize,
    pub final_t: f64,
    pub max_leak_rate: f64,
    pub max_diffusion_mass_error: f64,
    pub min_value: f64,
    pub gauss_dev_final: f64,
    pub v_max: f64,
}

pub fn simulate_sim(cfg: &RunConfig, out: Option<&Path>) -> Result<SimSummary> {
    let gamma = cfg.single_gamma()?;
    let (traj, devs) = run_sim_recorded(cfg, gamma)?;
    let summary = SimSummary {
        gamma,
        steps: traj.stats.steps,
        final_t: traj.final_state.t,
        max_leak_rate: traj.stats.max_leak_rate,
        max_diffusion_mass_error: traj.stats.max_diffusion_mass_error,
        min_value: traj.stats.min_value,
        gauss_dev_final: devs.last().map_or(0.0, |d| d.gauss_dev),
        v_max: devs.iter().map(|d| d.v_max).fold(0.0, f64::max),
    };
    if let Some(dir) = out {
        let fmin = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rows: Vec<Vec<f64>> = traj
            .snapshots
            .iter()
            .zip(&devs)
            .map(|(s, d)| {
                let m = &s.moments;
                vec![
                    s.t,
                    fmin(&m.n),
                    fmax(&m.n),
                    fmin(&m.z),
                    fmax(&m.z),
                    d.v_max,
                    d.gauss_dev,
                    s.leak_rate,
                    s.min_value,
                ]
            })
            .collect();
        let h = header("sim-timeseries", cfg, json!({ "gamma": gamma }))?;
        write_csv(
            &dir.join("sim_timeseries.csv"),
            &h,
            &["t", "N_min", "N_max", "Z_min", "Z_max", "v_max", "gauss_dev", "leak_rate", "min_value"],
            &rows,
        )?;
        let coords = cell_coords(cfg);
        let mut rows = Vec::new();
        for s in &traj.snapshots {
            for (c, x) in coords.iter().enumerate() {
                rows.push(vec![s.t, c as f64, x[0], x[1], s.moments.n[c], s.moments.z[c], s.moments.v[c]]);
            }
        }
        let h = header("sim-fields", cfg, json!({ "gamma": gamma }))?;
        write_csv(&dir.join("sim_fields.csv"), &h, &["t", "cell", "x1", "x2", "N", "Z", "V"], &rows)?;
        let fin = &traj.final_state;
        let h = header(
            "sim-snapshot",
            cfg,
            json!({
                "gamma": gamma,
                "t": fin.t,
                "rows": fin.torus().num_cells(),
                "cols": fin.traits().len(),
                "torus": fin.torus(),
                "traits": fin.traits(),
            }),
        )?;
        write_snapshot(
            &dir.join(snapshot_name("sim_final", cfg.text)),
            &h,
            fin.traits().len(),
            fin.density(),
            cfg.text,
        )?;
        let h = header("sim-summary", cfg, json!({}))?;
        write_json(&dir.join("sim_summary.json"), &h, &summary)?;
    }
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct KbmSummary {
    pub steps: usize,
    pub final_t: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

pub fn simulate_kbm(cfg: &RunConfig, out: Option<&Path>) -> Result<KbmSummary> {
    let traj = run_kbm_for(cfg)?;
    let last = traj.last();
    let z = last.z();
    let summary = KbmSummary {
        steps: crate::sim::schedule(0.0, cfg.t_end, cfg.dt())?,
        final_t: last.t,
        n_min: last.n().iter().copied().fold(f64::INFINITY, f64::min),
        n_max: last.n().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        z_min: z.iter().copied().fold(f64::INFINITY, f64::min),
        z_max: z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    if let Some(dir) = out {
        let coords = cell_coords(cfg);
        let mut rows = Vec::new();
        for m in &traj.snapshots {
            let z = m.z();
            for (c, x) in coords.iter().enumerate() {
                rows.push(vec![m.t, c as f64, x[0], x[1], m.n()[c], m.y()[c], z[c]]);
            }
        }
        let h = header("kbm-fields", cfg, json!({}))?;
        write_csv(&dir.join("kbm_fields.csv"), &h, &["t", "cell", "x1", "x2", "N", "Y", "Z"], &rows)?;
        let data: Vec<f64> = (0..coords.len()).flat_map(|c| [last.n()[c], last.y()[c], z[c]]).collect();
        let h = header(
            "kbm-snapshot",
            cfg,
            json!({
                "t": last.t,
                "rows": coords.len(),
                "cols": 3,
                "columns": ["N", "Y", "Z"],
                "torus": last.torus(),
            }),
        )?;
        write_snapshot(&dir.join(snapshot_name("kbm_final", cfg.text)), &h, 3, &data, cfg.text)?;
        let h = header("kbm-summary", cfg, json!({}))?;
        write_json(&dir.join("kbm_summary.json"), &h, &summary)?;
    }
    Ok(summary)
}

/// Kinetic-versus-macroscopic errors at one snapshot time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRecord {
    pub t: f64,
    pub err_n: f64,
    pub err_z: f64,
    pub gauss_dev: f64,
    pub v_max: f64,
    pub mass_leak: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub records: Vec<CompareRecord>,
    pub errors: SweepErrors,
    /// Snapshot spacing used by the residual time differences.
    pub residual_cadence: f64,
    /// `(t, ‖φ_N‖_∞, ‖φ_Z‖_∞)` at every interior snapshot.
    pub residuals: Vec<[f64; 3]>,
    pub max_leak_rate: f64,
    pub max_diffusion_mass_error: f64,
    pub min_value: f64,
}

fn sup_after<T>(items: &[T], t_burn: f64, t: impl Fn(&T) -> f64, v: impl Fn(&T) -> f64) -> f64 {
    items
        .iter()
        .filter(|x| t(x) >= t_burn)
        .map(v)
        .fold(0.0, f64::max)
}

/// Runs both models from matched initial data and measures their distance.
pub fn compare_gamma(cfg: &RunConfig, gamma: f64) -> Result<CompareReport> {
    let (sim, devs) = run_sim_recorded(cfg, gamma)?;
    let kbm = run_kbm_for(cfg)?;
    if sim.snapshots.len() != kbm.snapshots.len() {
        return Err(Error::Invariant {
            t: cfg.t_end,
            what: "kinetic and macroscopic snapshot counts differ".into(),
        });
    }
    let mut records = Vec::with_capacity(devs.len());
    for ((s, m), d) in sim.snapshots.iter().zip(&kbm.snapshots).zip(&devs) {
        if (s.t - m.t).abs() > 1e-9 {
            return Err(Error::Invariant {
                t: s.t,
                what: format!("snapshot times differ: {} vs {}", s.t, m.t),
            });
        }
        let z = m.z();
        let err = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        records.push(CompareRecord {
            t: s.t,
            err_n: err(&s.moments.n, m.n()),
            err_z: err(&s.moments.z, &z),
            gauss_dev: d.gauss_dev,
            v_max: d.v_max,
            mass_leak: d.mass_leak,
        });
    }
    let residuals = kbm_residuals(&MacroSeries::from_sim(&sim), &cfg.env, cfg.a)?;
    let t_burn = burn_in(cfg.dt(), gamma);
    let norms: Vec<[f64; 3]> = residuals
        .times
        .iter()
        .zip(residuals.norms_after(f64::NEG_INFINITY))
        .map(|(t, (n, z))| [*t, n, z])
        .collect();
    let errors = SweepErrors {
        gamma,
        gauss_dev_sup: sup_after(&records, t_burn, |r| r.t, |r| r.gauss_dev),
        gauss_dev_sup_all: sup_after(&records, f64::NEG_INFINITY, |r| r.t, |r| r.gauss_dev),
        macro_err_n: sup_after(&records, t_burn, |r| r.t, |r| r.err_n),
        macro_err_z: sup_after(&records, t_burn, |r| r.t, |r| r.err_z),
        resid_n: sup_after(&norms, t_burn, |r| r[0], |r| r[1]),
        resid_z: sup_after(&norms, t_burn, |r| r[0], |r| r[2]),
        v_max: records.iter().map(|r| r.v_max).fold(0.0, f64::max),
        t_burn,
    };
    Ok(CompareReport {
        records,
        errors,
        residual_cadence: residuals.cadence,
        residuals: norms,
        max_leak_rate: sim.stats.max_leak_rate,
        max_diffusion_mass_error: sim.stats.max_diffusion_mass_error,
        min_value: sim.stats.min_value,
    })
}

fn write_compare(cfg: &RunConfig, report: &CompareReport, dir: &Path, stem: &str) -> Result<()> {
    let gamma = report.errors.gamma;
    let rows: Vec<Vec<f64>> = report
        .records
        .iter()
        .map(|r| vec![r.t, r.err_n, r.err_z, r.gauss_dev, r.v_max, r.mass_leak])
        .collect();
    let h = header("compare-timeseries", cfg, json!({ "gamma": gamma }))?;
    write_csv(
        &dir.join(format!("{stem}_timeseries.csv")),
        &h,
        &["t", "err_N", "err_Z", "gauss_dev", "v_max", "mass_leak"],
        &rows,
    )?;
    let rows: Vec<Vec<f64>> = report.residuals.iter().map(|r| r.to_vec()).collect();
    let h = header(
        "compare-residuals",
        cfg,
        json!({ "gamma": gamma, "cadence": report.residual_cadence }),
    )?;
    write_csv(&dir.join(format!("{stem}_residuals.csv")), &h, &["t", "phi_N", "phi_Z"], &rows)?;
    let h = header("compare-summary", cfg, json!({}))?;
    write_json(&dir.join(format!("{stem}_summary.json")), &h, report)
}

pub fn compare(cfg: &RunConfig, out: Option<&Path>) -> Result<CompareReport> {
    let report = compare_gamma(cfg, cfg.single_gamma()?)?;
    if let Some(dir) = out {
        write_compare(cfg, &report, dir, "compare")?;
    }
    Ok(report)
}

fn planted_errors(cfg: &RunConfig, gammas: &[f64]) -> Vec<SweepErrors> {
    let p = cfg.planted.as_ref().expect("planted mode");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |g: f64| {
        let u: f64 = if p.noise > 0.0 { rng.random_range(-1.0..1.0) } else { 0.0 };
        p.c * g.powf(-p.theta) * (1.0 + p.noise * u)
    };
    gammas
        .iter()
        .map(|&g| SweepErrors {
            gamma: g,
            gauss_dev_sup: draw(g),
            gauss_dev_sup_all: 0.0,
            macro_err_n: draw(g),
            macro_err_z: draw(g),
            resid_n: draw(g),
            resid_z: draw(g),
            v_max: 0.0,
            t_burn: 0.0,
        })
        .collect()
}

/// Runs [`compare_gamma`] for every `γ` in `gamma_list` (in parallel) and
/// fits a power law to each error family.
pub fn gamma_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<SweepReport> {
    let gammas = cfg.gammas();
    if gammas.len() < 3 {
        return Err(Error::param(
            "gamma_list",
            format!("need ≥ 3 γ values, got {}", gammas.len()),
        ));
    }
    let members = if cfg.planted.is_some() {
        planted_errors(cfg, &gammas)
    } else {
        let reports: Vec<CompareReport> = gammas
            .par_iter()
            .map(|&g| compare_gamma(cfg, g))
            .collect::<Result<_>>()?;
        if let Some(dir) = out {
            for r in &reports {
                write_compare(cfg, r, dir, &format!("compare_gamma_{}", r.errors.gamma))?;
            }
        }
        reports.into_iter().map(|r| r.errors).collect()
    };
    let report = SweepReport::assemble(members)?;
    if let Some(dir) = out {
        let rows: Vec<Vec<f64>> = report
            .errors
            .iter()
            .map(|e| {
                vec![
                    e.gamma,
                    e.gauss_dev_sup,
                    e.gauss_dev_sup_all,
                    e.macro_err_n,
                    e.macro_err_z,
                    e.resid_n,
                    e.resid_z,
                    e.v_max,
                    e.t_burn,
                ]
            })
            .collect();
        let h = header("sweep-errors", cfg, json!({ "planted": cfg.planted.is_some() }))?;
        write_csv(
            &dir.join("sweep_errors.csv"),
            &h,
            &[
                "gamma",
                "gauss_dev_sup",
                "gauss_dev_sup_all",
                "macro_err_N",
                "macro_err_Z",
                "resid_N",
                "resid_Z",
                "v_max",
                "t_burn",
            ],
            &rows,
        )?;
        let h = header("sweep-report", cfg, json!({ "planted": cfg.planted.is_some() }))?;
        write_json(&dir.join("sweep_report.json"), &h, &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    /// Worst observed value; the property holds when `value ≤ threshold`.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub a: f64,
    pub trait_points: usize,
    pub trait_bounds: [f64; 2],
    pub properties: Vec<PropertyResult>,
    pub all_passed: bool,
}

impl PropertyReport {
    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

fn prop(name: &str, value: f64, threshold: f64) -> PropertyResult {
    PropertyResult {
        name: name.to_string(),
        value,
        threshold,
        passed: value <= threshold,
    }
}

/// A faulty kernel makes `Tμ` a non-probability; that is a failed
/// property rather than an error.
fn ratio_or_fail(mu: &GridMeasure, nu: &GridMeasure, kernel: &ReproductionKernel, p: u32) -> Result<f64> {
    match contraction_ratio(mu, nu, kernel, p) {
        Err(Error::NotNormalized { .. }) => Ok(f64::INFINITY),
        r => r,
    }
}

/// Trait grid used by the operator checks: wide enough that the sampled
/// measures and their images have negligible mass outside.
pub fn operator_check_grid(a: f64, points: usize) -> Result<TraitGrid> {
    let half = MeasureShape::default().support_half_width(a);
    TraitGrid::new(-half, half, points)
}

/// `∫ sin dμ` for the piecewise-constant density, integrated exactly.
fn integrate_sin(mu: &GridMeasure) -> f64 {
    let g = mu.grid();
    mu.density()
        .iter()
        .enumerate()
        .map(|(j, d)| d * (g.edge(j).cos() - (g.edge(j) + g.spacing()).cos()))
        .sum()
}

/// The seeded property suite for the reproduction operator and the
/// Wasserstein distances.
pub fn check_operator(cfg: &RunConfig, out: Option<&Path>) -> Result<PropertyReport> {
    let a = cfg.a;
    let opts = &cfg.check;
    let grid = operator_check_grid(a, opts.trait_points)?;
    let kernel = ReproductionKernel::new(a, &grid)?.with_scale(opts.kernel_scale);
    let shape = MeasureShape::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = grid.spacing();
    let mut props = Vec::new();

    let mut fixed = 0.0f64;
    for z in [-1.0, 0.0, 1.0] {
        let g = gaussian_on_grid(z, a, &grid)?.normalized()?;
        fixed = fixed.max(apply_t_fast(&g, &kernel)?.l1_distance(&g)?);
    }
    props.push(prop("fixed_point_l1", fixed, 1e-6));

    let measures: Vec<GridMeasure> = (0..opts.measures)
        .map(|_| random_measure(&grid, &shape, &mut rng))
        .collect::<Result<_>>()?;
    let checks = measures
        .par_iter()
        .map(|m| conservation_check(m, &kernel))
        .collect::<Result<Vec<_>>>()?;
    let worst = |f: fn(&crate::infinitesimal::ConservationCheck) -> f64| {
        checks.iter().map(f).fold(0.0, f64::max)
    };
    props.push(prop("mass_conservation", worst(|c| c.mass_error), 1e-8));
    props.push(prop("mean_conservation", worst(|c| c.mean_error), 1e-8));
    props.push(prop("variance_map", worst(|c| c.variance_map_error), 1e-6));
    props.push(prop("positivity", worst(|c| -c.min_value), 0.0));
    let agreement = measures
        .par_iter()
        .map(|m| apply_t_fast(m, &kernel)?.l1_distance(&apply_t_oracle(m, &kernel)?))
        .collect::<Result<Vec<f64>>>()?;
    props.push(prop("fast_vs_oracle_l1", agreement.into_iter().fold(0.0, f64::max), 1e-6));

    let pairs: Vec<(GridMeasure, GridMeasure)> = (0..opts.pairs)
        .map(|_| {
            let mu = random_measure(&grid, &shape, &mut rng)?;
            let nu = random_measure(&grid, &shape, &mut rng)?;
            let nu = tilt_to_mean(&nu, mu.mean()?)?;
            Ok((mu, nu))
        })
        .collect::<Result<_>>()?;
    let ratios = pairs
        .par_iter()
        .map(|(mu, nu)| Ok((ratio_or_fail(mu, nu, &kernel, 2)?, ratio_or_fail(mu, nu, &kernel, 4)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    props.push(prop(
        "tanaka_w2_ratio",
        ratios.iter().map(|r| r.0).fold(0.0, f64::max),
        std::f64::consts::FRAC_1_SQRT_2 + 1e-4,
    ));
    props.push(prop(
        "tanaka_w4_ratio",
        ratios.iter().map(|r| r.1).fold(0.0, f64::max),
        2f64.powf(-0.25) + 1e-4,
    ));
    let narrow = gaussian_on_grid(0.0, 1.0, &grid)?.normalized()?;
    let wide = gaussian_on_grid(0.0, 4.0, &grid)?.normalized()?;
    let spot = ratio_or_fail(&narrow, &wide, &kernel, 2)?;
    let expected = (2.0 + 0.5 * a).sqrt() - (0.5 + 0.5 * a).sqrt();
    props.push(prop("tanaka_gaussian_spot_check", (spot - expected).abs(), 1e-3));

    // Independent pairs (not mean-matched) for the distance checks.
    let free: Vec<(GridMeasure, GridMeasure, GridMeasure)> = (0..opts.pairs)
        .map(|_| {
            Ok((
                random_measure(&grid, &shape, &mut rng)?,
                random_measure(&grid, &shape, &mut rng)?,
                random_measure(&grid, &shape, &mut rng)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut oracle_gap = 0.0f64;
    let mut triangle = 0.0f64;
    let mut kr = 0.0f64;
    let mut translation = 0.0f64;
    for (mu, nu, rho) in &free {
        for p in [1, 2, 4] {
            let w = wasserstein(mu, nu, p)?;
            oracle_gap = oracle_gap.max((w - wasserstein_oracle(mu, nu, p)?).abs());
            triangle = triangle.max(w - wasserstein(mu, rho, p)? - wasserstein(rho, nu, p)?);
            let shifted = wasserstein(&mu.shifted_cells(7), &nu.shifted_cells(7), p)?;
            translation = translation.max((shifted - w).abs());
        }
        kr = kr.max((integrate_sin(mu) - integrate_sin(nu)).abs() - wasserstein(mu, nu, 1)?);
    }
    props.push(prop("wasserstein_vs_oracle", oracle_gap, (2.0 * h).max(1e-6)));
    props.push(prop("triangle_inequality", triangle, 1e-9));
    props.push(prop("translation_invariance", translation, 1e-12));
    props.push(prop("kantorovich_rubinstein", kr, 1e-12));

    let mut convexity = f64::NEG_INFINITY;
    for (mu, nu, rho) in free.iter().take(20) {
        let other = &free[rng.random_range(0..free.len())].1;
        let w: [f64; 3] = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
        let total: f64 = w.iter().sum();
        let parts = [mu, rho, other];
        let mix: Vec<f64> = (0..grid.len())
            .map(|j| parts.iter().zip(&w).map(|(m, wk)| wk / total * m.density()[j]).sum())
            .collect();
        let mix = GridMeasure::new(grid.clone(), mix)?.normalized()?;
        let bound: f64 = parts
            .iter()
            .zip(&w)
            .map(|(m, wk)| Ok(wk / total * wasserstein_pow(m, nu, 2)?))
            .sum::<Result<f64>>()?;
        convexity = convexity.max(wasserstein_pow(&mix, nu, 2)? - bound);
    }
    props.push(prop("w2_squared_convexity", convexity, 1e-12));

    let mut optimality = f64::NEG_INFINITY;
    for (mu, nu, _) in free.iter().take(5) {
        for p in [1, 2, 4] {
            let best = wasserstein_oracle(mu, nu, p)?.powi(p as i32);
            let (mut a_atoms, mut b_atoms) = (atoms(mu), atoms(nu));
            for _ in 0..20 {
                a_atoms.shuffle(&mut rng);
                b_atoms.shuffle(&mut rng);
                let cost = north_west_corner_cost(&a_atoms, &b_atoms, p);
                optimality = optimality.max(best - cost);
            }
        }
    }
    props.push(prop("monotone_coupling_optimality", optimality, 1e-12));

    let all_passed = props.iter().all(|p| p.passed);
    let report = PropertyReport {
        seed: cfg.seed,
        a,
        trait_points: opts.trait_points,
        trait_bounds: [grid.y_min(), grid.y_max()],
        properties: props,
        all_passed,
    };
    if let Some(dir) = out {
        let h = header("check-operator", cfg, json!({}))?;
        write_json(&dir.join("check_operator.json"), &h, &report)?;
    }
    Ok(report)
}
