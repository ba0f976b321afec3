//! Time integration of the macroscopic system
//!
//! ```text
//! ∂_t N − Δ N = (1 − ½(Z − y_opt)² − N) N
//! ∂_t Z − Δ Z = 2 ∇N·∇Z / N − A (Z − y_opt)
//! ```
//!
//! in the conservative variables `(N, Y = N Z)`, where every coupling is of
//! zeroth order:
//!
//! ```text
//! ∂_t N − Δ N = r N,              r = 1 − ½(Y/N − y_opt)² − N
//! ∂_t Y − Δ Y = r Y − A (Y − y_opt N)
//! ```
//!
//! Time stepping is an unsplit implicit–explicit trapezoidal rule: diffusion
//! by Crank–Nicolson (the same periodic solver as the kinetic model), the
//! reaction `R` explicitly, as a predictor–corrector pair
//!
//! ```text
//! ũ       = S (u + dt R(t, u)/2)       + dt R(t, u)/2
//! u_next  = S (u + dt R̄/2)            + dt R̄/2,     R̄ = ½(R(t, u) + R(t + dt, ũ))
//! ```
//!
//! where `S = (I − dt Δ/2)⁻¹ (I + dt Δ/2)` is one Crank–Nicolson step, so that
//! `S v/2 + v/2 = (I − dt Δ/2)⁻¹ v`. The scheme is second order and its fixed
//! points are exactly the steady states of the semi-discrete system; a split
//! scheme would add an `O(dt)` or `O(dt²)` commutator bias there.

use serde::Serialize;

use crate::diffusion::{DiffusionScheme, SpatialDiffusion};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::grids::TorusGrid;
use crate::ode::{self, Tolerances};
use crate::sim::{schedule, Profile, N_FLOOR};

/// Macroscopic fields on the torus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroState {
    pub t: f64,
    #[serde(skip)]
    torus: TorusGrid,
    n: Vec<f64>,
    y: Vec<f64>,
}

impl MacroState {
    pub fn new(t: f64, torus: TorusGrid, n: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let cells = torus.num_cells();
        for v in [&n, &y] {
            if v.len() != cells {
                return Err(Error::LengthMismatch {
                    expected: cells,
                    got: v.len(),
                });
            }
        }
        if let Some(i) = n.iter().position(|v| !(v.is_finite() && *v >= N_FLOOR)) {
            return Err(Error::param(
                "N",
                format!("must be finite and above {N_FLOOR}, cell {i} has {}", n[i]),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("Y", "must be finite"));
        }
        Ok(Self { t, torus, n, y })
    }

    /// `N = n0(x)`, `Z = z0(x)` at `t = 0`.
    pub fn from_profiles(torus: &TorusGrid, n0: &Profile, z0: &Profile) -> Result<Self> {
        if !(n0.min() > 0.0) {
            return Err(Error::param(
                "N0",
                format!("Assumption (ii) violated: min N⁰ = {}", n0.min().max(0.0)),
            ));
        }
        let period = torus.period();
        let (n, y) = (0..torus.num_cells())
            .map(|c| {
                let x = torus.center(c);
                let nv = n0.eval(&x, period);
                (nv, nv * z0.eval(&x, period))
            })
            .unzip();
        Self::new(0.0, torus.clone(), n, y)
    }

    pub fn torus(&self) -> &TorusGrid {
        &self.torus
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> Vec<f64> {
        self.n.iter().zip(&self.y).map(|(n, y)| y / n).collect()
    }
}

/// Step bound for the explicit reaction update, from the reaction Jacobian
/// scale `1 + A + N + ½ sup(Z − y_opt)²`.
pub fn kbm_dt_max(a: f64, n_sup: f64, z_reach: f64) -> f64 {
    let rate = 1.0 + a + n_sup.max(1.0) + 0.5 * z_reach * z_reach;
    (0.25 / rate).min(0.1)
}

pub struct KbmSolver {
    env: Environment,
    a: f64,
    dt: f64,
    scheme: DiffusionScheme,
    diffusion: SpatialDiffusion,
}

impl KbmSolver {
    pub fn new(env: Environment, a: f64, dt: f64, torus: &TorusGrid) -> Result<Self> {
        Self::with_scheme(env, a, dt, torus, DiffusionScheme::CrankNicolson)
    }

    pub fn with_scheme(
        env: Environment,
        a: f64,
        dt: f64,
        torus: &TorusGrid,
        scheme: DiffusionScheme,
    ) -> Result<Self> {
        env.validate()?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("A", format!("must be positive, got {a}")));
        }
        let diffusion = SpatialDiffusion::new(torus, dt, scheme)?;
        Ok(Self {
            env,
            a,
            dt,
            scheme,
            diffusion,
        })
    }

    pub fn step(&self, m: &mut MacroState) -> Result<()> {
        self.step_by(m, self.dt)
    }

    pub fn step_by(&self, m: &mut MacroState, dt: f64) -> Result<()> {
        let cells = m.torus.num_cells();
        let partial;
        let cn = if (dt - self.dt).abs() <= 1e-14 * self.dt {
            &self.diffusion
        } else {
            partial = SpatialDiffusion::new(&m.torus, dt, self.scheme)?;
            &partial
        };
        let a = self.a;
        let period = m.torus.period();
        let t = m.t;
        let env = &self.env;
        let torus = &m.torus;
        // Reaction terms of (N, Y) at time `s`, scaled by dt/2, interleaved.
        let reaction = |u: &[f64], s: f64, out: &mut Vec<f64>| -> Result<()> {
            out.clear();
            for c in 0..cells {
                let (n, y) = (u[2 * c], u[2 * c + 1]);
                if !(n >= N_FLOOR && y.is_finite()) {
                    return Err(Error::Invariant {
                        t: s,
                        what: format!("N = {n}, Y = {y} at cell {c}"),
                    });
                }
                let yopt = env.eval(s, &torus.center(c), period);
                let d = y / n - yopt;
                let r = 1.0 - 0.5 * d * d - n;
                out.push(0.5 * dt * r * n);
                out.push(0.5 * dt * (r * y - a * (y - yopt * n)));
            }
            Ok(())
        };
        let advance = |u: &[f64], half_r: &[f64]| -> Vec<f64> {
            let mut v: Vec<f64> = u.iter().zip(half_r).map(|(u, r)| u + r).collect();
            cn.apply(&mut v, 2);
            for (v, r) in v.iter_mut().zip(half_r) {
                *v += r;
            }
            v
        };
        let mut u = Vec::with_capacity(2 * cells);
        for c in 0..cells {
            u.push(m.n[c]);
            u.push(m.y[c]);
        }
        let mut r0 = Vec::with_capacity(2 * cells);
        let mut r1 = Vec::with_capacity(2 * cells);
        reaction(&u, t, &mut r0)?;
        let predicted = advance(&u, &r0);
        reaction(&predicted, t + dt, &mut r1)?;
        for (a, b) in r0.iter_mut().zip(&r1) {
            *a = 0.5 * (*a + b);
        }
        let next = advance(&u, &r0);
        for c in 0..cells {
            let (n, y) = (next[2 * c], next[2 * c + 1]);
            if !(n >= N_FLOOR && y.is_finite()) {
                return Err(Error::Invariant {
                    t: t + dt,
                    what: format!("N = {n}, Y = {y} at cell {c}"),
                });
            }
            m.n[c] = n;
            m.y[c] = y;
        }
        m.t = t + dt;
        Ok(())
    }
}

/// One step of the macroscopic scheme.
pub fn kbm_step(m: &MacroState, env: &Environment, a: f64, dt: f64) -> Result<MacroState> {
    let solver = KbmSolver::new(env.clone(), a, dt, &m.torus)?;
    let mut next = m.clone();
    solver.step(&mut next)?;
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct KbmTrajectory {
    pub snapshots: Vec<MacroState>,
}

impl KbmTrajectory {
    pub fn last(&self) -> &MacroState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

/// Integrates from `m0.t` to `t_end`, keeping the initial state, every
/// `snapshot_every`-th step, and the final state.
pub fn run_kbm(
    m0: MacroState,
    env: &Environment,
    a: f64,
    dt: f64,
    t_end: f64,
    snapshot_every: usize,
) -> Result<KbmTrajectory> {
    run_kbm_with(m0, env, a, dt, t_end, snapshot_every, DiffusionScheme::CrankNicolson)
}

pub fn run_kbm_with(
    m0: MacroState,
    env: &Environment,
    a: f64,
    dt: f64,
    t_end: f64,
    snapshot_every: usize,
    scheme: DiffusionScheme,
) -> Result<KbmTrajectory> {
    if snapshot_every == 0 {
        return Err(Error::param("snapshot_every", "must be at least 1"));
    }
    let solver = KbmSolver::with_scheme(env.clone(), a, dt, &m0.torus, scheme)?;
    let t0 = m0.t;
    let steps = schedule(t0, t_end, dt)?;
    let mut state = m0;
    let mut snapshots = vec![state.clone()];
    for k in 1..=steps {
        let target = if k == steps { t_end } else { t0 + k as f64 * dt };
        let h = target - state.t;
        solver.step_by(&mut state, h)?;
        state.t = target;
        if k % snapshot_every == 0 || k == steps {
            snapshots.push(state.clone());
        }
    }
    Ok(KbmTrajectory { snapshots })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HomogeneousPoint {
    pub t: f64,
    pub n: f64,
    pub z: f64,
}

/// Adaptive high-accuracy solution of the spatially homogeneous reduction
/// `Ṅ = (1 − ½(Z − y_opt)² − N) N`, `Ż = −A (Z − y_opt)`, sampled at
/// `samples + 1` equally spaced times on `[0, t_end]`.
pub fn homogeneous_reference(
    n0: f64,
    z0: f64,
    env: &Environment,
    a: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<HomogeneousPoint>> {
    env.validate()?;
    if !env.is_constant_in_x() {
        return Err(Error::param("env", "homogeneous reference needs y_opt constant in x"));
    }
    if !(n0 > 0.0) {
        return Err(Error::param("N0", format!("must be positive, got {n0}")));
    }
    if !(a > 0.0) {
        return Err(Error::param("A", format!("must be positive, got {a}")));
    }
    if !(t_end >= 0.0) || samples == 0 {
        return Err(Error::param("t_end", "need t_end ≥ 0 and at least one sample"));
    }
    let rhs = |t: f64, u: &[f64], du: &mut [f64]| {
        let yopt = env.eval(t, &[0.0, 0.0], 1.0);
        let d = u[1] - yopt;
        du[0] = (1.0 - 0.5 * d * d - u[0]) * u[0];
        du[1] = -a * d;
    };
    let mut out = vec![HomogeneousPoint { t: 0.0, n: n0, z: z0 }];
    let mut u = vec![n0, z0];
    let mut t = 0.0;
    for k in 1..=samples {
        let t1 = t_end * k as f64 / samples as f64;
        u = ode::integrate(rhs, t, &u, t1, Tolerances::default())?;
        t = t1;
        out.push(HomogeneousPoint { t, n: u[0], z: u[1] });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> TorusGrid {
        TorusGrid::new(1, 16, 1.0).unwrap()
    }

    fn homogeneous(n: f64, z: f64) -> MacroState {
        MacroState::from_profiles(
            &torus(),
            &Profile::Constant { value: n },
            &Profile::Constant { value: z },
        )
        .unwrap()
    }

    #[test]
    fn constant_state_is_fixed() {
        let env = Environment::Constant { value: 0.7 };
        let m = homogeneous(1.0, 0.7);
        let next = kbm_step(&m, &env, 1.0, 0.01).unwrap();
        for c in 0..16 {
            assert!((next.n()[c] - 1.0).abs() < 1e-12);
            assert!((next.z()[c] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn z_relaxes_exponentially() {
        let env = Environment::Constant { value: 0.0 };
        let traj = run_kbm(homogeneous(1.0, 0.5), &env, 1.5, 1e-3, 1.0, 100).unwrap();
        let last = traj.last();
        assert!((last.t - 1.0).abs() < 1e-12);
        let exact = 0.5 * (-1.5f64).exp();
        assert!((last.z()[3] - exact).abs() < 1e-4);
        assert_eq!(traj.snapshots.len(), 11);
    }

    #[test]
    fn reference_solutions() {
        let env = Environment::Constant { value: 0.3 };
        let r = homogeneous_reference(1.0, 0.3, &env, 1.0, 2.0, 4).unwrap();
        assert_eq!(r.len(), 5);
        for p in &r {
            assert!((p.n - 1.0).abs() < 1e-12 && (p.z - 0.3).abs() < 1e-12);
        }
        let env = Environment::Constant { value: 0.0 };
        let r = homogeneous_reference(1.0, 1.0, &env, 2.0, 0.5, 1).unwrap();
        assert!((r[1].z - (-1.0f64).exp()).abs() < 1e-8);
        let r = homogeneous_reference(1.0, 1.0, &env, 2.0, 20.0, 1).unwrap();
        assert!((r[1].n - 1.0).abs() < 1e-6);
        let het = Environment::SinusoidalInX {
            offset: 0.0,
            amplitude: 0.5,
            wavenumber: 1.0,
            phase: 0.0,
        };
        assert!(homogeneous_reference(1.0, 0.0, &het, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn zero_horizon_and_bad_inputs() {
        let env = Environment::Constant { value: 0.0 };
        let m = homogeneous(1.0, 0.0);
        let traj = run_kbm(m.clone(), &env, 1.0, 0.01, 0.0, 1).unwrap();
        assert_eq!(traj.snapshots, vec![m]);
        assert!(MacroState::from_profiles(
            &torus(),
            &Profile::Constant { value: 0.0 },
            &Profile::Constant { value: 0.0 }
        )
        .is_err());
        assert!(kbm_step(&homogeneous(1.0, 0.0), &env, -1.0, 0.01).is_err());
    }
}
