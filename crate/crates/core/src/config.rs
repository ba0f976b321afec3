//! Flat TOML run configuration.
//!
//! Parsing resolves every default (including the automatic time step and
//! trait window) into the returned [`RunConfig`], so serializing it yields a
//! document that parses back to the same value. Unknown keys are errors.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionScheme;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::grids::{TorusGrid, TraitGrid};
use crate::kbm::kbm_dt_max;
use crate::sim::{dt_max, InitialData, Profile, SimParams, Splitting};

pub const DEFAULT_T_END: f64 = 5.0;
pub const DEFAULT_POINTS_PER_DIM: usize = 64;
pub const DEFAULT_TRAIT_POINTS: usize = 256;
pub const DEFAULT_SNAPSHOT_DT: f64 = 0.05;
/// Upper limit for the automatic time step.
pub const DEFAULT_DT_CAP: f64 = 0.005;
/// Trait window margin, in standard deviations, around the `y_opt` range.
pub const TRAIT_MARGIN_SIGMAS: f64 = 8.0;

/// Settings for `check-operator`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    #[serde(default = "d_check_points")]
    pub trait_points: usize,
    /// Random equal-mean pairs for the contraction checks.
    #[serde(default = "d_pairs")]
    pub pairs: usize,
    /// Random measures for the conservation checks.
    #[serde(default = "d_measures")]
    pub measures: usize,
    /// Multiplies the reproduction kernel; anything but 1 breaks mass
    /// conservation on purpose.
    #[serde(default = "d_scale")]
    pub kernel_scale: f64,
}

fn d_check_points() -> usize {
    512
}
fn d_pairs() -> usize {
    100
}
fn d_measures() -> usize {
    50
}
fn d_scale() -> f64 {
    1.0
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            trait_points: d_check_points(),
            pairs: d_pairs(),
            measures: d_measures(),
            kernel_scale: d_scale(),
        }
    }
}

/// Synthetic sweep errors `c γ^{-θ} (1 + noise U(−1, 1))` in place of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Planted {
    pub theta: f64,
    #[serde(default = "d_scale")]
    pub c: f64,
    #[serde(default)]
    pub noise: f64,
}

fn d_t_end() -> f64 {
    DEFAULT_T_END
}
fn d_dim() -> usize {
    1
}
fn d_points() -> usize {
    DEFAULT_POINTS_PER_DIM
}
fn d_period() -> f64 {
    1.0
}
fn d_trait_points() -> usize {
    DEFAULT_TRAIT_POINTS
}
fn d_snapshot_dt() -> f64 {
    DEFAULT_SNAPSHOT_DT
}
fn d_env() -> Environment {
    Environment::Constant { value: 0.0 }
}
fn d_n0() -> Profile {
    Profile::Constant { value: 1.0 }
}
fn d_z0() -> Profile {
    Profile::Constant { value: 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_list: Option<Vec<f64>>,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    /// Automatic when omitted: the largest step not above
    /// [`DEFAULT_DT_CAP`] or the stability bound that divides `snapshot_dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_points")]
    pub points_per_dim: usize,
    #[serde(default = "d_period")]
    pub period: f64,
    #[serde(default = "d_trait_points")]
    pub trait_points: usize,
    /// Automatic when omitted: the `y_opt` and `Z0` ranges widened by
    /// `8 √max(A, V0)` on both sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trait_bounds: Option<[f64; 2]>,
    /// Must be a whole multiple of `dt`.
    #[serde(default = "d_snapshot_dt")]
    pub snapshot_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub text: bool,
    #[serde(default)]
    pub diffusion: DiffusionScheme,
    #[serde(default)]
    pub splitting: Splitting,
    #[serde(rename = "V0", default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default = "d_env")]
    pub env: Environment,
    #[serde(rename = "N0", default = "d_n0")]
    pub n0: Profile,
    #[serde(rename = "Z0", default = "d_z0")]
    pub z0: Profile,
    #[serde(default)]
    pub check: CheckOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Planted>,
}

/// Parses and validates a TOML document, applying every default.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    raw.resolve()
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// A config with the given `A` and `γ` and every other field defaulted.
    pub fn minimal(a: f64, gamma: f64) -> Result<Self> {
        parse_config(&format!("A = {a:?}\ngamma = {gamma:?}\n"))
    }

    /// Fills in automatic fields and validates everything.
    pub fn resolve(mut self) -> Result<Self> {
        positive("A", self.a)?;
        match (&self.gamma, &self.gamma_list) {
            (None, None) => {
                return Err(Error::param("gamma", "missing: set `gamma` or `gamma_list`"));
            }
            (Some(g), _) => positive("gamma", *g)?,
            _ => {}
        }
        if let Some(list) = &self.gamma_list {
            if list.is_empty() {
                return Err(Error::param("gamma_list", "must not be empty"));
            }
            for g in list {
                positive("gamma_list", *g)?;
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("must be nonnegative, got {}", self.t_end)));
        }
        positive("snapshot_dt", self.snapshot_dt)?;
        let v0 = self.v0.unwrap_or(self.a);
        positive("V0", v0)?;
        self.v0 = Some(v0);
        self.env.validate()?;
        if !(self.n0.min() > 0.0) {
            return Err(Error::param(
                "N0",
                format!("Assumption (ii) violated: min N⁰ = {}", self.n0.min().max(0.0)),
            ));
        }
        let torus = TorusGrid::new(self.dim, self.points_per_dim, self.period)?;
        let bounds = self.env.bounds(self.t_end, torus.period());
        let traits = match self.trait_bounds {
            Some([lo, hi]) => TraitGrid::new(lo, hi, self.trait_points)?,
            None => {
                let margin = TRAIT_MARGIN_SIGMAS * self.a.max(v0).sqrt();
                let lo = bounds.min_value.min(self.z0.min()) - margin;
                let hi = bounds.max_value.max(self.z0.max()) + margin;
                TraitGrid::new(lo, hi, self.trait_points)?
            }
        };
        self.trait_bounds = Some([traits.y_min(), traits.y_max()]);
        let n_sup = self.n0.max().max(1.0 + 0.5 * self.a);
        let stable = dt_max(self.a, &traits, bounds.min_value, bounds.max_value, n_sup);
        let z_reach = (self.z0.max() - bounds.min_value)
            .abs()
            .max((bounds.max_value - self.z0.min()).abs());
        let stable = stable.min(kbm_dt_max(self.a, n_sup, z_reach));
        let dt = match self.dt {
            Some(dt) => {
                positive("dt", dt)?;
                if dt > stable * (1.0 + 1e-12) {
                    return Err(Error::param(
                        "dt",
                        format!("{dt} exceeds the stability bound {stable:.6e}"),
                    ));
                }
                dt
            }
            None => self.snapshot_dt / (self.snapshot_dt / DEFAULT_DT_CAP.min(stable)).ceil(),
        };
        self.dt = Some(dt);
        let ratio = self.snapshot_dt / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(Error::param(
                "snapshot_dt",
                format!("must be a whole multiple of dt = {dt}, got {}", self.snapshot_dt),
            ));
        }
        let margin = 6.0 * v0.sqrt();
        if self.z0.min() - margin < traits.y_min() || self.z0.max() + margin > traits.y_max() {
            return Err(Error::param(
                "Z0",
                format!(
                    "range [{}, {}] is not inside the safe trait interior of [{}, {}]",
                    self.z0.min(),
                    self.z0.max(),
                    traits.y_min(),
                    traits.y_max()
                ),
            ));
        }
        if self.check.trait_points < TraitGrid::MIN_POINTS {
            return Err(Error::param(
                "check.trait_points",
                format!("need at least {}, got {}", TraitGrid::MIN_POINTS, self.check.trait_points),
            ));
        }
        if self.check.pairs == 0 || self.check.measures == 0 {
            return Err(Error::param("check", "pairs and measures must be at least 1"));
        }
        positive("check.kernel_scale", self.check.kernel_scale)?;
        if let Some(p) = &self.planted {
            if !(p.theta >= 0.0 && p.theta.is_finite()) {
                return Err(Error::param("planted.theta", format!("must be nonnegative, got {}", p.theta)));
            }
            positive("planted.c", p.c)?;
            if !(0.0..0.5).contains(&p.noise) {
                return Err(Error::param("planted.noise", format!("must lie in [0, 0.5), got {}", p.noise)));
            }
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dt(&self) -> f64 {
        self.dt.expect("resolved config has dt")
    }

    pub fn v0(&self) -> f64 {
        self.v0.expect("resolved config has V0")
    }

    pub fn snapshot_every(&self) -> usize {
        (self.snapshot_dt / self.dt()).round() as usize
    }

    pub fn torus(&self) -> TorusGrid {
        TorusGrid::new(self.dim, self.points_per_dim, self.period).expect("validated")
    }

    pub fn traits(&self) -> TraitGrid {
        let [lo, hi] = self.trait_bounds.expect("resolved config has trait bounds");
        TraitGrid::new(lo, hi, self.trait_points).expect("validated")
    }

    pub fn initial_data(&self) -> InitialData {
        InitialData {
            n0: self.n0.clone(),
            z0: self.z0.clone(),
            v0: self.v0(),
        }
    }

    /// The single `γ` of a run: `gamma`, or the only entry of `gamma_list`.
    pub fn single_gamma(&self) -> Result<f64> {
        match (&self.gamma, &self.gamma_list) {
            (Some(g), _) => Ok(*g),
            (None, Some(list)) if list.len() == 1 => Ok(list[0]),
            _ => Err(Error::param("gamma", "this command needs a single `gamma`")),
        }
    }

    /// `gamma_list`, or `[gamma]`.
    pub fn gammas(&self) -> Vec<f64> {
        match (&self.gamma_list, self.gamma) {
            (Some(list), _) => list.clone(),
            (None, Some(g)) => vec![g],
            (None, None) => Vec::new(),
        }
    }

    pub fn sim_params(&self, gamma: f64) -> SimParams {
        SimParams {
            a: self.a,
            gamma,
            dt: self.dt(),
            diffusion: self.diffusion,
            splitting: self.splitting,
            snapshot_every: self.snapshot_every(),
            reaction: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let c = parse_config("A = 1\ngamma = 8\nt_end = 5\n").unwrap();
        assert_eq!(c.dt(), 0.005);
        assert_eq!(c.snapshot_every(), 10);
        assert_eq!(c.v0(), 1.0);
        assert_eq!(c.trait_bounds, Some([-8.0, 8.0]));
        assert_eq!(c.single_gamma().unwrap(), 8.0);
    }

    #[test]
    fn errors_name_the_field() {
        let err = parse_config("A = -1\ngamma = 8\n").unwrap_err();
        assert!(err.to_string().contains("`A`"), "{err}");
        assert!(err.is_config());
        let err = parse_config("A = 1\n").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = parse_config("A = 1\ngamma = 2\ngama = 3\n").unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
        let err = parse_config("A = 1\ngamma = 2\ndt = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("`dt`"), "{err}");
        let err = parse_config("A = 1\ngamma = 2\n[N0]\nkind = \"constant\"\nvalue = 0\n").unwrap_err();
        assert!(err.to_string().contains("Assumption (ii) violated: min N⁰ = 0"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
A = 1.0
gamma_list = [2.0, 4.0, 8.0]
splitting = "strang"

[env]
kind = "sinusoidal-in-x"
amplitude = 0.5

[Z0]
kind = "sinusoidal"
mean = 0.0
amplitude = 0.25
"#;
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        assert!(c.single_gamma().is_err());
        assert_eq!(c.gammas(), vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn automatic_dt_divides_snapshot_interval() {
        let c = parse_config("A = 1\ngamma = 1\ntrait_bounds = [-12.0, 12.0]\n").unwrap();
        let k = c.snapshot_dt / c.dt();
        assert!((k - k.round()).abs() < 1e-9);
        assert!(c.dt() < 0.005);
    }
}
