use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimal-trait field `y_opt(t, x)`.
///
/// Spatial variation is along the first torus axis only and is periodic with
/// the torus period `L` passed to [`Environment::eval`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Environment {
    /// `y_opt = value`
    Constant { value: f64 },
    /// `y_opt = value + rate t`
    AffineInT { value: f64, rate: f64 },
    /// `y_opt = offset + amplitude sin(2π wavenumber x / L + phase)`
    SinusoidalInX {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `y_opt = offset + amplitude sin(2π wavenumber x / L) + drift t`
    SinusoidalPlusDrift {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        drift: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Sup-norm bounds of `y_opt` and its first derivatives over a time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvBounds {
    pub min_value: f64,
    pub max_value: f64,
    pub sup_dt: f64,
    pub sup_dx: f64,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            Environment::Constant { value } => value.is_finite(),
            Environment::AffineInT { value, rate } => value.is_finite() && rate.is_finite(),
            Environment::SinusoidalInX {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => [offset, amplitude, wavenumber, phase].iter().all(|v| v.is_finite()),
            Environment::SinusoidalPlusDrift {
                offset,
                amplitude,
                wavenumber,
                drift,
            } => [offset, amplitude, wavenumber, drift].iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::param("env", "coefficients must be finite"));
        }
        if let Environment::SinusoidalInX { wavenumber, .. }
        | Environment::SinusoidalPlusDrift { wavenumber, .. } = self
        {
            if wavenumber.fract() != 0.0 {
                return Err(Error::param(
                    "env",
                    format!("wavenumber must be an integer to stay periodic, got {wavenumber}"),
                ));
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64; 2], period: f64) -> f64 {
        match *self {
            Environment::Constant { value } => value,
            Environment::AffineInT { value, rate } => value + rate * t,
            Environment::SinusoidalInX {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => offset + amplitude * (2.0 * PI * wavenumber * x[0] / period + phase).sin(),
            Environment::SinusoidalPlusDrift {
                offset,
                amplitude,
                wavenumber,
                drift,
            } => offset + amplitude * (2.0 * PI * wavenumber * x[0] / period).sin() + drift * t,
        }
    }

    pub fn is_constant_in_x(&self) -> bool {
        matches!(
            self,
            Environment::Constant { .. } | Environment::AffineInT { .. }
        ) || matches!(self, Environment::SinusoidalInX { amplitude, .. }
            | Environment::SinusoidalPlusDrift { amplitude, .. } if *amplitude == 0.0)
    }

    /// Declared bounds over `t ∈ [0, t_end]`.
    pub fn bounds(&self, t_end: f64, period: f64) -> EnvBounds {
        let t_end = t_end.max(0.0);
        match *self {
            Environment::Constant { value } => EnvBounds {
                min_value: value,
                max_value: value,
                sup_dt: 0.0,
                sup_dx: 0.0,
            },
            Environment::AffineInT { value, rate } => {
                let end = value + rate * t_end;
                EnvBounds {
                    min_value: value.min(end),
                    max_value: value.max(end),
                    sup_dt: rate.abs(),
                    sup_dx: 0.0,
                }
            }
            Environment::SinusoidalInX {
                offset,
                amplitude,
                wavenumber,
                ..
            } => EnvBounds {
                min_value: offset - amplitude.abs(),
                max_value: offset + amplitude.abs(),
                sup_dt: 0.0,
                sup_dx: 2.0 * PI * wavenumber.abs() * amplitude.abs() / period,
            },
            Environment::SinusoidalPlusDrift {
                offset,
                amplitude,
                wavenumber,
                drift,
            } => {
                let shift = drift * t_end;
                EnvBounds {
                    min_value: offset - amplitude.abs() + shift.min(0.0),
                    max_value: offset + amplitude.abs() + shift.max(0.0),
                    sup_dt: drift.abs(),
                    sup_dx: 2.0 * PI * wavenumber.abs() * amplitude.abs() / period,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_is_periodic_and_bounded() {
        let env = Environment::SinusoidalInX {
            offset: 0.0,
            amplitude: 0.5,
            wavenumber: 1.0,
            phase: 0.0,
        };
        let b = env.bounds(5.0, 1.0);
        for k in 0..100 {
            let x = k as f64 / 100.0;
            let v = env.eval(0.3, &[x, 0.0], 1.0);
            assert!(v >= b.min_value - 1e-15 && v <= b.max_value + 1e-15);
            assert!((v - env.eval(0.3, &[x + 1.0, 0.0], 1.0)).abs() < 1e-12);
        }
        assert!((env.eval(0.0, &[0.25, 0.0], 1.0) - 0.5).abs() < 1e-15);
        assert!(!env.is_constant_in_x());
    }

    #[test]
    fn drift_bounds_cover_horizon() {
        let env = Environment::SinusoidalPlusDrift {
            offset: 0.0,
            amplitude: 0.2,
            wavenumber: 1.0,
            drift: -0.1,
        };
        let b = env.bounds(10.0, 1.0);
        assert!((b.min_value + 1.2).abs() < 1e-12);
        assert!((b.max_value - 0.2).abs() < 1e-12);
        let env = Environment::AffineInT {
            value: 1.0,
            rate: 0.5,
        };
        assert!(env.is_constant_in_x());
        assert_eq!(env.eval(2.0, &[0.7, 0.0], 1.0), 2.0);
    }

    #[test]
    fn parses_from_toml_and_rejects_unknown_keys() {
        let env: Environment =
            toml::from_str("kind = \"sinusoidal-in-x\"\namplitude = 0.5\n").unwrap();
        assert_eq!(
            env,
            Environment::SinusoidalInX {
                offset: 0.0,
                amplitude: 0.5,
                wavenumber: 1.0,
                phase: 0.0
            }
        );
        assert!(toml::from_str::<Environment>("kind = \"constant\"\nvalue = 1\nvalu = 2\n").is_err());
        let bad = Environment::SinusoidalInX {
            offset: 0.0,
            amplitude: 0.5,
            wavenumber: 1.5,
            phase: 0.0,
        };
        assert!(bad.validate().is_err());
    }
}
