//! Numerical lab for the spatially structured infinitesimal model and its
//! macroscopic limit, the Kirkpatrick–Barton system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod diffusion;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod grids;
pub mod infinitesimal;
pub mod kbm;
pub mod measures;
pub mod output;
pub mod ode;
pub mod sampling;
pub mod sim;

pub use diffusion::DiffusionScheme;
pub use environment::{EnvBounds, Environment};
pub use error::{Error, Result};
pub use grids::{TorusGrid, TraitGrid};
pub use infinitesimal::{apply_t_fast, apply_t_oracle, contraction_ratio, ReproductionKernel};
pub use measures::{gaussian_on_grid, moments, wasserstein, GridMeasure, MomentSummary};
pub use sim::{
    init_state, kinetic_moments, run_sim, sim_step, InitialData, KineticMoments, KineticState,
    Profile, SimParams, SimSolver,
};
pub use config::{parse_config, RunConfig};
pub use diagnostics::{gaussian_deviation, kbm_residuals, MacroSeries, PowerLawFit, SweepErrors, SweepReport};
pub use experiments::{CompareReport, PropertyReport};
pub use kbm::{run_kbm, KbmSolver, KbmTrajectory, MacroState};
