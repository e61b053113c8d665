//! Area-occupancy lattice hydrodynamic traffic model with passing.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] holds the parameters and the pointwise update rule.
//! * [`simulate`] runs the recurrence on a periodic ring and classifies attractors.
//! * [`stability`] covers linear stability, critical densities and parameter sweeps.
//! * [`mkdv`] covers the reductive-perturbation coefficients and the kink solution.
//! * [`ews`] computes early-warning indicators from recorded series.
//!
//! Lattice values are scaled densities `ρ* = B·ρ` throughout.

pub mod ews;
pub mod exec;
pub mod export;
pub mod mkdv;
pub mod model;
pub mod simulate;
pub mod stability;

pub use model::{
    ModelError, ModelParams, NoiseConfig, RampConfig, RampSite, Schedule, VehicleClass,
};
