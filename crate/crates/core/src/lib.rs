//! Sparse identification of grid-connected PV inverter dynamics with
//! per-state adaptive thresholds, and controller design from the identified
//! models.

pub mod arsr;
pub mod control;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod presets;
pub mod pv_plant;
pub mod regression;
pub mod simulator;

pub use error::{Error, Result};
