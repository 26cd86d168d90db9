//! Spatial equilibrium with local labor, housing and marriage markets.
pub mod cli;
pub mod error;
pub mod io;
pub mod experiments;
pub mod estimation;
pub mod labor_housing;
pub mod marriage;
pub mod metrics;
pub mod model;
pub mod spatial_eq;

pub use error::{ModelError, Result};
