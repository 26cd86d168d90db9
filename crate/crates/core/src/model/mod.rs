//! Domain types shared by every other module.

mod primitives;
mod state;
mod types;

pub use primitives::*;
pub use state::*;
pub use types::*;
