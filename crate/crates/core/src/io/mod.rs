//! File formats, random streams and synthetic data.

pub mod files;
pub mod rng;
pub mod synth;
pub mod micro;
pub mod manifest;
