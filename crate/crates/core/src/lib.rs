//! Crack detection and crack-pattern statistics for strain-hardening
//! cementitious composite specimen photographs.

pub mod augment;
pub mod classify;
pub mod config;
pub mod crackstats;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod micromech;
pub mod raster;
pub mod rng;
pub mod synthgen;

pub use error::{Error, ErrorClass, Result};
pub use raster::Raster;
pub use rng::Seed;
