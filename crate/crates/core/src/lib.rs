//! Synthesis of valid, natural, tightly interacting two-hand poses.
//!
//! The pipeline augments seed pose pairs with random joint offsets, optimizes
//! them against penetration, attraction, anatomic and naturalness terms, filters
//! the results, and exports camera-rig annotations. A metrics module evaluates
//! pose estimates against such annotations.

pub mod config;
pub mod discriminator;
pub mod error;
pub mod hand;
pub mod limits;
pub mod losses;
pub mod metrics;
pub mod mesh;
pub mod optimizer;
pub mod pipeline;
pub mod scene;
pub mod seeds;
pub mod synthesis;

pub use error::{Error, ErrorFamily, Result};
