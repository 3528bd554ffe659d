//! Numeric core for multi-block data integration: per-block signal
//! extraction with random-matrix shrinkage, rotational bootstrap bounds,
//! a penalized convex-concave search for shared trait-space structure,
//! reconstruction and diagnostics.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod angles;
pub mod bootstrap;
pub mod ccp;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mp;
pub mod noise;
pub mod pipeline;
pub mod preprocess;
pub mod reconstruct;
pub mod rng;
pub mod search;
pub mod signal;
pub mod special;
pub mod synth;

pub use error::{DivasError, Result};
pub use nalgebra::{DMatrix, DVector};
