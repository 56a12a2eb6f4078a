//! A desk-scale text-to-music personalization laboratory.

pub mod audio;
pub mod codec;
pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod personalization;
pub mod rng;
pub mod text;

pub use error::{Error, Result};
