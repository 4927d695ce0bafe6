//! Adaptive probabilistic race-driver model.
//!
//! Driving lines are learned as probabilistic movement primitives over arc
//! length, transferred to unseen tracks, driven in closed loop by a preview
//! policy on a bicycle-model plant, and adapted lap by lap through Gaussian
//! conditioning and speed scaling.

pub mod adaptation;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lap;
pub mod policy;
pub mod promp;
pub mod synthesis;
pub mod synthetic;
pub mod vehicle;

pub use error::{Error, Result};
