//! Multiband delay estimation with multi-model stochastic particle-based
//! variational Bayesian inference.
//!
//! The pipeline runs in two stages. A coarse stage picks a model order and
//! rough delays from a matched-filter delay profile (or from perturbed
//! ground truth in oracle mode). The refined stage keeps several candidate
//! path structures alive at once, each with its own hybrid posterior,
//! and shifts weight between them while optimising all of them with
//! stochastic successive convex approximation.
//!
//! Units are SI throughout: seconds, hertz, radians.

pub mod autofocus;
pub mod coarse;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model_space;
pub mod posterior;
pub mod rng;
pub mod runner;
pub mod signal_model;
pub mod ssca;

pub use error::{Error, Result};
