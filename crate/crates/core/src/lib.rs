//! Constant-stepsize stochastic approximation with nonsmooth operators and
//! Q-learning: simulation, couplings, bias estimation and experiment runs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common `f64` case.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod mdp;
pub mod norm;
pub mod qlearning;
pub mod rng;
pub mod sa;
mod scalar;

pub use error::{Error, Result};
pub use norm::Norm;
pub use rng::RngStream;
pub use scalar::Scalar;

pub type OperatorSpec64 = sa::OperatorSpec<f64>;
pub type NoiseSpec64 = sa::NoiseSpec<f64>;
pub type Trajectory64 = sa::Trajectory<f64>;
pub type Mdp64 = mdp::Mdp<f64>;
pub type OperatorSpec32 = sa::OperatorSpec<f32>;
pub type NoiseSpec32 = sa::NoiseSpec<f32>;
pub type Trajectory32 = sa::Trajectory<f32>;
pub type Mdp32 = mdp::Mdp<f32>;
