//! Contractive operators and the additive-noise recursion
//! `theta_{t+1} = theta_t + alpha (T(theta_t) - theta_t + w_t)`.

mod chain;
mod coupling;
mod noise;
mod operator;

pub use chain::{rescale, run_chain, sa_step, unrescale, Trajectory, DIVERGENCE_BOUND};
pub(crate) use chain::{drive_chain, guard, AdditiveChain};
pub use coupling::{coupled_shared_noise, coupled_stepsize_ratio, independent_stepsize_pair};
pub use noise::{NoiseKind, NoiseSpec};
pub use operator::{AffinePiece, MapFn, OperatorKind, OperatorSpec};
