//! Tail averaging, Richardson-Romberg extrapolation, replica-based bias
//! estimation, empirical W2 distances, moments and log-log slope fits.

mod average;
mod bias;
mod moments;
mod slope;
mod w2;

pub use average::{batch_mean_stderr, rr_extrapolate, tail_average};
pub use bias::{estimate_bias, BiasEntry, BiasEstimate, BiasReport, BiasSettings, Dynamic, SlopeSummary};
pub use moments::moment_estimate;
pub use slope::{fit_loglog_slope, SlopeFit};
pub use w2::{
    empirical_w2_1d, empirical_w2_assignment, min_cost_assignment, W2Estimate, W2Method,
    DEFAULT_ASSIGNMENT_CAP,
};
