use crate::error::{Error, Result};
use crate::norm::Norm;
use crate::sa::Trajectory;
use crate::Scalar;

/// Tail-sample mean of `||theta_t - theta_star||^order` over stored iterates
/// with index in `[k0, len)`; `order` must be 2, 4, 6 or 8.
pub fn moment_estimate<F: Scalar>(
    traj: &Trajectory<F>,
    theta_star: &[F],
    norm: Norm,
    order: u32,
    k0: usize,
) -> Result<F> {
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(Error::invalid(format!("moment order must be 2, 4, 6 or 8, got {order}")));
    }
    if theta_star.len() != traj.dim() {
        return Err(Error::invalid("fixed point dimension does not match trajectory"));
    }
    if k0 >= traj.len() {
        return Err(Error::invalid(format!("tail window [{k0}, {}) is empty", traj.len())));
    }
    let half = (order / 2) as i32;
    let sum: f64 = traj
        .iterates()
        .skip(k0)
        .map(|x| norm.dist_sq(x, theta_star).as_f64().powi(half))
        .sum();
    Ok(F::lit(sum / (traj.len() - k0) as f64))
}
