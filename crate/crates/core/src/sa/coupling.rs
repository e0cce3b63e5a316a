//! Synchronous couplings of additive-noise chains.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sa::chain::AdditiveChain;
use crate::sa::{NoiseKind, NoiseSpec, OperatorSpec};
use crate::Scalar;

/// Two chains from different starts driven by one noise realization.
/// Returns `||theta_t^a - theta_t^b||_c^2` for `t = 0..=steps`.
pub fn coupled_shared_noise<F: Scalar>(
    theta0_a: &[F],
    theta0_b: &[F],
    alpha: F,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    stream: &mut RngStream,
) -> Result<Vec<F>> {
    if theta0_a.len() != theta0_b.len() {
        return Err(Error::invalid("coupled chains need initial points of equal dimension"));
    }
    if noise.dim() != op.dim() {
        return Err(Error::invalid("noise and operator dimensions differ"));
    }
    let norm = op.norm();
    let mut a = AdditiveChain::new(op, alpha, theta0_a)?;
    let mut b = AdditiveChain::new(op, alpha, theta0_b)?;
    let mut w = vec![F::zero(); op.dim()];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(norm.dist_sq(&a.theta, &b.theta));
    for t in 1..=steps {
        noise.sample_into(stream, &mut w);
        a.advance(&w, t)?;
        b.advance(&w, t)?;
        out.push(norm.dist_sq(&a.theta, &b.theta));
    }
    Ok(out)
}

/// Couples the chain at stepsize `alpha` with the chain at `alpha / k`: every
/// slow step consumes the normalized sum of the `k` Gaussian draws that drive
/// the next `k` fast steps. Both chains start at `theta_star`. Returns the
/// rescaled squared distance `||Y_t^(alpha) - Y_{kt}^(alpha/k)||_c^2` for
/// `t = 0..=steps` slow steps.
pub fn coupled_stepsize_ratio<F: Scalar>(
    alpha: F,
    k: usize,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    stream: &mut RngStream,
    theta_star: &[F],
) -> Result<Vec<F>> {
    if noise.kind() != NoiseKind::Gaussian {
        return Err(Error::Unsupported(
            "stepsize-ratio coupling needs Gaussian noise so the aggregated draw has the same law"
                .into(),
        ));
    }
    stepsize_pair(alpha, k, steps, op, noise, stream, None, theta_star)
}

/// Same pair of chains as [`coupled_stepsize_ratio`] but with the fast chain
/// driven by an independent stream: a product coupling used as a baseline.
pub fn independent_stepsize_pair<F: Scalar>(
    alpha: F,
    k: usize,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    slow_stream: &mut RngStream,
    fast_stream: &mut RngStream,
    theta_star: &[F],
) -> Result<Vec<F>> {
    stepsize_pair(alpha, k, steps, op, noise, slow_stream, Some(fast_stream), theta_star)
}

#[allow(clippy::too_many_arguments)]
fn stepsize_pair<F: Scalar>(
    alpha: F,
    k: usize,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    stream: &mut RngStream,
    mut fast_stream: Option<&mut RngStream>,
    theta_star: &[F],
) -> Result<Vec<F>> {
    if k == 0 {
        return Err(Error::invalid("stepsize ratio k must be >= 1"));
    }
    if theta_star.len() != op.dim() || noise.dim() != op.dim() {
        return Err(Error::invalid("dimension mismatch in stepsize coupling"));
    }
    let d = op.dim();
    let norm = op.norm();
    let fast_alpha = alpha / F::from_usize_lossy(k);
    let mut slow = AdditiveChain::new(op, alpha, theta_star)?;
    let mut fast = AdditiveChain::new(op, fast_alpha, theta_star)?;
    let (root_slow, root_fast) = (alpha.sqrt(), fast_alpha.sqrt());
    let inv_root_k = F::one() / F::from_usize_lossy(k).sqrt();

    let distance = |slow: &[F], fast: &[F]| {
        let ys: Vec<F> = (0..d).map(|i| (slow[i] - theta_star[i]) / root_slow).collect();
        let yf: Vec<F> = (0..d).map(|i| (fast[i] - theta_star[i]) / root_fast).collect();
        norm.dist_sq(&ys, &yf)
    };

    let mut w = vec![F::zero(); d];
    let mut sum = vec![F::zero(); d];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(distance(&slow.theta, &fast.theta));
    for t in 1..=steps {
        sum.iter_mut().for_each(|s| *s = F::zero());
        for j in 0..k {
            noise.sample_into(stream, &mut w);
            sum.iter_mut().zip(&w).for_each(|(s, v)| *s = *s + *v);
            if let Some(other) = fast_stream.as_deref_mut() {
                noise.sample_into(other, &mut w);
            }
            fast.advance(&w, (t - 1) * k + j + 1)?;
        }
        sum.iter_mut().for_each(|s| *s = *s * inv_root_k);
        slow.advance(&sum, t)?;
        out.push(distance(&slow.theta, &fast.theta));
    }
    Ok(out)
}
