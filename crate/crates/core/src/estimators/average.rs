use crate::error::{Error, Result};
use crate::sa::Trajectory;
use crate::Scalar;

/// Mean of the stored iterates with index in `[k0, len)`.
///
/// Indices refer to stored iterates, so with `record_stride > 1` this is the
/// average of the subsampled chain rather than of every step.
pub fn tail_average<F: Scalar>(traj: &Trajectory<F>, k0: usize) -> Result<Vec<F>> {
    let len = traj.len();
    if k0 >= len {
        return Err(Error::invalid(format!(
            "tail window [{k0}, {len}) is empty"
        )));
    }
    let mut acc = vec![0.0f64; traj.dim()];
    for x in traj.iterates().skip(k0) {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v.as_f64();
        }
    }
    let n = (len - k0) as f64;
    Ok(acc.into_iter().map(|a| F::lit(a / n)).collect())
}

/// Richardson-Romberg combination `(2^b avg_alpha - avg_2alpha) / (2^b - 1)`
/// that cancels a leading bias term of order `alpha^b`.
pub fn rr_extrapolate<F: Scalar>(avg_alpha: &[F], avg_2alpha: &[F], beta: F) -> Result<Vec<F>> {
    if !(beta > F::zero()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if avg_alpha.len() != avg_2alpha.len() {
        return Err(Error::invalid("averages have different dimensions"));
    }
    let p = F::lit(2.0).powf(beta);
    let denom = p - F::one();
    Ok(avg_alpha
        .iter()
        .zip(avg_2alpha)
        .map(|(a, b)| (p * *a - *b) / denom)
        .collect())
}

/// Mean of a scalar series together with a batch-means standard error, which
/// stays valid for autocorrelated samples when batches are much longer than
/// the correlation time.
pub fn batch_mean_stderr(series: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || series.len() < batches {
        return Err(Error::invalid(format!(
            "need at least {batches} >= 2 samples for batch means, got {}",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (mean, se) = mean_and_stderr(&means);
    Ok((mean, se))
}

/// Sample mean and `std / sqrt(n)` with the unbiased variance.
pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
