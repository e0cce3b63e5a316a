use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::Norm;
use crate::Scalar;

/// Largest sample count accepted by [`empirical_w2_assignment`] by default.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Method {
    Quantile1d,
    Assignment,
}

impl W2Method {
    pub fn tag(self) -> &'static str {
        match self {
            W2Method::Quantile1d => "quantile_1d",
            W2Method::Assignment => "assignment",
        }
    }
}

/// Wasserstein-2 distance between two empirical measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W2Estimate<F> {
    pub value: F,
    pub method: W2Method,
    pub n_x: usize,
    pub n_y: usize,
}

/// Exact W2 between 1-D empirical measures. Equal counts use the sorted
/// pairing; unequal counts integrate the squared quantile difference over the
/// merged breakpoints `i/n` and `j/m`, which is still exact.
pub fn empirical_w2_1d<F: Scalar>(xs: &[F], ys: &[F]) -> Result<W2Estimate<F>> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("W2 needs non-empty sample sets"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("W2 samples must be finite"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
    b.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
    let (n, m) = (a.len(), b.len());
    let sq = if n == m {
        a.iter().zip(&b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<F>() / F::from_usize_lossy(n)
    } else {
        // Breakpoints measured in units of 1/(n m).
        let total = (n * m) as f64;
        let (mut i, mut j, mut pos) = (0usize, 0usize, 0usize);
        let mut acc = F::zero();
        while i < n && j < m {
            let (next_x, next_y) = ((i + 1) * m, (j + 1) * n);
            let next = next_x.min(next_y);
            let d = a[i] - b[j];
            acc = acc + d * d * F::lit((next - pos) as f64 / total);
            pos = next;
            if next_x == next {
                i += 1;
            }
            if next_y == next {
                j += 1;
            }
        }
        acc
    };
    Ok(W2Estimate {
        value: sq.max(F::zero()).sqrt(),
        method: W2Method::Quantile1d,
        n_x: n,
        n_y: m,
    })
}

/// W2 between two equal-size empirical measures in `d` dimensions via an exact
/// minimum-cost assignment on `||x_i - y_j||^2`. Sizes above `cap` are
/// rejected; use the 1-D estimator per coordinate for larger samples.
pub fn empirical_w2_assignment<F: Scalar>(
    xs: &[Vec<F>],
    ys: &[Vec<F>],
    norm: Norm,
    cap: Option<usize>,
) -> Result<W2Estimate<F>> {
    let n = xs.len();
    let cap = cap.unwrap_or(DEFAULT_ASSIGNMENT_CAP);
    if n == 0 || n != ys.len() {
        return Err(Error::invalid(format!(
            "assignment W2 needs equal non-empty sample counts, got {n} and {}",
            ys.len()
        )));
    }
    if n > cap {
        return Err(Error::Unsupported(format!(
            "assignment W2 on {n} points exceeds the cap of {cap}; use the 1-D quantile estimator"
        )));
    }
    let d = xs[0].len();
    if xs.iter().chain(ys).any(|v| v.len() != d) {
        return Err(Error::invalid("sample vectors have different dimensions"));
    }
    if xs.iter().chain(ys).flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("W2 samples must be finite"));
    }
    let cost: Vec<F> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| norm.dist_sq(x, y)))
        .collect();
    let assign = min_cost_assignment(&cost, n);
    let total: F = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(W2Estimate {
        value: (total / F::from_usize_lossy(n)).max(F::zero()).sqrt(),
        method: W2Method::Assignment,
        n_x: n,
        n_y: n,
    })
}

/// Hungarian algorithm with row/column potentials, `O(n^3)`. Returns the
/// column assigned to each row of the row-major `n x n` cost matrix.
pub fn min_cost_assignment<F: Scalar>(cost: &[F], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    let inf = F::infinity();
    // 1-based arrays; index 0 is a virtual column.
    let mut u = vec![F::zero(); n + 1];
    let mut v = vec![F::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] = u[row_of[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    assign
}
