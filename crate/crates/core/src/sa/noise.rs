use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Independent `sqrt(Sigma_ii) * (+-1)` per coordinate; off-diagonal
    /// covariance entries are ignored.
    RademacherScaled,
}

/// Zero-mean i.i.d. additive noise with covariance `Sigma`.
#[derive(Clone, Debug)]
pub struct NoiseSpec<F> {
    kind: NoiseKind,
    dim: usize,
    covariance: Vec<F>,
    /// Lower-triangular factor with `L L^T = Sigma` (Gaussian only).
    factor: Vec<F>,
    scales: Vec<F>,
}

impl<F: Scalar> NoiseSpec<F> {
    /// Noise with a full covariance matrix, given row-major.
    pub fn new(kind: NoiseKind, covariance: Vec<F>, dim: usize) -> Result<Self> {
        if dim == 0 || covariance.len() != dim * dim {
            return Err(Error::invalid(format!(
                "covariance has {} entries, expected {dim}x{dim}",
                covariance.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (covariance[i * dim + j], covariance[j * dim + i]);
                if (a - b).abs() > F::lit(1e-12) * (F::one() + a.abs()) {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let factor = psd_cholesky(&covariance, dim)?;
        let scales = (0..dim).map(|i| covariance[i * dim + i].sqrt()).collect();
        Ok(Self {
            kind,
            dim,
            covariance,
            factor,
            scales,
        })
    }

    pub fn isotropic(kind: NoiseKind, dim: usize, variance: F) -> Result<Self> {
        let mut cov = vec![F::zero(); dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = variance;
        }
        Self::new(kind, cov, dim)
    }

    pub fn gaussian(dim: usize, variance: F) -> Result<Self> {
        Self::isotropic(NoiseKind::Gaussian, dim, variance)
    }

    pub fn zero(dim: usize) -> Self {
        Self::isotropic(NoiseKind::Gaussian, dim, F::zero()).expect("zero covariance is valid")
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &[F] {
        &self.covariance
    }

    /// Fills `out` with one noise vector. Gaussian noise consumes `2 * dim`
    /// words, Rademacher noise `dim` words, regardless of the covariance.
    #[inline]
    pub fn sample_into(&self, stream: &mut RngStream, out: &mut [F]) {
        match self.kind {
            NoiseKind::Gaussian => {
                if self.dim == 1 {
                    out[0] = self.factor[0] * F::lit(stream.standard_normal());
                    return;
                }
                let z: Vec<F> = (0..self.dim).map(|_| F::lit(stream.standard_normal())).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &self.factor[i * self.dim..i * self.dim + i + 1];
                    *o = row.iter().zip(&z).map(|(l, v)| *l * *v).sum();
                }
            }
            NoiseKind::RademacherScaled => {
                for (o, s) in out.iter_mut().zip(&self.scales) {
                    *o = *s * F::lit(stream.rademacher());
                }
            }
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        self.sample_into(stream, &mut out);
        out
    }
}

/// Cholesky factor of a positive-semidefinite matrix; zero pivots yield zero
/// columns instead of failing.
fn psd_cholesky<F: Scalar>(a: &[F], d: usize) -> Result<Vec<F>> {
    let mut l = vec![F::zero(); d * d];
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(F::zero(), F::max);
    let tol = F::lit(1e-12) * scale.max(F::one());
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag = diag - l[j * d + k] * l[j * d + k];
        }
        if diag < -tol {
            return Err(Error::invalid("covariance is not positive semidefinite"));
        }
        if diag <= tol {
            for i in j + 1..d {
                let mut v = a[i * d + j];
                for k in 0..j {
                    v = v - l[i * d + k] * l[j * d + k];
                }
                if v.abs() > tol.sqrt() {
                    return Err(Error::invalid("covariance is not positive semidefinite"));
                }
            }
            continue;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v = v - l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / ljj;
        }
    }
    Ok(l)
}
