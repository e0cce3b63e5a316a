use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Norm used for contraction statements and distance reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "ell1")]
    L1,
    #[serde(rename = "ell2")]
    L2,
    #[serde(rename = "ellinf")]
    LInf,
}

impl Norm {
    pub fn of<F: Scalar>(self, x: &[F]) -> F {
        match self {
            Norm::L1 => x.iter().map(|v| v.abs()).sum(),
            Norm::L2 => x.iter().map(|v| *v * *v).sum::<F>().sqrt(),
            Norm::LInf => x.iter().fold(F::zero(), |m, v| m.max(v.abs())),
        }
    }

    pub fn dist<F: Scalar>(self, x: &[F], y: &[F]) -> F {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Norm::L1 => x.iter().zip(y).map(|(a, b)| (*a - *b).abs()).sum(),
            Norm::L2 => x
                .iter()
                .zip(y)
                .map(|(a, b)| (*a - *b) * (*a - *b))
                .sum::<F>()
                .sqrt(),
            Norm::LInf => x
                .iter()
                .zip(y)
                .fold(F::zero(), |m, (a, b)| m.max((*a - *b).abs())),
        }
    }

    pub fn dist_sq<F: Scalar>(self, x: &[F], y: &[F]) -> F {
        match self {
            Norm::L2 => x.iter().zip(y).map(|(a, b)| (*a - *b) * (*a - *b)).sum(),
            _ => {
                let d = self.dist(x, y);
                d * d
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Norm::L1 => "ell1",
            Norm::L2 => "ell2",
            Norm::LInf => "ellinf",
        }
    }
}

#[inline]
pub(crate) fn sup_abs<F: Scalar>(x: &[F]) -> F {
    Norm::LInf.of(x)
}
