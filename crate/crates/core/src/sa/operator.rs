use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::norm::Norm;
use crate::Scalar;

/// User-supplied map `T`, writing `T(x)` into the output slice.
pub type MapFn<F> = Arc<dyn Fn(&[F], &mut [F]) + Send + Sync>;

/// One affine piece `w . x + c` of a max-affine component.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePiece<F> {
    pub weights: Vec<F>,
    pub offset: F,
}

#[derive(Clone)]
pub enum OperatorKind<F> {
    /// `T(x) = A x + b`, `A` stored row-major.
    Linear { a: Vec<F>, b: Vec<F> },
    /// `T(x) = -|x|/2 - b` on the real line.
    ScaledAbs1D { b: F },
    /// `T(x) = -ln(cosh x)/2`, a smooth counterpart of `ScaledAbs1D` with the
    /// same modulus and fixed point but nonzero curvature at it.
    LogCosh1D,
    /// `T(x)_i = scale * max_j (w_ij . x + c_ij)`.
    MaxAffine {
        scale: F,
        pieces: Vec<Vec<AffinePiece<F>>>,
    },
    Custom(MapFn<F>),
}

impl<F: fmt::Debug> fmt::Debug for OperatorKind<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Linear { a, b } => f
                .debug_struct("Linear")
                .field("a", a)
                .field("b", b)
                .finish(),
            OperatorKind::ScaledAbs1D { b } => f.debug_struct("ScaledAbs1D").field("b", b).finish(),
            OperatorKind::LogCosh1D => f.write_str("LogCosh1D"),
            OperatorKind::MaxAffine { scale, pieces } => f
                .debug_struct("MaxAffine")
                .field("scale", scale)
                .field("pieces", pieces)
                .finish(),
            OperatorKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A contractive map together with its norm, modulus and (if known) fixed point.
#[derive(Clone, Debug)]
pub struct OperatorSpec<F> {
    dim: usize,
    kind: OperatorKind<F>,
    norm: Norm,
    modulus: F,
    fixed_point: Option<Vec<F>>,
}

impl<F: Scalar> OperatorSpec<F> {
    /// Linear operator `A x + b`. The modulus is the induced norm of `A`,
    /// which must be below one.
    pub fn linear(a: Vec<F>, b: Vec<F>, norm: Norm) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(Error::invalid("linear operator needs dimension >= 1"));
        }
        if a.len() != d * d {
            return Err(Error::invalid(format!(
                "matrix has {} entries, expected {}x{}",
                a.len(),
                d,
                d
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("linear operator entries must be finite"));
        }
        let modulus = induced_norm(&a, d, norm);
        if modulus >= F::one() {
            return Err(Error::invalid(format!(
                "||A||_{} = {modulus} is not a contraction",
                norm.tag()
            )));
        }
        let fixed_point = solve_identity_minus(&a, &b, d)?;
        Ok(Self {
            dim: d,
            kind: OperatorKind::Linear { a, b },
            norm,
            modulus,
            fixed_point: Some(fixed_point),
        })
    }

    pub fn scaled_abs_1d(b: F) -> Self {
        // -|x|/2 - b = x: x = -2b when b >= 0, x = -2b/3 when b < 0.
        let fp = if b >= F::zero() {
            -(b + b)
        } else {
            -(b + b) / F::lit(3.0)
        };
        Self {
            dim: 1,
            kind: OperatorKind::ScaledAbs1D { b },
            norm: Norm::L2,
            modulus: F::lit(0.5),
            fixed_point: Some(vec![fp]),
        }
    }

    pub fn log_cosh_1d() -> Self {
        Self {
            dim: 1,
            kind: OperatorKind::LogCosh1D,
            norm: Norm::L2,
            modulus: F::lit(0.5),
            fixed_point: Some(vec![F::zero()]),
        }
    }

    /// Max-affine operator, contractive in the sup norm with modulus `scale`
    /// provided every piece has `||w||_1 <= 1`. The fixed point is computed by
    /// Banach iteration.
    pub fn max_affine(scale: F, pieces: Vec<Vec<AffinePiece<F>>>) -> Result<Self> {
        let d = pieces.len();
        if d == 0 {
            return Err(Error::invalid("max-affine operator needs dimension >= 1"));
        }
        if !(scale > F::zero() && scale < F::one()) {
            return Err(Error::invalid(format!("scale {scale} must lie in (0, 1)")));
        }
        for (i, row) in pieces.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::invalid(format!("component {i} has no affine pieces")));
            }
            for piece in row {
                if piece.weights.len() != d {
                    return Err(Error::invalid(format!(
                        "component {i}: piece has {} weights, expected {d}",
                        piece.weights.len()
                    )));
                }
                let l1 = Norm::L1.of(&piece.weights);
                if !(l1 <= F::one() + F::epsilon()) || !piece.offset.is_finite() {
                    return Err(Error::invalid(format!(
                        "component {i}: piece weights must have l1 norm <= 1, got {l1}"
                    )));
                }
            }
        }
        let mut op = Self {
            dim: d,
            kind: OperatorKind::MaxAffine { scale, pieces },
            norm: Norm::LInf,
            modulus: scale,
            fixed_point: None,
        };
        op.fixed_point = Some(op.iterate_to_fixed_point()?);
        Ok(op)
    }

    /// Wraps an arbitrary map. Contraction and the fixed point are the
    /// caller's claims; they are not verified here.
    pub fn custom(
        dim: usize,
        map: MapFn<F>,
        norm: Norm,
        modulus: F,
        fixed_point: Option<Vec<F>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("operator dimension must be >= 1"));
        }
        if !(modulus > F::zero() && modulus < F::one()) {
            return Err(Error::invalid(format!("modulus {modulus} must lie in (0, 1)")));
        }
        if let Some(fp) = &fixed_point {
            if fp.len() != dim {
                return Err(Error::invalid("fixed point dimension mismatch"));
            }
        }
        Ok(Self {
            dim,
            kind: OperatorKind::Custom(map),
            norm,
            modulus,
            fixed_point,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn modulus(&self) -> F {
        self.modulus
    }

    pub fn fixed_point(&self) -> Option<&[F]> {
        self.fixed_point.as_deref()
    }

    pub fn kind(&self) -> &OperatorKind<F> {
        &self.kind
    }

    pub fn apply(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "operator expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut out = vec![F::zero(); self.dim];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation; `x` and `out` must both have length `dim`.
    #[inline]
    pub fn apply_into(&self, x: &[F], out: &mut [F]) {
        match &self.kind {
            OperatorKind::Linear { a, b } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &a[i * self.dim..(i + 1) * self.dim];
                    *o = row.iter().zip(x).map(|(r, v)| *r * *v).sum::<F>() + b[i];
                }
            }
            OperatorKind::ScaledAbs1D { b } => {
                out[0] = -x[0].abs() * F::lit(0.5) - *b;
            }
            OperatorKind::LogCosh1D => {
                out[0] = -log_cosh(x[0]) * F::lit(0.5);
            }
            OperatorKind::MaxAffine { scale, pieces } => {
                for (o, row) in out.iter_mut().zip(pieces) {
                    let best = row
                        .iter()
                        .map(|p| p.weights.iter().zip(x).map(|(w, v)| *w * *v).sum::<F>() + p.offset)
                        .fold(F::neg_infinity(), F::max);
                    *o = *scale * best;
                }
            }
            OperatorKind::Custom(map) => map(x, out),
        }
    }

    fn iterate_to_fixed_point(&self) -> Result<Vec<F>> {
        let mut x = vec![F::zero(); self.dim];
        let mut next = vec![F::zero(); self.dim];
        let tol = F::epsilon() * F::lit(8.0);
        for _ in 0..100_000 {
            self.apply_into(&x, &mut next);
            let step = self.norm.dist(&x, &next);
            let scale = F::one().max(self.norm.of(&next));
            std::mem::swap(&mut x, &mut next);
            if step <= tol * scale {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence {
            iterations: 100_000,
            residual: self.norm.dist(&x, &next).as_f64(),
        })
    }
}

/// `ln cosh x` without overflow for large `|x|`.
#[inline]
pub(crate) fn log_cosh<F: Scalar>(x: F) -> F {
    let ax = x.abs();
    ax + (-(ax + ax)).exp().ln_1p() - F::lit(std::f64::consts::LN_2)
}

fn induced_norm<F: Scalar>(a: &[F], d: usize, norm: Norm) -> F {
    match norm {
        Norm::LInf => (0..d)
            .map(|i| a[i * d..(i + 1) * d].iter().map(|v| v.abs()).sum::<F>())
            .fold(F::zero(), F::max),
        Norm::L1 => (0..d)
            .map(|j| (0..d).map(|i| a[i * d + j].abs()).sum::<F>())
            .fold(F::zero(), F::max),
        Norm::L2 => spectral_norm(a, d),
    }
}

/// Largest singular value by power iteration on `A^T A`.
fn spectral_norm<F: Scalar>(a: &[F], d: usize) -> F {
    let mut v: Vec<F> = (0..d).map(|i| F::one() + F::lit(0.1 * i as f64)).collect();
    let mut lambda = F::zero();
    for _ in 0..2000 {
        let av: Vec<F> = (0..d)
            .map(|i| (0..d).map(|j| a[i * d + j] * v[j]).sum())
            .collect();
        let atav: Vec<F> = (0..d)
            .map(|j| (0..d).map(|i| a[i * d + j] * av[i]).sum())
            .collect();
        let n = Norm::L2.of(&atav);
        if n == F::zero() {
            return F::zero();
        }
        let next = n / Norm::L2.of(&v);
        v = atav.into_iter().map(|x| x / n).collect();
        let converged = (next - lambda).abs() <= F::epsilon() * next;
        lambda = next;
        if converged {
            break;
        }
    }
    lambda.sqrt()
}

/// Solves `(I - A) x = b` by Gaussian elimination with partial pivoting.
fn solve_identity_minus<F: Scalar>(a: &[F], b: &[F], d: usize) -> Result<Vec<F>> {
    let mut m: Vec<F> = (0..d * d)
        .map(|k| {
            let (i, j) = (k / d, k % d);
            let id = if i == j { F::one() } else { F::zero() };
            id - a[k]
        })
        .collect();
    let mut rhs = b.to_vec();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&r, &s| m[r * d + col].abs().partial_cmp(&m[s * d + col].abs()).unwrap())
            .unwrap();
        if m[pivot * d + col].abs() <= F::epsilon() {
            return Err(Error::invalid("I - A is singular"));
        }
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
            }
            rhs.swap(col, pivot);
        }
        for r in col + 1..d {
            let factor = m[r * d + col] / m[col * d + col];
            for j in col..d {
                let delta = factor * m[col * d + j];
                m[r * d + j] = m[r * d + j] - delta;
            }
            rhs[r] = rhs[r] - factor * rhs[col];
        }
    }
    let mut x = vec![F::zero(); d];
    for i in (0..d).rev() {
        let tail: F = (i + 1..d).map(|j| m[i * d + j] * x[j]).sum();
        x[i] = (rhs[i] - tail) / m[i * d + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn shipped_operators() -> Vec<OperatorSpec<f64>> {
        vec![
            OperatorSpec::scaled_abs_1d(0.0),
            OperatorSpec::scaled_abs_1d(0.7),
            OperatorSpec::scaled_abs_1d(-0.4),
            OperatorSpec::log_cosh_1d(),
            OperatorSpec::linear(vec![0.5], vec![0.3], Norm::L2).unwrap(),
            OperatorSpec::linear(vec![0.3, 0.2, -0.1, 0.4], vec![1.0, -1.0], Norm::L2).unwrap(),
            OperatorSpec::linear(vec![0.3, 0.2, -0.1, 0.4], vec![1.0, -1.0], Norm::LInf).unwrap(),
            canonical_max_affine(),
        ]
    }

    fn canonical_max_affine() -> OperatorSpec<f64> {
        let piece = |w: [f64; 2], c: f64| AffinePiece {
            weights: w.to_vec(),
            offset: c,
        };
        OperatorSpec::max_affine(
            0.8,
            vec![
                vec![piece([1.0, 0.0], 0.0), piece([0.0, 1.0], 0.0)],
                vec![piece([-0.5, 0.5], 0.2), piece([0.0, -1.0], -0.1)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn contraction_holds_on_random_pairs() {
        let mut s = RngStream::new(42);
        for op in shipped_operators() {
            let d = op.dim();
            for _ in 0..10_000 {
                let scale = 10f64.powf(4.0 * s.uniform() - 2.0);
                let x: Vec<f64> = (0..d).map(|_| scale * s.standard_normal()).collect();
                let y: Vec<f64> = (0..d).map(|_| scale * s.standard_normal()).collect();
                let lhs = op.norm().dist(&op.apply(&x).unwrap(), &op.apply(&y).unwrap());
                let rhs = op.modulus() * op.norm().dist(&x, &y) + 1e-9;
                assert!(lhs <= rhs, "{:?}: {lhs} > {rhs}", op.kind());
            }
        }
    }

    #[test]
    fn fixed_point_residuals() {
        for op in shipped_operators() {
            let fp = op.fixed_point().unwrap().to_vec();
            let res = op.norm().dist(&op.apply(&fp).unwrap(), &fp);
            assert!(res <= 1e-9, "{:?}: residual {res}", op.kind());
        }
    }

    #[test]
    fn scaled_abs_fixed_points() {
        assert_eq!(OperatorSpec::<f64>::scaled_abs_1d(0.0).fixed_point().unwrap(), &[0.0]);
        assert_eq!(OperatorSpec::<f64>::scaled_abs_1d(1.0).fixed_point().unwrap(), &[-2.0]);
        let fp = OperatorSpec::<f64>::scaled_abs_1d(-0.3).fixed_point().unwrap()[0];
        assert!((fp - 0.2).abs() < 1e-15);
        assert_eq!(OperatorSpec::<f64>::scaled_abs_1d(0.0).modulus(), 0.5);
    }

    #[test]
    fn linear_rejects_non_contraction() {
        assert!(OperatorSpec::<f64>::linear(vec![1.0], vec![0.0], Norm::L2).is_err());
        assert!(OperatorSpec::<f64>::linear(vec![-1.2], vec![0.0], Norm::L2).is_err());
        // Rows sum to 0.9 in absolute value, but the spectral norm is 0.9 * sqrt(2).
        let a = vec![0.9, 0.0, 0.9, 0.0];
        assert!(OperatorSpec::<f64>::linear(a.clone(), vec![0.0; 2], Norm::LInf).is_ok());
        assert!(OperatorSpec::<f64>::linear(a, vec![0.0; 2], Norm::L2).is_err());
        assert!(OperatorSpec::<f64>::linear(vec![0.5; 3], vec![0.0; 2], Norm::L2).is_err());
    }

    #[test]
    fn linear_modulus_is_spectral_norm() {
        // diag(0.6, -0.2) rotated: singular values stay 0.6 and 0.2.
        let (c, s) = (0.8f64, 0.6f64);
        let a = vec![
            0.6 * c * c - 0.2 * s * s,
            (0.6 + 0.2) * c * s,
            (0.6 + 0.2) * c * s,
            0.6 * s * s - 0.2 * c * c,
        ];
        let op = OperatorSpec::linear(a, vec![0.0, 0.0], Norm::L2).unwrap();
        assert!((op.modulus() - 0.6).abs() < 1e-10);
    }

    #[test]
    fn max_affine_validation() {
        let bad = vec![vec![AffinePiece {
            weights: vec![0.8, 0.8],
            offset: 0.0,
        }]];
        assert!(OperatorSpec::<f64>::max_affine(0.5, bad).is_err());
        assert!(OperatorSpec::<f64>::max_affine(1.0, vec![]).is_err());
    }

    #[test]
    fn log_cosh_is_stable() {
        assert_eq!(log_cosh(0.0f64), 0.0);
        assert!((log_cosh(1.0f64) - 1.0f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(1000.0f64) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!(log_cosh(-800.0f32).is_finite());
    }

    #[test]
    fn generic_over_f32() {
        let op = OperatorSpec::<f32>::scaled_abs_1d(0.0);
        assert_eq!(op.apply(&[1.0]).unwrap(), vec![-0.5f32]);
        let lin = OperatorSpec::<f32>::linear(vec![0.5], vec![1.0], Norm::L2).unwrap();
        assert!((lin.fixed_point().unwrap()[0] - 2.0).abs() < 1e-6);
    }
}
