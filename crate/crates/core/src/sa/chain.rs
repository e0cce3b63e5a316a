use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::norm::sup_abs;
use crate::rng::RngStream;
use crate::sa::{NoiseSpec, OperatorSpec};
use crate::Scalar;

/// Chains abort once an iterate leaves this sup-norm ball.
pub const DIVERGENCE_BOUND: f64 = 1e9;

/// Recorded iterates of one chain, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<F> {
    pub alpha: F,
    pub record_stride: usize,
    pub total_steps: usize,
    dim: usize,
    data: Vec<F>,
    /// Free-form label, e.g. the Q-learning mode that produced the chain.
    pub tag: Option<String>,
}

impl<F: Scalar> Trajectory<F> {
    pub fn new(alpha: F, dim: usize, record_stride: usize, total_steps: usize) -> Self {
        Self {
            alpha,
            record_stride,
            total_steps,
            dim,
            data: Vec::with_capacity(dim * (total_steps / record_stride.max(1) + 1)),
            tag: None,
        }
    }

    /// Builds a trajectory from explicit iterates with stride 1.
    pub fn from_iterates(alpha: F, iterates: &[Vec<F>]) -> Result<Self> {
        let dim = iterates.first().map_or(0, Vec::len);
        if dim == 0 || iterates.iter().any(|x| x.len() != dim) {
            return Err(Error::invalid("iterates must be non-empty with a common dimension"));
        }
        let mut t = Self::new(alpha, dim, 1, iterates.len() - 1);
        iterates.iter().for_each(|x| t.push(x));
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored iterates.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iterate(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iterates(&self) -> impl ExactSizeIterator<Item = &[F]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn last(&self) -> Option<&[F]> {
        self.iterates().last()
    }

    pub(crate) fn push(&mut self, x: &[F]) {
        self.data.extend_from_slice(x);
    }

    fn map_iterates(&self, f: impl Fn(&[F], &mut [F])) -> Self {
        let mut out = self.clone();
        for (src, dst) in self.data.chunks_exact(self.dim).zip(out.data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        out
    }

    /// CSV with header `step,component_0,...`; step is the chain time of each
    /// stored iterate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("component_{i}")).collect();
        writeln!(w, "step,{}", header.join(","))?;
        for (i, x) in self.iterates().enumerate() {
            write!(w, "{}", i * self.record_stride)?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::invalid(format!("stepsize {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// One additive-noise step `theta + alpha (T(theta) - theta + w)`.
pub fn sa_step<F: Scalar>(theta: &[F], alpha: F, op: &OperatorSpec<F>, w: &[F]) -> Result<Vec<F>> {
    check_alpha(alpha)?;
    if theta.len() != op.dim() || w.len() != op.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: operator {}, iterate {}, noise {}",
            op.dim(),
            theta.len(),
            w.len()
        )));
    }
    let mut out = vec![F::zero(); op.dim()];
    let mut scratch = vec![F::zero(); op.dim()];
    step_in_place_from(theta, alpha, op, w, &mut scratch, &mut out);
    Ok(out)
}

#[inline]
fn step_in_place_from<F: Scalar>(
    theta: &[F],
    alpha: F,
    op: &OperatorSpec<F>,
    w: &[F],
    scratch: &mut [F],
    out: &mut [F],
) {
    op.apply_into(theta, scratch);
    for i in 0..theta.len() {
        out[i] = theta[i] + alpha * (scratch[i] - theta[i] + w[i]);
    }
}

/// Mutable state of one additive-noise chain with reusable buffers.
pub(crate) struct AdditiveChain<'a, F> {
    op: &'a OperatorSpec<F>,
    pub alpha: F,
    pub theta: Vec<F>,
    scratch: Vec<F>,
    next: Vec<F>,
}

impl<'a, F: Scalar> AdditiveChain<'a, F> {
    pub fn new(op: &'a OperatorSpec<F>, alpha: F, theta0: &[F]) -> Result<Self> {
        check_alpha(alpha)?;
        if theta0.len() != op.dim() {
            return Err(Error::invalid(format!(
                "initial point has dimension {}, operator {}",
                theta0.len(),
                op.dim()
            )));
        }
        Ok(Self {
            op,
            alpha,
            theta: theta0.to_vec(),
            scratch: vec![F::zero(); op.dim()],
            next: vec![F::zero(); op.dim()],
        })
    }

    /// Advances one step with noise `w`; `step` is the index of the new iterate.
    #[inline]
    pub fn advance(&mut self, w: &[F], step: usize) -> Result<()> {
        step_in_place_from(&self.theta, self.alpha, self.op, w, &mut self.scratch, &mut self.next);
        std::mem::swap(&mut self.theta, &mut self.next);
        guard(&self.theta, self.alpha, step)
    }
}

#[inline]
pub(crate) fn guard<F: Scalar>(x: &[F], alpha: F, step: usize) -> Result<()> {
    let m = sup_abs(x);
    if m.is_finite() && m <= F::lit(DIVERGENCE_BOUND) {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            alpha: alpha.as_f64(),
            replica: None,
        })
    }
}

/// Runs `steps` iterations with fresh noise per step, calling `observe(t, theta_t)`
/// for every `t` in `0..=steps`.
pub(crate) fn drive_chain<F: Scalar>(
    theta0: &[F],
    alpha: F,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    stream: &mut RngStream,
    mut observe: impl FnMut(usize, &[F]),
) -> Result<()> {
    if noise.dim() != op.dim() {
        return Err(Error::invalid("noise and operator dimensions differ"));
    }
    let mut chain = AdditiveChain::new(op, alpha, theta0)?;
    let mut w = vec![F::zero(); op.dim()];
    observe(0, &chain.theta);
    for t in 1..=steps {
        noise.sample_into(stream, &mut w);
        chain.advance(&w, t)?;
        observe(t, &chain.theta);
    }
    Ok(())
}

pub fn run_chain<F: Scalar>(
    theta0: &[F],
    alpha: F,
    steps: usize,
    op: &OperatorSpec<F>,
    noise: &NoiseSpec<F>,
    stream: &mut RngStream,
    record_stride: usize,
) -> Result<Trajectory<F>> {
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if record_stride == 0 {
        return Err(Error::invalid("record_stride must be >= 1"));
    }
    let mut traj = Trajectory::new(alpha, op.dim(), record_stride, steps);
    drive_chain(theta0, alpha, steps, op, noise, stream, |t, x| {
        if t % record_stride == 0 {
            traj.push(x);
        }
    })?;
    Ok(traj)
}

/// Maps every iterate to `(theta - theta_star) / sqrt(alpha)`.
pub fn rescale<F: Scalar>(traj: &Trajectory<F>, theta_star: &[F]) -> Result<Trajectory<F>> {
    if theta_star.len() != traj.dim() {
        return Err(Error::invalid("fixed point dimension does not match trajectory"));
    }
    let root = traj.alpha.sqrt();
    Ok(traj.map_iterates(|x, y| {
        for i in 0..x.len() {
            y[i] = (x[i] - theta_star[i]) / root;
        }
    }))
}

/// Inverse of [`rescale`]: `theta_star + sqrt(alpha) * y`.
pub fn unrescale<F: Scalar>(traj: &Trajectory<F>, theta_star: &[F]) -> Result<Trajectory<F>> {
    if theta_star.len() != traj.dim() {
        return Err(Error::invalid("fixed point dimension does not match trajectory"));
    }
    let root = traj.alpha.sqrt();
    Ok(traj.map_iterates(|y, x| {
        for i in 0..y.len() {
            x[i] = theta_star[i] + root * y[i];
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Norm;

    #[test]
    fn step_examples() {
        let abs = OperatorSpec::scaled_abs_1d(0.0);
        let out = sa_step(&[1.0], 0.1, &abs, &[0.0]).unwrap();
        assert!((out[0] - 0.85f64).abs() < 1e-15);
        assert_eq!(sa_step(&[0.0], 0.1, &abs, &[0.0]).unwrap(), vec![0.0]);

        let lin = OperatorSpec::linear(vec![0.5], vec![0.0], Norm::L2).unwrap();
        let out = sa_step(&[2.0], 0.2, &lin, &[1.0]).unwrap();
        assert!((out[0] - 2.0f64).abs() < 1e-15);

        let lin_b = OperatorSpec::linear(vec![0.5], vec![0.3], Norm::L2).unwrap();
        let fp = lin_b.fixed_point().unwrap().to_vec();
        let out = sa_step(&fp, 0.3, &lin_b, &[0.0]).unwrap();
        assert!((out[0] - fp[0] as f64).abs() < 1e-15);
    }

    #[test]
    fn step_errors() {
        let abs = OperatorSpec::scaled_abs_1d(0.0);
        assert!(sa_step(&[1.0, 2.0], 0.1, &abs, &[0.0]).is_err());
        assert!(sa_step(&[1.0], 0.1, &abs, &[0.0, 1.0]).is_err());
        assert!(sa_step(&[1.0], 1.5, &abs, &[0.0]).is_err());
        assert!(sa_step(&[1.0], 0.0, &abs, &[0.0]).is_err());
    }

    #[test]
    fn deterministic_geometric_decay() {
        let lin = OperatorSpec::linear(vec![0.5], vec![0.0], Norm::L2).unwrap();
        let noise = NoiseSpec::zero(1);
        let traj = run_chain(&[1.0], 0.1, 200, &lin, &noise, &mut RngStream::new(0), 1).unwrap();
        assert_eq!(traj.len(), 201);
        let mut expect = 1.0f64;
        for x in traj.iterates() {
            assert!((x[0] - expect).abs() <= 1e-13 * expect, "{} vs {expect}", x[0]);
            expect *= 0.95;
        }
    }

    #[test]
    fn stride_bookkeeping() {
        let abs = OperatorSpec::scaled_abs_1d(0.0);
        let noise = NoiseSpec::gaussian(1, 1.0).unwrap();
        let traj = run_chain(&[1.0], 0.1, 103, &abs, &noise, &mut RngStream::new(0), 10).unwrap();
        assert_eq!(traj.len(), 103 / 10 + 1);
        let full = run_chain(&[1.0], 0.1, 103, &abs, &noise, &mut RngStream::new(0), 1).unwrap();
        assert_eq!(traj.iterate(7), full.iterate(70));
    }

    #[test]
    fn divergence_reports_step() {
        let op = OperatorSpec::custom(
            1,
            std::sync::Arc::new(|x: &[f64], y: &mut [f64]| y[0] = 1e3 * x[0]),
            Norm::L2,
            0.5,
            Some(vec![0.0]),
        )
        .unwrap();
        let noise = NoiseSpec::zero(1);
        let err = run_chain(&[1.0], 0.5, 100, &op, &noise, &mut RngStream::new(0), 1).unwrap_err();
        match err {
            Error::Divergence { step, .. } => assert_eq!(step, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rescale_roundtrip() {
        let traj = Trajectory::from_iterates(0.04, &[vec![1.2], vec![1.0], vec![0.7]]).unwrap();
        let y = rescale(&traj, &[1.0]).unwrap();
        assert!((y.iterate(0)[0] - 1.0f64).abs() < 1e-12);
        assert_eq!(y.iterate(1)[0], 0.0);
        assert_eq!(y.alpha, 0.04);
        let back = unrescale(&y, &[1.0]).unwrap();
        for (a, b) in back.iterates().zip(traj.iterates()) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        assert!(rescale(&traj, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory::from_iterates(0.1, &[vec![1.0, 2.0], vec![0.5, 0.25]]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,component_0,component_1\n0,1,2\n1,0.5,0.25\n"
        );
    }
}
