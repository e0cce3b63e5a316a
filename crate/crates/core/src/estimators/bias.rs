use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::average::{mean_and_stderr, rr_extrapolate};
use crate::estimators::slope::{fit_loglog_slope, SlopeFit};
use crate::norm::Norm;
use crate::qlearning::{QChain, QLearner};
use crate::rng::RngStream;
use crate::sa::{AdditiveChain, NoiseSpec, OperatorSpec};
use crate::Scalar;

/// Dynamic whose stationary bias is estimated.
#[derive(Clone, Debug)]
pub enum Dynamic<'a, F> {
    Additive {
        op: &'a OperatorSpec<F>,
        noise: &'a NoiseSpec<F>,
        theta0: Vec<F>,
    },
    QLearning {
        learner: QLearner<'a, F>,
        q0: Vec<F>,
        q_star: Vec<F>,
    },
}

impl<F: Scalar> Dynamic<'_, F> {
    pub fn dim(&self) -> usize {
        match self {
            Dynamic::Additive { op, .. } => op.dim(),
            Dynamic::QLearning { q0, .. } => q0.len(),
        }
    }

    pub fn fixed_point(&self) -> Result<&[F]> {
        match self {
            Dynamic::Additive { op, .. } => op
                .fixed_point()
                .ok_or_else(|| Error::invalid("operator has no declared fixed point")),
            Dynamic::QLearning { q_star, .. } => Ok(q_star),
        }
    }

    /// Norm in which bias magnitudes are reported.
    pub fn norm(&self) -> Norm {
        match self {
            Dynamic::Additive { op, .. } => op.norm(),
            Dynamic::QLearning { .. } => Norm::LInf,
        }
    }

    /// Tail averages of the chain at `alpha` and, when `with_double` is set,
    /// of a second chain at `2 alpha` driven by the same randomness.
    fn tail_averages(
        &self,
        alpha: F,
        steps: usize,
        k0: usize,
        with_double: bool,
        stream: &mut RngStream,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let d = self.dim();
        let mut acc = vec![0.0f64; d];
        let mut acc2 = vec![0.0f64; d];
        let add = |acc: &mut [f64], x: &[F]| acc.iter_mut().zip(x).for_each(|(a, v)| *a += v.as_f64());
        let double = alpha + alpha;
        match self {
            Dynamic::Additive { op, noise, theta0 } => {
                if noise.dim() != op.dim() {
                    return Err(Error::invalid("noise and operator dimensions differ"));
                }
                let mut a = AdditiveChain::new(op, alpha, theta0)?;
                let mut b = if with_double { Some(AdditiveChain::new(op, double, theta0)?) } else { None };
                let mut w = vec![F::zero(); d];
                if k0 == 0 {
                    add(&mut acc, &a.theta);
                    add(&mut acc2, theta0);
                }
                for t in 1..=steps {
                    noise.sample_into(stream, &mut w);
                    a.advance(&w, t)?;
                    if let Some(b) = b.as_mut() {
                        b.advance(&w, t)?;
                    }
                    if t >= k0 {
                        add(&mut acc, &a.theta);
                        if let Some(b) = b.as_ref() {
                            add(&mut acc2, &b.theta);
                        }
                    }
                }
            }
            Dynamic::QLearning { learner, q0, .. } => {
                let mut a = QChain::new(learner, alpha, q0)?;
                let mut b = if with_double { Some(QChain::new(learner, double, q0)?) } else { None };
                let mut sample = learner.new_sample();
                if k0 == 0 {
                    add(&mut acc, q0);
                    add(&mut acc2, q0);
                }
                for t in 1..=steps {
                    learner.draw(stream, &mut sample);
                    a.advance(&sample, t)?;
                    if let Some(b) = b.as_mut() {
                        b.advance(&sample, t)?;
                    }
                    if t >= k0 {
                        add(&mut acc, &a.q);
                        if let Some(b) = b.as_ref() {
                            add(&mut acc2, &b.q);
                        }
                    }
                }
            }
        }
        let n = (steps + 1 - k0) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc2.iter_mut().for_each(|a| *a /= n);
        Ok((acc, with_double.then_some(acc2)))
    }
}

/// Run-length settings shared by every stepsize of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasSettings {
    pub replicas: usize,
    pub steps: usize,
    /// Tail averages start at iterate `floor(k0_fraction * steps)`.
    pub k0_fraction: f64,
    /// Richardson-Romberg exponent; `None` skips the `2 alpha` chains.
    pub rr_beta: Option<f64>,
}

/// Cross-replica mean and standard error of one estimator minus the fixed point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasEstimate {
    pub bias: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `||mean bias||` in the dynamic's norm.
    pub magnitude: f64,
    pub magnitude_l1: f64,
}

impl BiasEstimate {
    fn from_replicas(samples: &[Vec<f64>], norm: Norm) -> Self {
        let d = samples[0].len();
        let (bias, stderr): (Vec<f64>, Vec<f64>) = (0..d)
            .map(|i| mean_and_stderr(&samples.iter().map(|s| s[i]).collect::<Vec<_>>()))
            .unzip();
        Self {
            magnitude: norm.of(&bias),
            magnitude_l1: Norm::L1.of(&bias),
            bias,
            stderr,
        }
    }

    /// Largest `|bias_i| / stderr_i` over components.
    pub fn max_z(&self) -> f64 {
        self.bias
            .iter()
            .zip(&self.stderr)
            .map(|(b, s)| b.abs() / s)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasEntry {
    pub alpha: f64,
    pub replicas: usize,
    pub steps: usize,
    pub k0: usize,
    pub ta: BiasEstimate,
    pub rr: Option<BiasEstimate>,
}

/// Bias of the tail-averaged iterate at one stepsize from `replicas`
/// independent chains; replica `r` uses `stream.split(r)`. With `rr_beta` set,
/// each replica also runs a `2 alpha` chain on the same randomness and the
/// Richardson-Romberg combination is reported alongside.
pub fn estimate_bias<F: Scalar>(
    dynamic: &Dynamic<'_, F>,
    alpha: F,
    settings: &BiasSettings,
    stream: &RngStream,
) -> Result<BiasEntry> {
    if settings.replicas < 2 {
        return Err(Error::invalid("bias estimation needs at least 2 replicas"));
    }
    if settings.steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if !(0.0..1.0).contains(&settings.k0_fraction) {
        return Err(Error::invalid("k0 fraction must lie in [0, 1)"));
    }
    if let Some(beta) = settings.rr_beta {
        if !(beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if !(alpha + alpha < F::one()) {
            return Err(Error::invalid(format!(
                "Richardson-Romberg needs 2 alpha < 1, got alpha = {alpha}"
            )));
        }
    }
    let theta_star: Vec<f64> = dynamic.fixed_point()?.iter().map(|v| v.as_f64()).collect();
    let k0 = (settings.k0_fraction * settings.steps as f64).floor() as usize;
    let with_rr = settings.rr_beta.is_some();

    let results: Vec<Result<(Vec<f64>, Option<Vec<f64>>)>> = (0..settings.replicas)
        .into_par_iter()
        .map(|r| {
            let mut s = stream.split(r as u64);
            dynamic
                .tail_averages(alpha, settings.steps, k0, with_rr, &mut s)
                .map_err(|e| e.in_replica(r))
        })
        .collect();
    let mut ta = Vec::with_capacity(settings.replicas);
    let mut rr = Vec::with_capacity(settings.replicas);
    for res in results {
        let (avg, avg2) = res?;
        if let (Some(beta), Some(avg2)) = (settings.rr_beta, avg2) {
            let combined = rr_extrapolate(&avg, &avg2, beta)?;
            rr.push(combined.iter().zip(&theta_star).map(|(v, s)| v - s).collect::<Vec<_>>());
        }
        ta.push(avg.iter().zip(&theta_star).map(|(v, s)| v - s).collect::<Vec<_>>());
    }
    let norm = dynamic.norm();
    Ok(BiasEntry {
        alpha: alpha.as_f64(),
        replicas: settings.replicas,
        steps: settings.steps,
        k0,
        ta: BiasEstimate::from_replicas(&ta, norm),
        rr: with_rr.then(|| BiasEstimate::from_replicas(&rr, norm)),
    })
}

/// Slope fits of `log ||bias||` against `log alpha`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub ta: Option<SlopeFit>,
    pub rr: Option<SlopeFit>,
    pub ta_l1: Option<SlopeFit>,
    pub rr_l1: Option<SlopeFit>,
}

/// Bias sweep over several stepsizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub norm: Norm,
    pub entries: Vec<BiasEntry>,
    pub slopes: SlopeSummary,
}

impl BiasReport {
    /// Fits slopes where at least three positive magnitudes are available.
    pub fn new(norm: Norm, entries: Vec<BiasEntry>) -> Self {
        let alphas: Vec<f64> = entries.iter().map(|e| e.alpha).collect();
        let fit = |mags: Option<Vec<f64>>| mags.and_then(|m| fit_loglog_slope(&alphas, &m, None).ok());
        let ta = |f: fn(&BiasEstimate) -> f64| Some(entries.iter().map(|e| f(&e.ta)).collect());
        let rr = |f: fn(&BiasEstimate) -> f64| entries.iter().map(|e| e.rr.as_ref().map(f)).collect();
        let slopes = SlopeSummary {
            ta: fit(ta(|b| b.magnitude)),
            rr: fit(rr(|b| b.magnitude)),
            ta_l1: fit(ta(|b| b.magnitude_l1)),
            rr_l1: fit(rr(|b| b.magnitude_l1)),
        };
        Self { norm, entries, slopes }
    }

    /// One row per stepsize, estimator and component:
    /// `alpha,estimator,component,bias,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "alpha,estimator,component,bias,stderr")?;
        for e in &self.entries {
            let rows = [("TA", Some(&e.ta)), ("RR", e.rr.as_ref())];
            for (name, est) in rows {
                let Some(est) = est else { continue };
                for (i, (b, s)) in est.bias.iter().zip(&est.stderr).enumerate() {
                    writeln!(w, "{},{name},{i},{b},{s}", e.alpha)?;
                }
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let per_alpha: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|e| {
                let est = |b: &BiasEstimate| {
                    serde_json::json!({
                        "magnitude": b.magnitude,
                        "magnitude_ell1": b.magnitude_l1,
                        "max_z": b.max_z(),
                    })
                };
                serde_json::json!({
                    "alpha": e.alpha,
                    "replicas": e.replicas,
                    "steps": e.steps,
                    "k0": e.k0,
                    "TA": est(&e.ta),
                    "RR": e.rr.as_ref().map(est),
                })
            })
            .collect();
        serde_json::json!({
            "norm": self.norm.tag(),
            "slope": {
                "TA": self.slopes.ta,
                "RR": self.slopes.rr,
                "TA_ell1": self.slopes.ta_l1,
                "RR_ell1": self.slopes.rr_l1,
            },
            "entries": per_alpha,
        })
    }
}
