use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{make_type_a, random_mdp, Mdp};
use crate::norm::Norm;
use crate::qlearning::RewardLaw;
use crate::rng::RngStream;
use crate::sa::{AffinePiece, NoiseKind, NoiseSpec, OperatorSpec};

/// Stream tag for generating random MDPs, shared by every experiment with the
/// same seed so Type-A and Type-B variants start from one base MDP.
pub(crate) const MDP_STREAM_TAG: u64 = 0x4d44_50;

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Tail-average bias per stepsize with a log-log slope fit.
    BiasSweep,
    /// Bias sweep with Richardson-Romberg estimates next to the tail averages.
    RrCompare,
    /// Richardson-Romberg bias sweep on a Q-learning dynamic plus MDP classification.
    QExperiment,
    /// Shared-noise and stepsize-ratio coupling diagnostics.
    Coupling,
    /// Empirical W2 between chain laws over time and across stepsizes.
    W2Convergence,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::BiasSweep => "bias-sweep",
            ExperimentKind::RrCompare => "rr-compare",
            ExperimentKind::QExperiment => "q-experiment",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::W2Convergence => "w2-convergence",
        }
    }
}

/// Complete description of one run; together with the code version it fixes
/// every emitted number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub stepsizes: Vec<f64>,
    /// Chain length per replica (slow-chain steps for stepsize-ratio couplings).
    pub steps: usize,
    pub replicas: usize,
    #[serde(default = "half")]
    pub burn_in_fraction: f64,
    #[serde(default = "half")]
    pub beta: f64,
    pub dynamic: DynamicConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<W2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKind,
    /// Isotropic variance; ignored when `covariance` is given.
    #[serde(default = "one")]
    pub variance: f64,
    /// Full covariance, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
}

fn default_noise_kind() -> NoiseKind {
    NoiseKind::Gaussian
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            variance: 1.0,
            covariance: None,
        }
    }
}

impl NoiseConfig {
    pub fn build(&self, dim: usize) -> Result<NoiseSpec<f64>> {
        match &self.covariance {
            Some(cov) => NoiseSpec::new(self.kind, cov.clone(), dim),
            None => NoiseSpec::isotropic(self.kind, dim, self.variance),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub weights: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DynamicConfig {
    Linear {
        /// Row-major `d x d` matrix.
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default = "default_norm")]
        norm: Norm,
        theta0: Vec<f64>,
        #[serde(default)]
        noise: NoiseConfig,
    },
    ScaledAbs {
        #[serde(default)]
        b: f64,
        #[serde(default = "unit_start")]
        theta0: Vec<f64>,
        #[serde(default)]
        noise: NoiseConfig,
    },
    LogCosh {
        #[serde(default = "unit_start")]
        theta0: Vec<f64>,
        #[serde(default)]
        noise: NoiseConfig,
    },
    MaxAffine {
        scale: f64,
        /// `pieces[i]` lists the affine pieces maximized in coordinate `i`.
        pieces: Vec<Vec<PieceConfig>>,
        theta0: Vec<f64>,
        #[serde(default)]
        noise: NoiseConfig,
    },
    Mdp {
        /// Text-format MDP file; relative paths resolve against the config file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        /// Text-format MDP inline.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inline: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random: Option<RandomMdpConfig>,
        /// Copy the first action of state 0 onto the second, creating a tie.
        #[serde(default)]
        type_a: bool,
        #[serde(default = "default_mode")]
        mode: QModeConfig,
        #[serde(default)]
        reward_law: RewardLaw,
        /// Initial value of every entry of `q0`.
        #[serde(default = "one")]
        q0: f64,
    },
}

fn default_norm() -> Norm {
    Norm::L2
}

fn unit_start() -> Vec<f64> {
    vec![1.0]
}

fn default_mode() -> QModeConfig {
    QModeConfig::Synchronous
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QModeConfig {
    Synchronous,
    Asynchronous,
}

/// Where the MDP comes from: exactly one of the three fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MdpSource<'a> {
    pub path: Option<&'a str>,
    pub inline: Option<&'a str>,
    pub random: Option<&'a RandomMdpConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpConfig {
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_reward_std")]
    pub reward_noise_std: f64,
}

fn default_gamma() -> f64 {
    0.9
}

fn default_reward_std() -> f64 {
    0.3f64.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Second start for the shared-noise coupling; the first is the dynamic's `theta0`.
    pub theta0_b: Vec<f64>,
    /// Length of the shared-noise coupling.
    pub shared_steps: usize,
    #[serde(default = "default_ratio")]
    pub ratio_k: usize,
    /// Fraction of slow steps discarded before pooling stepsize-ratio distances.
    #[serde(default = "half")]
    pub tail_fraction: f64,
    /// Emit every `stride`-th step in coupling.csv.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_ratio() -> usize {
    2
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct W2Config {
    /// Steps at which the transient law is compared with the stationary one.
    pub checkpoints: Vec<usize>,
    /// Cap for the assignment solver in more than one dimension.
    #[serde(default = "default_cap")]
    pub assignment_cap: usize,
}

fn default_cap() -> usize {
    crate::estimators::DEFAULT_ASSIGNMENT_CAP
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` object of an emitted manifest.json.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let mut cfg = if is_json {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            let cfg: Self = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
            cfg.validate()?;
            cfg
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Replaces an MDP `path` by the file's contents so the config is self-contained.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        if let DynamicConfig::Mdp { path, inline, .. } = &mut self.dynamic {
            if let Some(p) = path.take() {
                let full = base.join(&p);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Config(format!("cannot read MDP file {}: {e}", full.display())))?;
                *inline = Some(text);
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stepsizes.is_empty() {
            return bad("stepsizes must not be empty".into());
        }
        if let Some(a) = self.stepsizes.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("stepsizes: {a} is outside (0, 1)"));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if self.replicas < 2 {
            return bad("replicas must be >= 2".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad(format!("burn_in_fraction {} is outside [0, 1)", self.burn_in_fraction));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if let DynamicConfig::Mdp { path, inline, random, .. } = &self.dynamic {
            let count = [path.is_some(), inline.is_some(), random.is_some()]
                .iter()
                .filter(|b| **b)
                .count();
            if count != 1 {
                return bad("dynamic: give exactly one of path, inline or random".into());
            }
        }
        let is_mdp = matches!(self.dynamic, DynamicConfig::Mdp { .. });
        match self.kind {
            ExperimentKind::QExperiment if !is_mdp => bad("q-experiment needs an mdp dynamic".into()),
            ExperimentKind::Coupling | ExperimentKind::W2Convergence if is_mdp => {
                bad(format!("{} needs an additive-noise dynamic", self.kind.tag()))
            }
            ExperimentKind::Coupling if self.coupling.is_none() => bad("coupling runs need a [coupling] section".into()),
            ExperimentKind::W2Convergence if self.w2.is_none() => bad("w2-convergence runs need a [w2] section".into()),
            ExperimentKind::RrCompare | ExperimentKind::QExperiment
                if self.stepsizes.iter().any(|a| 2.0 * a >= 1.0) =>
            {
                bad("Richardson-Romberg needs 2 alpha < 1 for every stepsize".into())
            }
            _ => Ok(()),
        }?;
        if let Some(c) = &self.coupling {
            if c.ratio_k == 0 || c.stride == 0 || c.shared_steps == 0 {
                return bad("coupling: ratio_k, stride and shared_steps must be >= 1".into());
            }
            if !(0.0..1.0).contains(&c.tail_fraction) {
                return bad("coupling: tail_fraction must lie in [0, 1)".into());
            }
        }
        if let Some(w) = &self.w2 {
            if w.checkpoints.iter().any(|c| *c > self.steps) {
                return bad("w2: checkpoints must not exceed steps".into());
            }
        }
        Ok(())
    }
}

/// Additive-noise dynamic built from a config.
pub struct AdditiveSetup {
    pub op: OperatorSpec<f64>,
    pub noise: NoiseSpec<f64>,
    pub theta0: Vec<f64>,
}

/// Q-learning dynamic built from a config.
pub struct MdpSetup {
    pub mdp: Mdp<f64>,
    pub mode: QModeConfig,
    pub reward_law: RewardLaw,
    pub q0: Vec<f64>,
}

pub enum Setup {
    Additive(AdditiveSetup),
    Mdp(MdpSetup),
}

impl DynamicConfig {
    pub fn build(&self, seed: u64) -> Result<Setup> {
        let check_start = |theta0: &[f64], d: usize| {
            if theta0.len() == d {
                Ok(())
            } else {
                Err(Error::Config(format!("theta0 has length {}, expected {d}", theta0.len())))
            }
        };
        let additive = |op: OperatorSpec<f64>, noise: &NoiseConfig, theta0: &[f64]| -> Result<Setup> {
            check_start(theta0, op.dim())?;
            let noise = noise.build(op.dim())?;
            Ok(Setup::Additive(AdditiveSetup {
                op,
                noise,
                theta0: theta0.to_vec(),
            }))
        };
        match self {
            DynamicConfig::Linear { a, b, norm, theta0, noise } => {
                additive(OperatorSpec::linear(a.clone(), b.clone(), *norm)?, noise, theta0)
            }
            DynamicConfig::ScaledAbs { b, theta0, noise } => additive(OperatorSpec::scaled_abs_1d(*b), noise, theta0),
            DynamicConfig::LogCosh { theta0, noise } => additive(OperatorSpec::log_cosh_1d(), noise, theta0),
            DynamicConfig::MaxAffine {
                scale,
                pieces,
                theta0,
                noise,
            } => {
                let pieces = pieces
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|p| AffinePiece {
                                weights: p.weights.clone(),
                                offset: p.offset,
                            })
                            .collect()
                    })
                    .collect();
                additive(OperatorSpec::max_affine(*scale, pieces)?, noise, theta0)
            }
            DynamicConfig::Mdp {
                path,
                inline,
                random,
                type_a,
                mode,
                reward_law,
                q0,
            } => {
                let source = MdpSource {
                    path: path.as_deref(),
                    inline: inline.as_deref(),
                    random: random.as_ref(),
                };
                let base = source.load(seed)?;
                let mdp = if *type_a { make_type_a(&base)? } else { base };
                let q0 = vec![*q0; mdp.n_pairs()];
                Ok(Setup::Mdp(MdpSetup {
                    mdp,
                    mode: *mode,
                    reward_law: *reward_law,
                    q0,
                }))
            }
        }
    }
}

impl MdpSource<'_> {
    pub fn load(&self, seed: u64) -> Result<Mdp<f64>> {
        if let Some(text) = self.inline {
            return Mdp::from_text(text);
        }
        if let Some(path) = self.path {
            return Mdp::from_text(&std::fs::read_to_string(path)?);
        }
        if let Some(r) = self.random {
            let mut stream = RngStream::with_path(seed, &[MDP_STREAM_TAG]);
            return random_mdp(&mut stream, r.n_states, r.n_actions, r.gamma, r.reward_noise_std);
        }
        Err(Error::Config("mdp dynamic has no source".into()))
    }
}
