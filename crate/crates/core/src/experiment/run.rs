use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    empirical_w2_1d, empirical_w2_assignment, estimate_bias, BiasReport, BiasSettings, Dynamic, W2Estimate,
};
use crate::experiment::config::{AdditiveSetup, CouplingConfig, ExperimentConfig, ExperimentKind, MdpSetup, QModeConfig, Setup, W2Config};
use crate::mdp::{classify, gamma0, solve_q_star, Classification, DEFAULT_Q_TOL, DEFAULT_TIE_TOL};
use crate::qlearning::{QLearner, QMode};
use crate::rng::RngStream;
use crate::sa::{coupled_shared_noise, coupled_stepsize_ratio, drive_chain, independent_stepsize_pair};

const BIAS_TAG: u64 = 1;
const SHARED_TAG: u64 = 2;
const RATIO_TAG: u64 = 3;
const INDEPENDENT_TAG: u64 = 4;
const W2_TAG: u64 = 5;

/// Classification and fixed point of the MDP behind a Q-learning run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MdpSummary {
    pub q_star: Vec<f64>,
    pub classification: Classification,
    pub gamma0: f64,
    pub mode: QModeConfig,
}

/// Cross-replica mean and standard error of a squared distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
}

fn mean_se(xs: impl Iterator<Item = f64>) -> MeanSe {
    let xs: Vec<f64> = xs.collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    MeanSe {
        mean,
        stderr: (var / n).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingEntry {
    pub alpha: f64,
    /// Shared-noise coupling, indexed by step.
    pub shared: Vec<MeanSe>,
    /// `shared[0].mean * (1 - alpha (1 - sqrt(gamma)))^t`.
    pub bound: Vec<f64>,
    /// Stepsize-ratio coupling, indexed by slow step.
    pub ratio: Vec<MeanSe>,
    pub independent: Vec<MeanSe>,
    /// First slow step included in the long-run averages.
    pub tail_start: usize,
    /// Per-replica tail mean of the stepsize-ratio distance, pooled across replicas.
    pub ratio_longrun: MeanSe,
    pub independent_longrun: MeanSe,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    pub ratio_k: usize,
    pub modulus: f64,
    pub entries: Vec<CouplingEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct W2Row {
    pub alpha: f64,
    pub comparison: &'static str,
    pub step: usize,
    pub w2: f64,
    pub method: &'static str,
    pub n: usize,
}

/// Everything a run produced. `files` holds the data outputs keyed by file
/// name; the manifest is built separately because it carries wall time.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub files: BTreeMap<String, Vec<u8>>,
    pub bias: Option<BiasReport>,
    pub mdp: Option<MdpSummary>,
    pub coupling: Option<CouplingReport>,
    pub w2: Option<Vec<W2Row>>,
    pub threads: usize,
    pub wall_time_seconds: f64,
}

impl RunArtifacts {
    pub fn manifest(&self) -> serde_json::Value {
        let mut outputs: Vec<&str> = self.files.keys().map(String::as_str).collect();
        outputs.push("manifest.json");
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "kind": self.config.kind.tag(),
            "seed": self.config.seed,
            "threads": self.threads,
            "wall_time_seconds": self.wall_time_seconds,
            "outputs": outputs,
            "config": self.config,
        })
    }

    /// Writes every data file plus manifest.json into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }
}

/// Runs one experiment on a dedicated pool of `threads` workers. Outputs are
/// assembled in (stepsize, replica) order and do not depend on `threads`.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<RunArtifacts> {
    config.validate()?;
    let threads = threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let start = Instant::now();
    let mut artifacts = pool.install(|| run_inner(config))?;
    artifacts.threads = threads;
    artifacts.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(artifacts)
}

fn run_inner(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let setup = config.dynamic.build(config.seed)?;
    let mut artifacts = RunArtifacts {
        config: config.clone(),
        files: BTreeMap::new(),
        bias: None,
        mdp: None,
        coupling: None,
        w2: None,
        threads: 1,
        wall_time_seconds: 0.0,
    };
    match config.kind {
        ExperimentKind::BiasSweep | ExperimentKind::RrCompare | ExperimentKind::QExperiment => {
            let rr = config.kind != ExperimentKind::BiasSweep;
            let (report, mdp) = bias_sweep(config, &setup, rr)?;
            let mut csv = Vec::new();
            report.write_csv(&mut csv)?;
            let mut summary = report.summary_json();
            summary["kind"] = config.kind.tag().into();
            if let Some(name) = &config.name {
                summary["name"] = name.as_str().into();
            }
            if let Some(m) = &mdp {
                summary["mdp"] = serde_json::json!({
                    "type": m.classification.mdp_type.to_string(),
                    "classification": m.classification,
                    "gamma0": m.gamma0,
                    "q_star": m.q_star,
                    "mode": m.mode,
                });
            }
            artifacts.files.insert("bias.csv".into(), csv);
            artifacts.files.insert("slope.json".into(), json_bytes(&summary));
            artifacts.bias = Some(report);
            artifacts.mdp = mdp;
        }
        ExperimentKind::Coupling => {
            let Setup::Additive(s) = &setup else { unreachable!("validated") };
            let c = config.coupling.as_ref().expect("validated");
            let report = coupling(config, s, c)?;
            artifacts.files.insert("coupling.csv".into(), coupling_csv(&report, c.stride)?);
            artifacts.coupling = Some(report);
        }
        ExperimentKind::W2Convergence => {
            let Setup::Additive(s) = &setup else { unreachable!("validated") };
            let w = config.w2.as_ref().expect("validated");
            let rows = w2_convergence(config, s, w)?;
            let mut csv = Vec::new();
            writeln!(csv, "alpha,comparison,step,w2,method,n")?;
            for r in &rows {
                writeln!(csv, "{},{},{},{},{},{}", r.alpha, r.comparison, r.step, r.w2, r.method, r.n)?;
            }
            artifacts.files.insert("w2.csv".into(), csv);
            artifacts.w2 = Some(rows);
        }
    }
    Ok(artifacts)
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(v).expect("summary serializes");
    text.push('\n');
    text.into_bytes()
}

fn bias_sweep(config: &ExperimentConfig, setup: &Setup, rr: bool) -> Result<(BiasReport, Option<MdpSummary>)> {
    let settings = BiasSettings {
        replicas: config.replicas,
        steps: config.steps,
        k0_fraction: config.burn_in_fraction,
        rr_beta: rr.then_some(config.beta),
    };
    let root = RngStream::with_path(config.seed, &[BIAS_TAG]);
    let sweep = |dynamic: &Dynamic<'_, f64>| -> Result<BiasReport> {
        let entries = config
            .stepsizes
            .iter()
            .enumerate()
            .map(|(i, a)| estimate_bias(dynamic, *a, &settings, &root.split(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BiasReport::new(dynamic.norm(), entries))
    };
    match setup {
        Setup::Additive(s) => {
            if s.op.fixed_point().is_none() {
                return Err(Error::Config("bias sweeps need an operator with a known fixed point".into()));
            }
            let dynamic = Dynamic::Additive {
                op: &s.op,
                noise: &s.noise,
                theta0: s.theta0.clone(),
            };
            Ok((sweep(&dynamic)?, None))
        }
        Setup::Mdp(MdpSetup {
            mdp,
            mode,
            reward_law,
            q0,
        }) => {
            let q_star = solve_q_star(mdp, DEFAULT_Q_TOL, None)?;
            let classification = classify(mdp, &q_star, DEFAULT_TIE_TOL)?;
            let qmode = match mode {
                QModeConfig::Synchronous => QMode::Synchronous,
                QModeConfig::Asynchronous => QMode::Asynchronous,
            };
            let learner = QLearner::new(mdp, qmode)?.with_reward_law(*reward_law);
            let g0 = gamma0(mdp, &learner.expected_weights())?;
            let dynamic = Dynamic::QLearning {
                learner,
                q0: q0.clone(),
                q_star: q_star.clone(),
            };
            let report = sweep(&dynamic)?;
            Ok((
                report,
                Some(MdpSummary {
                    q_star,
                    classification,
                    gamma0: g0,
                    mode: *mode,
                }),
            ))
        }
    }
}

fn fixed_point(s: &AdditiveSetup) -> Result<Vec<f64>> {
    s.op
        .fixed_point()
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::Config("this experiment needs an operator with a known fixed point".into()))
}

/// Runs `f(r)` for every replica in parallel and returns the results in
/// replica order; the first failing replica determines the error.
fn per_replica<T: Send>(replicas: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..replicas)
        .into_par_iter()
        .map(|r| f(r).map_err(|e| e.in_replica(r)))
        .collect();
    results.into_iter().collect()
}

fn columns(runs: &[Vec<f64>]) -> Vec<MeanSe> {
    (0..runs[0].len()).map(|t| mean_se(runs.iter().map(|r| r[t]))).collect()
}

fn coupling(config: &ExperimentConfig, s: &AdditiveSetup, c: &CouplingConfig) -> Result<CouplingReport> {
    let theta_star = fixed_point(s)?;
    if c.theta0_b.len() != s.op.dim() {
        return Err(Error::Config("coupling.theta0_b has the wrong dimension".into()));
    }
    let gamma = s.op.modulus();
    let shared_root = RngStream::with_path(config.seed, &[SHARED_TAG]);
    let ratio_root = RngStream::with_path(config.seed, &[RATIO_TAG]);
    let indep_root = RngStream::with_path(config.seed, &[INDEPENDENT_TAG]);
    let tail_start = (c.tail_fraction * config.steps as f64).floor() as usize;
    let tail_mean = |d: &[f64]| d[tail_start..].iter().sum::<f64>() / (d.len() - tail_start) as f64;

    let mut entries = Vec::with_capacity(config.stepsizes.len());
    for (i, &alpha) in config.stepsizes.iter().enumerate() {
        let i = i as u64;
        let shared = per_replica(config.replicas, |r| {
            let mut st = shared_root.split(i).split(r as u64);
            coupled_shared_noise(&s.theta0, &c.theta0_b, alpha, c.shared_steps, &s.op, &s.noise, &mut st)
        })?;
        let ratio = per_replica(config.replicas, |r| {
            let mut st = ratio_root.split(i).split(r as u64);
            coupled_stepsize_ratio(alpha, c.ratio_k, config.steps, &s.op, &s.noise, &mut st, &theta_star)
        })?;
        let independent = per_replica(config.replicas, |r| {
            let base = indep_root.split(i).split(r as u64);
            let (mut slow, mut fast) = (base.split(0), base.split(1));
            independent_stepsize_pair(alpha, c.ratio_k, config.steps, &s.op, &s.noise, &mut slow, &mut fast, &theta_star)
        })?;
        let shared = columns(&shared);
        let rate = 1.0 - alpha * (1.0 - gamma.sqrt());
        let bound = (0..shared.len()).map(|t| shared[0].mean * rate.powi(t as i32)).collect();
        entries.push(CouplingEntry {
            alpha,
            ratio_longrun: mean_se(ratio.iter().map(|d| tail_mean(d))),
            independent_longrun: mean_se(independent.iter().map(|d| tail_mean(d))),
            shared,
            bound,
            ratio: columns(&ratio),
            independent: columns(&independent),
            tail_start,
        });
    }
    Ok(CouplingReport {
        ratio_k: c.ratio_k,
        modulus: gamma,
        entries,
    })
}

/// `alpha,kind,step,mean_sq_distance,stderr,bound`; `bound` is empty except
/// for shared-noise rows. Long-run rows carry the first pooled step.
fn coupling_csv(report: &CouplingReport, stride: usize) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    writeln!(w, "alpha,kind,step,mean_sq_distance,stderr,bound")?;
    for e in &report.entries {
        for (t, m) in e.shared.iter().enumerate().step_by(stride) {
            writeln!(w, "{},shared_noise,{t},{},{},{}", e.alpha, m.mean, m.stderr, e.bound[t])?;
        }
        for (kind, rows) in [("stepsize_ratio", &e.ratio), ("stepsize_ratio_independent", &e.independent)] {
            for (t, m) in rows.iter().enumerate().step_by(stride) {
                writeln!(w, "{},{kind},{t},{},{},", e.alpha, m.mean, m.stderr)?;
            }
        }
        for (kind, m) in [
            ("stepsize_ratio_longrun", e.ratio_longrun),
            ("stepsize_ratio_independent_longrun", e.independent_longrun),
        ] {
            writeln!(w, "{},{kind},{},{},{},", e.alpha, e.tail_start, m.mean, m.stderr)?;
        }
    }
    Ok(w)
}

fn w2_between(xs: &[Vec<f64>], ys: &[Vec<f64>], cap: usize) -> Result<W2Estimate<f64>> {
    if xs[0].len() == 1 {
        let a: Vec<f64> = xs.iter().map(|v| v[0]).collect();
        let b: Vec<f64> = ys.iter().map(|v| v[0]).collect();
        empirical_w2_1d(&a, &b)
    } else {
        empirical_w2_assignment(xs, ys, crate::norm::Norm::L2, Some(cap))
    }
}

/// Rescaled samples `(theta - theta*) / sqrt(alpha)` across replicas. Compares
/// the law at each checkpoint with the final (approximately stationary) law
/// of an independent replica set, the two final laws with each other, and the
/// final law with that of the smallest stepsize.
fn w2_convergence(config: &ExperimentConfig, s: &AdditiveSetup, w: &W2Config) -> Result<Vec<W2Row>> {
    let theta_star = fixed_point(s)?;
    let root = RngStream::with_path(config.seed, &[W2_TAG]);
    let mut checkpoints = w.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let mut finals: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut rows = Vec::new();
    for (i, &alpha) in config.stepsizes.iter().enumerate() {
        let root_sa = alpha.sqrt();
        let rescale = |x: &[f64]| -> Vec<f64> { x.iter().zip(&theta_star).map(|(v, t)| (v - t) / root_sa).collect() };
        let run_set = |set: u64| {
            per_replica(config.replicas, |r| {
                let mut st = root.split(i as u64).split(set).split(r as u64);
                let mut at_checkpoints = Vec::with_capacity(checkpoints.len());
                let mut last = Vec::new();
                drive_chain(&s.theta0, alpha, config.steps, &s.op, &s.noise, &mut st, |t, x| {
                    if checkpoints.binary_search(&t).is_ok() {
                        at_checkpoints.push(rescale(x));
                    }
                    if t == config.steps {
                        last = rescale(x);
                    }
                })?;
                Ok((at_checkpoints, last))
            })
        };
        let a = run_set(0)?;
        let b = run_set(1)?;
        let b_final: Vec<Vec<f64>> = b.into_iter().map(|(_, l)| l).collect();
        for (c_idx, &t) in checkpoints.iter().enumerate() {
            let xs: Vec<Vec<f64>> = a.iter().map(|(cp, _)| cp[c_idx].clone()).collect();
            let est = w2_between(&xs, &b_final, w.assignment_cap)?;
            rows.push(row(alpha, "to_stationary", t, &est));
        }
        let a_final: Vec<Vec<f64>> = a.into_iter().map(|(_, l)| l).collect();
        let est = w2_between(&a_final, &b_final, w.assignment_cap)?;
        rows.push(row(alpha, "stationary_noise_floor", config.steps, &est));
        finals.push(b_final);
    }
    let ref_idx = (0..config.stepsizes.len())
        .min_by(|a, b| config.stepsizes[*a].total_cmp(&config.stepsizes[*b]))
        .expect("validated non-empty");
    for (i, &alpha) in config.stepsizes.iter().enumerate() {
        if i == ref_idx {
            continue;
        }
        let est = w2_between(&finals[i], &finals[ref_idx], w.assignment_cap)?;
        rows.push(row(alpha, "to_smallest_stepsize", config.steps, &est));
    }
    Ok(rows)
}

fn row(alpha: f64, comparison: &'static str, step: usize, est: &W2Estimate<f64>) -> W2Row {
    W2Row {
        alpha,
        comparison,
        step,
        w2: est.value,
        method: est.method.tag(),
        n: est.n_x,
    }
}
