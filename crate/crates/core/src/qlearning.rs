//! Constant-stepsize Q-learning
//! `q_{t+1} = q_t + alpha D_t (gamma P_t f(q_t) - q_t + r_t)`.
//!
//! Synchronous mode updates every state-action pair with one sampled next
//! state and reward each; asynchronous mode draws a single pair from the
//! behavior distribution and updates only that entry. `GeneralDpr` takes the
//! random triple `(D_t, P_t, r_t)` from a caller-supplied sampler and applies
//! the recursion literally.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{state_max, Mdp};
use crate::rng::RngStream;
use crate::sa::{guard, Trajectory};
use crate::Scalar;

/// Distribution of an observed reward around its mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardLaw {
    /// `N(r(s,a), sigma^2)`. Two words per draw.
    #[default]
    Gaussian,
    /// Uniform on `r(s,a) +- sqrt(3) sigma`: bounded, same variance. One word per draw.
    UniformMatched,
    /// Gaussian clipped to `[min r - 5 sigma, max r + 5 sigma]`. Two words per draw.
    ClippedGaussian,
}

impl RewardLaw {
    #[inline]
    pub(crate) fn draw<F: Scalar>(self, mdp: &Mdp<F>, sa: usize, stream: &mut RngStream) -> F {
        let mean = mdp.rewards()[sa];
        let std = mdp.reward_noise_std();
        match self {
            RewardLaw::Gaussian => mean + std * F::lit(stream.standard_normal()),
            RewardLaw::UniformMatched => {
                let u = F::lit(2.0 * stream.uniform() - 1.0);
                mean + std * F::lit(3f64.sqrt()) * u
            }
            RewardLaw::ClippedGaussian => {
                let (lo, hi) = clip_range(mdp);
                (mean + std * F::lit(stream.standard_normal())).max(lo).min(hi)
            }
        }
    }
}

fn clip_range<F: Scalar>(mdp: &Mdp<F>) -> (F, F) {
    let five = F::lit(5.0) * mdp.reward_noise_std();
    let lo = mdp.rewards().iter().copied().fold(F::infinity(), F::min);
    let hi = mdp.rewards().iter().copied().fold(F::neg_infinity(), F::max);
    (lo - five, hi + five)
}

/// Sup-norm radius that iterates cannot leave when rewards are clipped and
/// `alpha <= 1`: each update is a convex combination of `q` and
/// `r + gamma max q`, so `max(||q0||, R / (1 - gamma))` is invariant.
pub fn clipped_iterate_radius<F: Scalar>(mdp: &Mdp<F>, q0: &[F]) -> F {
    let (lo, hi) = clip_range(mdp);
    let r = lo.abs().max(hi.abs());
    let q0_sup = q0.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    q0_sup.max(r / (F::one() - mdp.gamma()))
}

/// One draw of the random triple `(D_t, P_t, r_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DprDraw<F> {
    pub d_diag: Vec<F>,
    /// `(|S||A|) x |S|`, row-major.
    pub transitions: Vec<F>,
    pub rewards: Vec<F>,
}

impl<F: Scalar> DprDraw<F> {
    pub fn zeros(mdp: &Mdp<F>) -> Self {
        Self {
            d_diag: vec![F::zero(); mdp.n_pairs()],
            transitions: vec![F::zero(); mdp.n_pairs() * mdp.n_states()],
            rewards: vec![F::zero(); mdp.n_pairs()],
        }
    }
}

/// Source of `(D_t, P_t, r_t)` for [`QMode::GeneralDpr`].
pub trait DprSampler<F>: Send + Sync {
    fn sample(&self, mdp: &Mdp<F>, reward: RewardLaw, stream: &mut RngStream, out: &mut DprDraw<F>);

    /// Diagonal of `E[D_t]`.
    fn expected_weights(&self, mdp: &Mdp<F>) -> Vec<F>;
}

/// `D_t = I` with one multinomial next state per row. Consumes the stream in
/// the same order as [`QMode::Synchronous`], so matched seeds give identical
/// trajectories.
#[derive(Clone, Copy, Debug, Default)]
pub struct SynchronousDpr;

impl<F: Scalar> DprSampler<F> for SynchronousDpr {
    fn sample(&self, mdp: &Mdp<F>, reward: RewardLaw, stream: &mut RngStream, out: &mut DprDraw<F>) {
        let ns = mdp.n_states();
        out.d_diag.iter_mut().for_each(|d| *d = F::one());
        out.transitions.iter_mut().for_each(|p| *p = F::zero());
        for sa in 0..mdp.n_pairs() {
            let next = stream.categorical_unchecked(mdp.transition_row_f64(sa));
            out.transitions[sa * ns + next] = F::one();
            out.rewards[sa] = reward.draw(mdp, sa, stream);
        }
    }

    fn expected_weights(&self, mdp: &Mdp<F>) -> Vec<F> {
        vec![F::one(); mdp.n_pairs()]
    }
}

/// Each pair is updated independently with probability `p`, so `E[D_t] = p I`.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliMaskDpr {
    pub p: f64,
}

impl<F: Scalar> DprSampler<F> for BernoulliMaskDpr {
    fn sample(&self, mdp: &Mdp<F>, reward: RewardLaw, stream: &mut RngStream, out: &mut DprDraw<F>) {
        let ns = mdp.n_states();
        out.transitions.iter_mut().for_each(|p| *p = F::zero());
        for sa in 0..mdp.n_pairs() {
            out.d_diag[sa] = if stream.uniform() < self.p { F::one() } else { F::zero() };
            let next = stream.categorical_unchecked(mdp.transition_row_f64(sa));
            out.transitions[sa * ns + next] = F::one();
            out.rewards[sa] = reward.draw(mdp, sa, stream);
        }
    }

    fn expected_weights(&self, mdp: &Mdp<F>) -> Vec<F> {
        vec![F::lit(self.p); mdp.n_pairs()]
    }
}

#[derive(Clone)]
pub enum QMode<F> {
    Synchronous,
    Asynchronous,
    GeneralDpr(Arc<dyn DprSampler<F>>),
}

impl<F> QMode<F> {
    pub fn name(&self) -> &'static str {
        match self {
            QMode::Synchronous => "synchronous",
            QMode::Asynchronous => "asynchronous",
            QMode::GeneralDpr(_) => "general_dpr",
        }
    }
}

impl<F> fmt::Debug for QMode<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pre-drawn randomness for one step, reusable across steps.
#[derive(Clone, Debug)]
pub(crate) enum QSample<F> {
    Sync { next: Vec<usize>, rewards: Vec<F> },
    Async { sa: usize, next: usize, reward: F },
    General(DprDraw<F>),
}

/// Q-learning dynamic over a fixed MDP, sampling mode and reward law.
#[derive(Clone, Debug)]
pub struct QLearner<'a, F> {
    mdp: &'a Mdp<F>,
    mode: QMode<F>,
    reward: RewardLaw,
}

impl<'a, F: Scalar> QLearner<'a, F> {
    pub fn new(mdp: &'a Mdp<F>, mode: QMode<F>) -> Result<Self> {
        if matches!(mode, QMode::Asynchronous) && !mdp.behavior_has_full_support() {
            return Err(Error::invalid(
                "asynchronous Q-learning needs a behavior distribution with full support",
            ));
        }
        Ok(Self {
            mdp,
            mode,
            reward: RewardLaw::Gaussian,
        })
    }

    pub fn with_reward_law(mut self, law: RewardLaw) -> Self {
        self.reward = law;
        self
    }

    pub fn mdp(&self) -> &Mdp<F> {
        self.mdp
    }

    pub fn mode(&self) -> &QMode<F> {
        &self.mode
    }

    pub fn reward_law(&self) -> RewardLaw {
        self.reward
    }

    /// Diagonal of `E[D_t]` for the current mode.
    pub fn expected_weights(&self) -> Vec<F> {
        match &self.mode {
            QMode::Synchronous => vec![F::one(); self.mdp.n_pairs()],
            QMode::Asynchronous => self.mdp.behavior().to_vec(),
            QMode::GeneralDpr(s) => s.expected_weights(self.mdp),
        }
    }

    pub(crate) fn new_sample(&self) -> QSample<F> {
        let n = self.mdp.n_pairs();
        match &self.mode {
            QMode::Synchronous => QSample::Sync {
                next: vec![0; n],
                rewards: vec![F::zero(); n],
            },
            QMode::Asynchronous => QSample::Async {
                sa: 0,
                next: 0,
                reward: F::zero(),
            },
            QMode::GeneralDpr(_) => QSample::General(DprDraw::zeros(self.mdp)),
        }
    }

    pub(crate) fn draw(&self, stream: &mut RngStream, sample: &mut QSample<F>) {
        let mdp = self.mdp;
        match (&self.mode, sample) {
            (QMode::Synchronous, QSample::Sync { next, rewards }) => {
                for sa in 0..mdp.n_pairs() {
                    next[sa] = stream.categorical_unchecked(mdp.transition_row_f64(sa));
                    rewards[sa] = self.reward.draw(mdp, sa, stream);
                }
            }
            (QMode::Asynchronous, QSample::Async { sa, next, reward }) => {
                *sa = stream.categorical_unchecked(mdp.behavior_f64());
                *next = stream.categorical_unchecked(mdp.transition_row_f64(*sa));
                *reward = self.reward.draw(mdp, *sa, stream);
            }
            (QMode::GeneralDpr(sampler), QSample::General(draw)) => {
                sampler.sample(mdp, self.reward, stream, draw);
            }
            _ => unreachable!("sample buffer does not match the sampling mode"),
        }
    }

    /// Writes the updated iterate into `out`; `values` is scratch of length `|S|`.
    pub(crate) fn apply(&self, q: &[F], alpha: F, sample: &QSample<F>, values: &mut Vec<F>, out: &mut [F]) {
        let mdp = self.mdp;
        let gamma = mdp.gamma();
        let na = mdp.n_actions();
        values.clear();
        values.extend(state_max(q, na));
        match sample {
            QSample::Sync { next, rewards } => {
                for sa in 0..q.len() {
                    let target = gamma * values[next[sa]] - q[sa] + rewards[sa];
                    out[sa] = q[sa] + alpha * target;
                }
            }
            QSample::Async { sa, next, reward } => {
                out.copy_from_slice(q);
                out[*sa] = q[*sa] + alpha * (gamma * values[*next] - q[*sa] + *reward);
            }
            QSample::General(draw) => {
                let ns = mdp.n_states();
                for sa in 0..q.len() {
                    let row = &draw.transitions[sa * ns..(sa + 1) * ns];
                    let pf: F = row.iter().zip(values.iter()).map(|(p, v)| *p * *v).sum();
                    out[sa] = q[sa] + alpha * draw.d_diag[sa] * (gamma * pf - q[sa] + draw.rewards[sa]);
                }
            }
        }
    }

    pub fn step(&self, q: &[F], alpha: F, stream: &mut RngStream) -> Result<Vec<F>> {
        let mut chain = QChain::new(self, alpha, q)?;
        let mut sample = self.new_sample();
        self.draw(stream, &mut sample);
        chain.advance(&sample, 1)?;
        Ok(chain.q)
    }

    pub fn run(
        &self,
        q0: &[F],
        alpha: F,
        steps: usize,
        stream: &mut RngStream,
        record_stride: usize,
    ) -> Result<Trajectory<F>> {
        if steps == 0 || record_stride == 0 {
            return Err(Error::invalid("steps and record_stride must be >= 1"));
        }
        let mut chain = QChain::new(self, alpha, q0)?;
        let mut sample = self.new_sample();
        let mut traj = Trajectory::new(alpha, q0.len(), record_stride, steps);
        traj.tag = Some(self.mode.name().to_string());
        traj.push(&chain.q);
        for t in 1..=steps {
            self.draw(stream, &mut sample);
            chain.advance(&sample, t)?;
            if t % record_stride == 0 {
                traj.push(&chain.q);
            }
        }
        Ok(traj)
    }
}

/// Mutable iterate state of one Q-learning chain.
pub(crate) struct QChain<'l, 'a, F> {
    learner: &'l QLearner<'a, F>,
    pub alpha: F,
    pub q: Vec<F>,
    next: Vec<F>,
    values: Vec<F>,
}

impl<'l, 'a, F: Scalar> QChain<'l, 'a, F> {
    pub fn new(learner: &'l QLearner<'a, F>, alpha: F, q0: &[F]) -> Result<Self> {
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(Error::invalid(format!("stepsize {alpha} must lie in (0, 1)")));
        }
        if q0.len() != learner.mdp.n_pairs() {
            return Err(Error::invalid(format!(
                "q has length {}, expected {}",
                q0.len(),
                learner.mdp.n_pairs()
            )));
        }
        Ok(Self {
            learner,
            alpha,
            q: q0.to_vec(),
            next: vec![F::zero(); q0.len()],
            values: Vec::with_capacity(learner.mdp.n_states()),
        })
    }

    #[inline]
    pub fn advance(&mut self, sample: &QSample<F>, step: usize) -> Result<()> {
        self.learner
            .apply(&self.q, self.alpha, sample, &mut self.values, &mut self.next);
        std::mem::swap(&mut self.q, &mut self.next);
        guard(&self.q, self.alpha, step)
    }
}

pub fn q_step<F: Scalar>(
    q: &[F],
    alpha: F,
    mdp: &Mdp<F>,
    mode: QMode<F>,
    stream: &mut RngStream,
) -> Result<Vec<F>> {
    QLearner::new(mdp, mode)?.step(q, alpha, stream)
}

pub fn run_q_chain<F: Scalar>(
    q0: &[F],
    alpha: F,
    steps: usize,
    mdp: &Mdp<F>,
    mode: QMode<F>,
    stream: &mut RngStream,
    record_stride: usize,
) -> Result<Trajectory<F>> {
    QLearner::new(mdp, mode)?.run(q0, alpha, steps, stream, record_stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{bellman_apply, make_type_a, random_mdp, solve_q_star};
    use crate::norm::Norm;

    fn chain_mdp(std: f64) -> Mdp<f64> {
        Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], 0.5, std, None).unwrap()
    }

    fn deterministic_mdp() -> Mdp<f64> {
        // 3 states, 2 actions, one-hot rows.
        let next = [1, 2, 0, 2, 1, 0];
        let mut p = vec![0.0; 18];
        for (sa, n) in next.iter().enumerate() {
            p[sa * 3 + n] = 1.0;
        }
        Mdp::new(3, 2, p, vec![0.1, 0.9, 0.4, 0.2, 0.7, 0.3], 0.8, 0.0, None).unwrap()
    }

    #[test]
    fn noiseless_fixed_point_is_stationary() {
        let m = deterministic_mdp();
        let q = solve_q_star(&m, 1e-13, None).unwrap();
        let next = q_step(&q, 0.3, &m, QMode::Synchronous, &mut RngStream::new(0)).unwrap();
        assert!(Norm::LInf.dist(&next, &q) < 1e-12);
    }

    #[test]
    fn synchronous_hand_step() {
        let m = chain_mdp(0.0);
        let mut s = RngStream::new(1);
        // alpha = 1 is outside (0, 1); use the largest representable step below it
        // and compare against the limit.
        let alpha = 1.0 - 1e-12;
        let q = q_step(&[0.0, 0.0], alpha, &m, QMode::Synchronous, &mut s).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-11 && q[1].abs() < 1e-11);
        assert!(q_step(&[0.0, 0.0], 1.0, &m, QMode::Synchronous, &mut s).is_err());
    }

    #[test]
    fn asynchronous_touches_one_entry() {
        let mut s = RngStream::new(2);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.5).unwrap();
        let learner = QLearner::new(&m, QMode::Asynchronous).unwrap();
        let mut q = vec![1.0; 6];
        for _ in 0..500 {
            let next = learner.step(&q, 0.1, &mut s).unwrap();
            let changed = q.iter().zip(&next).filter(|(a, b)| a != b).count();
            assert!(changed <= 1);
            q = next;
        }
    }

    #[test]
    fn asynchronous_requires_full_support() {
        let m = Mdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.9, 0.1, Some(vec![1.0, 0.0])).unwrap();
        assert!(QLearner::new(&m, QMode::Asynchronous).is_err());
        assert!(QLearner::new(&m, QMode::Synchronous).is_ok());
    }

    #[test]
    fn deterministic_convergence_to_q_star() {
        let m = deterministic_mdp();
        let q_star = solve_q_star(&m, 1e-13, None).unwrap();
        let alpha = 0.05;
        let steps = (10.0 / ((1.0 - m.gamma()) * alpha)) as usize;
        let traj = run_q_chain(&[0.0; 6], alpha, steps, &m, QMode::Synchronous, &mut RngStream::new(3), 1)
            .unwrap();
        assert_eq!(traj.tag.as_deref(), Some("synchronous"));
        // Error contracts by (1 - alpha (1 - gamma)) per step: e^-10 of the start.
        let err0 = Norm::LInf.dist(traj.iterate(0), &q_star);
        let err = Norm::LInf.dist(traj.last().unwrap(), &q_star);
        assert!(err <= err0 * (-10.0f64).exp() * 1.01, "{err}");
    }

    #[test]
    fn general_dpr_matches_synchronous() {
        let mut s = RngStream::new(4);
        let m = make_type_a(&random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.3f64.sqrt()).unwrap()).unwrap();
        let sync = run_q_chain(&[1.0; 6], 0.1, 2000, &m, QMode::Synchronous, &mut RngStream::new(9), 1).unwrap();
        let general = run_q_chain(
            &[1.0; 6],
            0.1,
            2000,
            &m,
            QMode::GeneralDpr(Arc::new(SynchronousDpr)),
            &mut RngStream::new(9),
            1,
        )
        .unwrap();
        for (a, b) in sync.iterates().zip(general.iterates()) {
            assert_eq!(a, b);
        }
    }

    fn check_expectation(learner: &QLearner<f64>, seed: u64) {
        let m = learner.mdp();
        let alpha = 0.2;
        let q: Vec<f64> = (0..m.n_pairs()).map(|i| 3.0 + 0.5 * (i as f64).sin()).collect();
        let expected_d = learner.expected_weights();
        let hq = bellman_apply(&q, m, &expected_d).unwrap();
        let target: Vec<f64> = q.iter().zip(&hq).map(|(x, h)| x + alpha * (h - x)).collect();

        let n = 100_000;
        let mut s = RngStream::new(seed);
        let mut sum = vec![0.0; q.len()];
        let mut sum_sq = vec![0.0; q.len()];
        for _ in 0..n {
            let next = learner.step(&q, alpha, &mut s).unwrap();
            for i in 0..q.len() {
                sum[i] += next[i];
                sum_sq[i] += next[i] * next[i];
            }
        }
        for i in 0..q.len() {
            let mean = sum[i] / n as f64;
            let var = (sum_sq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - target[i]).abs() <= 4.0 * se + 1e-12,
                "{:?} pair {i}: {mean} vs {} (se {se})",
                learner.mode(),
                target[i]
            );
        }
    }

    #[test]
    fn one_step_mean_matches_expected_operator() {
        let mut s = RngStream::new(5);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.3f64.sqrt()).unwrap();
        check_expectation(&QLearner::new(&m, QMode::Synchronous).unwrap(), 10);
        check_expectation(&QLearner::new(&m, QMode::Asynchronous).unwrap(), 11);
        check_expectation(
            &QLearner::new(&m, QMode::GeneralDpr(Arc::new(BernoulliMaskDpr { p: 0.3 }))).unwrap(),
            12,
        );
        check_expectation(
            &QLearner::new(&m, QMode::Synchronous)
                .unwrap()
                .with_reward_law(RewardLaw::UniformMatched),
            13,
        );
    }

    #[test]
    fn uniform_reward_law_matches_variance() {
        let m = chain_mdp(0.7);
        let mut s = RngStream::new(6);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| RewardLaw::UniformMatched.draw(&m, 0, &mut s)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005);
        assert!((var - 0.49).abs() < 0.005, "{var}");
        let bound = 1.0 + 0.7 * 3f64.sqrt();
        assert!(draws.iter().all(|x| (x - 1.0).abs() <= bound - 1.0 + 1e-12));
    }

    #[test]
    fn clipped_rewards_keep_iterates_bounded() {
        let mut s = RngStream::new(7);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 2.0).unwrap();
        let q0 = vec![1.0; 6];
        let radius = clipped_iterate_radius(&m, &q0);
        for alpha in [0.05, 0.2, 0.5] {
            let learner = QLearner::new(&m, QMode::Synchronous)
                .unwrap()
                .with_reward_law(RewardLaw::ClippedGaussian);
            let traj = learner.run(&q0, alpha, 20_000, &mut s, 1).unwrap();
            for q in traj.iterates() {
                assert!(Norm::LInf.of(q) <= radius + 1e-9);
            }
        }
    }

    #[test]
    fn asynchronous_tail_average_near_q_star() {
        let mut s = RngStream::new(8);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.3f64.sqrt()).unwrap();
        let q_star = solve_q_star(&m, 1e-12, None).unwrap();
        let alpha = 0.05;
        let steps = 400_000;
        let traj = run_q_chain(&[1.0; 6], alpha, steps, &m, QMode::Asynchronous, &mut s, 1).unwrap();
        let avg = crate::estimators::tail_average(&traj, traj.len() / 2).unwrap();
        let err = Norm::LInf.dist(&avg, &q_star);
        assert!(err <= alpha.sqrt(), "err {err}");
    }

    #[test]
    fn f32_synchronous_chain_runs() {
        let mut s = RngStream::new(9);
        let m = random_mdp::<f32>(&mut s, 2, 2, 0.8, 0.2).unwrap();
        let traj = run_q_chain(&[0.0f32; 4], 0.1, 1000, &m, QMode::Synchronous, &mut s, 10).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.iterates().all(|q| q.iter().all(|v| v.is_finite())));
    }
}
