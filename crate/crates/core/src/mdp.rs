//! Finite discounted MDPs, the weighted optimal Bellman operator and the
//! tied/rooted state classification.
//!
//! State-action pairs are flattened as `sa = s * n_actions + a`. The
//! transition matrix is `(|S||A|) x |S|`, row-major.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::norm::Norm;
use crate::rng::RngStream;
use crate::Scalar;

/// Default absolute tolerance when deciding whether two optimal Q-values tie.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// Accuracy `q*` is solved to before classification.
pub const DEFAULT_Q_TOL: f64 = 1e-12;
/// A state is rooted when no state-action pair reaches it with probability above this.
pub const ROOTED_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp<F> {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<F>,
    rewards: Vec<F>,
    gamma: F,
    reward_noise_std: F,
    behavior: Vec<F>,
    // f64 copies used by the samplers.
    transitions_f64: Vec<f64>,
    behavior_f64: Vec<f64>,
}

fn prob_tol<F: Scalar>(n: usize) -> F {
    F::lit(1e-9).max(F::epsilon() * F::from_usize_lossy(4 * n.max(1)))
}

fn check_simplex<F: Scalar>(p: &[F], what: &str) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= F::zero())) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: F = p.iter().copied().sum();
    if (total - F::one()).abs() > prob_tol::<F>(p.len()) {
        return Err(Error::invalid(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

impl<F: Scalar> Mdp<F> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<F>,
        rewards: Vec<F>,
        gamma: F,
        reward_noise_std: F,
        behavior: Option<Vec<F>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("an MDP needs at least one state and one action"));
        }
        let n_sa = n_states * n_actions;
        if transitions.len() != n_sa * n_states {
            return Err(Error::invalid(format!(
                "transition matrix has {} entries, expected {}x{}",
                transitions.len(),
                n_sa,
                n_states
            )));
        }
        for (sa, row) in transitions.chunks_exact(n_states).enumerate() {
            check_simplex(row, &format!("transition row {sa}"))?;
        }
        if rewards.len() != n_sa || rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid(format!(
                "expected {n_sa} finite expected rewards, got {}",
                rewards.len()
            )));
        }
        if !(gamma >= F::zero() && gamma < F::one()) {
            return Err(Error::invalid(format!("discount {gamma} must lie in [0, 1)")));
        }
        if !(reward_noise_std >= F::zero() && reward_noise_std.is_finite()) {
            return Err(Error::invalid("reward noise std must be finite and nonnegative"));
        }
        let behavior = behavior.unwrap_or_else(|| vec![F::one() / F::from_usize_lossy(n_sa); n_sa]);
        if behavior.len() != n_sa {
            return Err(Error::invalid(format!(
                "behavior distribution has {} entries, expected {n_sa}",
                behavior.len()
            )));
        }
        check_simplex(&behavior, "behavior distribution")?;
        let transitions_f64 = transitions.iter().map(|x| x.as_f64()).collect();
        let behavior_f64 = behavior.iter().map(|x| x.as_f64()).collect();
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            reward_noise_std,
            behavior,
            transitions_f64,
            behavior_f64,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn reward_noise_std(&self) -> F {
        self.reward_noise_std
    }

    pub fn transitions(&self) -> &[F] {
        &self.transitions
    }

    pub fn transition_row(&self, sa: usize) -> &[F] {
        &self.transitions[sa * self.n_states..(sa + 1) * self.n_states]
    }

    pub fn rewards(&self) -> &[F] {
        &self.rewards
    }

    pub fn behavior(&self) -> &[F] {
        &self.behavior
    }

    /// True when every entry of the behavior distribution is positive, as
    /// asynchronous sampling requires.
    pub fn behavior_has_full_support(&self) -> bool {
        self.behavior.iter().all(|p| *p > F::zero())
    }

    pub(crate) fn transition_row_f64(&self, sa: usize) -> &[f64] {
        &self.transitions_f64[sa * self.n_states..(sa + 1) * self.n_states]
    }

    pub(crate) fn behavior_f64(&self) -> &[f64] {
        &self.behavior_f64
    }

    pub fn with_reward_noise_std(&self, std: F) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.clone(),
            self.gamma,
            std,
            Some(self.behavior.clone()),
        )
    }

    /// Copy with every expected reward shifted by `c`.
    pub fn with_reward_shift(&self, c: F) -> Self {
        let mut out = self.clone();
        out.rewards.iter_mut().for_each(|r| *r = *r + c);
        out
    }

    /// Plain-text serialization: a header line
    /// `n_states n_actions gamma reward_noise_std`, one line per transition
    /// row, then the expected rewards and the behavior distribution on one
    /// line each. Numbers use shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |xs: &[F]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "# sabias mdp: header, transition rows, expected rewards, behavior");
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.n_states, self.n_actions, self.gamma, self.reward_noise_std
        );
        for row in self.transitions.chunks_exact(self.n_states) {
            let _ = writeln!(out, "{}", join(row));
        }
        let _ = writeln!(out, "{}", join(&self.rewards));
        let _ = writeln!(out, "{}", join(&self.behavior));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next_line = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: text.lines().count() + 1,
                message: format!("unexpected end of input, expected {what}"),
            })
        };

        let (hline, header) = next_line("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: hline,
                message: "header must be `n_states n_actions gamma reward_noise_std`".into(),
            });
        }
        let n_states: usize = parse_field(fields[0], hline, "n_states")?;
        let n_actions: usize = parse_field(fields[1], hline, "n_actions")?;
        let gamma: F = parse_field(fields[2], hline, "gamma")?;
        let std: F = parse_field(fields[3], hline, "reward_noise_std")?;
        let n_sa = n_states
            .checked_mul(n_actions)
            .filter(|n| *n > 0)
            .ok_or(Error::Parse {
                line: hline,
                message: "state and action counts must be positive".into(),
            })?;

        let mut transitions = Vec::with_capacity(n_sa * n_states);
        for sa in 0..n_sa {
            let (ln, l) = next_line(&format!("transition row {sa}"))?;
            transitions.extend(parse_row::<F>(l, ln, n_states, "transition row")?);
        }
        let (ln, l) = next_line("expected rewards")?;
        let rewards = parse_row::<F>(l, ln, n_sa, "reward vector")?;
        let (ln, l) = next_line("behavior distribution")?;
        let behavior = parse_row::<F>(l, ln, n_sa, "behavior distribution")?;
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln,
                message: "trailing content after behavior distribution".into(),
            });
        }
        Self::new(n_states, n_actions, transitions, rewards, gamma, std, Some(behavior))
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from `{s}`"),
    })
}

fn parse_row<F: Scalar>(l: &str, line: usize, n: usize, what: &str) -> Result<Vec<F>> {
    let row: Vec<F> = l
        .split_whitespace()
        .map(|x| parse_field(x, line, what))
        .collect::<Result<_>>()?;
    if row.len() != n {
        return Err(Error::Parse {
            line,
            message: format!("{what} has {} entries, expected {n}", row.len()),
        });
    }
    Ok(row)
}

/// Per-state maximum `f_s(q) = max_a q(s, a)`.
pub fn state_max<F: Scalar>(q: &[F], n_actions: usize) -> Vec<F> {
    q.chunks_exact(n_actions)
        .map(|row| row.iter().copied().fold(F::neg_infinity(), F::max))
        .collect()
}

/// `H(q) = gamma D P f(q) + (I - D) q + D r` with `D = diag(d_diag)`.
pub fn bellman_apply<F: Scalar>(q: &[F], mdp: &Mdp<F>, d_diag: &[F]) -> Result<Vec<F>> {
    let n_sa = mdp.n_pairs();
    if q.len() != n_sa || d_diag.len() != n_sa {
        return Err(Error::invalid(format!(
            "expected vectors of length {n_sa}, got q {} and D {}",
            q.len(),
            d_diag.len()
        )));
    }
    if d_diag.iter().any(|d| !(*d > F::zero() && *d <= F::one())) {
        return Err(Error::invalid("diagonal weights must lie in (0, 1]"));
    }
    let f = state_max(q, mdp.n_actions());
    Ok(bellman_with_values(q, mdp, d_diag, &f))
}

fn bellman_with_values<F: Scalar>(q: &[F], mdp: &Mdp<F>, d_diag: &[F], f: &[F]) -> Vec<F> {
    (0..mdp.n_pairs())
        .map(|sa| {
            let pf: F = mdp.transition_row(sa).iter().zip(f).map(|(p, v)| *p * *v).sum();
            let d = d_diag[sa];
            d * (mdp.gamma() * pf + mdp.rewards()[sa]) + (F::one() - d) * q[sa]
        })
        .collect()
}

/// Synchronous optimal Bellman operator (`D = I`).
pub fn bellman_optimal<F: Scalar>(q: &[F], mdp: &Mdp<F>) -> Vec<F> {
    let f = state_max(q, mdp.n_actions());
    (0..mdp.n_pairs())
        .map(|sa| {
            let pf: F = mdp.transition_row(sa).iter().zip(&f).map(|(p, v)| *p * *v).sum();
            mdp.gamma() * pf + mdp.rewards()[sa]
        })
        .collect()
}

/// Sweep cap `ceil(log(tol (1 - gamma) / r0) / log gamma) + 64`, where `r0`
/// is the residual of the first iterate.
pub fn default_max_iters<F: Scalar>(gamma: F, tol: F, initial_residual: F) -> usize {
    let slack = 64;
    if gamma <= F::zero() || initial_residual <= F::zero() {
        return slack;
    }
    let ratio = (tol * (F::one() - gamma) / initial_residual).ln() / gamma.ln();
    let base = ratio.ceil().max(F::zero()).to_usize().unwrap_or(usize::MAX - slack);
    base.saturating_add(slack)
}

/// Value iteration from `q = 0` until `||H(q) - q||_inf <= tol (1 - gamma) / gamma`.
pub fn solve_q_star<F: Scalar>(mdp: &Mdp<F>, tol: F, max_iters: Option<usize>) -> Result<Vec<F>> {
    if !(tol > F::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let gamma = mdp.gamma();
    let threshold = if gamma > F::zero() {
        tol * (F::one() - gamma) / gamma
    } else {
        F::infinity()
    };
    let mut q = bellman_optimal(&vec![F::zero(); mdp.n_pairs()], mdp);
    let mut hq = bellman_optimal(&q, mdp);
    let mut residual = Norm::LInf.dist(&hq, &q);
    let cap = max_iters.unwrap_or_else(|| default_max_iters(gamma, tol, residual));
    for _ in 0..cap {
        if residual <= threshold {
            return Ok(q);
        }
        q = hq;
        hq = bellman_optimal(&q, mdp);
        residual = Norm::LInf.dist(&hq, &q);
    }
    if residual <= threshold {
        return Ok(q);
    }
    Err(Error::NonConvergence {
        iterations: cap,
        residual: residual.as_f64(),
    })
}

/// `gamma_0 = 1 - (1 - gamma) min_i D_ii`.
pub fn gamma0<F: Scalar>(mdp: &Mdp<F>, d_diag: &[F]) -> Result<F> {
    if d_diag.is_empty() || d_diag.iter().any(|d| !(*d > F::zero() && *d <= F::one())) {
        return Err(Error::invalid("diagonal weights must be non-empty and lie in (0, 1]"));
    }
    let min = d_diag.iter().copied().fold(F::infinity(), F::min);
    Ok(F::one() - (F::one() - mdp.gamma()) * min)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateClass {
    pub tied: bool,
    pub rooted: bool,
    pub optimal_actions: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum MdpType {
    /// Some state is tied and not rooted; `witness` is the first such state.
    TypeA { witness: usize },
    TypeB,
}

impl std::fmt::Display for MdpType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MdpType::TypeA { witness } => write!(f, "TypeA (witness: state {witness})"),
            MdpType::TypeB => f.write_str("TypeB"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub states: Vec<StateClass>,
    pub mdp_type: MdpType,
}

pub fn classify<F: Scalar>(mdp: &Mdp<F>, q_star: &[F], tie_tol: F) -> Result<Classification> {
    if !(tie_tol > F::zero()) {
        return Err(Error::invalid("tie tolerance must be positive"));
    }
    if q_star.len() != mdp.n_pairs() {
        return Err(Error::invalid("q* has the wrong length"));
    }
    let ns = mdp.n_states();
    let rooted_tol = F::lit(ROOTED_TOL);
    let states: Vec<StateClass> = (0..ns)
        .map(|s| {
            let row = &q_star[s * mdp.n_actions()..(s + 1) * mdp.n_actions()];
            let best = row.iter().copied().fold(F::neg_infinity(), F::max);
            let optimal_actions: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| best - **v <= tie_tol)
                .map(|(a, _)| a)
                .collect();
            let max_in = (0..mdp.n_pairs())
                .map(|sa| mdp.transition_row(sa)[s])
                .fold(F::zero(), F::max);
            StateClass {
                tied: optimal_actions.len() > 1,
                rooted: max_in <= rooted_tol,
                optimal_actions,
            }
        })
        .collect();
    let mdp_type = states
        .iter()
        .position(|c| c.tied && !c.rooted)
        .map_or(MdpType::TypeB, |witness| MdpType::TypeA { witness });
    Ok(Classification { states, mdp_type })
}

/// Random MDP: transition rows from Dirichlet(1), expected rewards uniform on
/// `[0, 1]`, uniform behavior distribution. Rows are drawn first, in pair
/// order, then the rewards.
pub fn random_mdp<F: Scalar>(
    stream: &mut RngStream,
    n_states: usize,
    n_actions: usize,
    gamma: F,
    reward_noise_std: F,
) -> Result<Mdp<F>> {
    let n_sa = n_states * n_actions;
    let ones = vec![1.0; n_states];
    let mut transitions = Vec::with_capacity(n_sa * n_states);
    for _ in 0..n_sa {
        transitions.extend(stream.dirichlet(&ones)?.into_iter().map(F::lit));
    }
    let rewards = (0..n_sa).map(|_| F::lit(stream.uniform())).collect();
    Mdp::new(n_states, n_actions, transitions, rewards, gamma, reward_noise_std, None)
}

/// Copies the transition row and expected reward of `(0, 0)` onto `(0, 1)`,
/// so state 0 has two optimal actions with identical Q-values.
pub fn make_type_a<F: Scalar>(mdp: &Mdp<F>) -> Result<Mdp<F>> {
    if mdp.n_actions() < 2 {
        return Err(Error::invalid("making a tie needs at least two actions"));
    }
    let ns = mdp.n_states();
    let mut transitions = mdp.transitions().to_vec();
    let row0: Vec<F> = mdp.transition_row(0).to_vec();
    transitions[ns..2 * ns].copy_from_slice(&row0);
    let mut rewards = mdp.rewards().to_vec();
    rewards[1] = rewards[0];
    Mdp::new(
        ns,
        mdp.n_actions(),
        transitions,
        rewards,
        mdp.gamma(),
        mdp.reward_noise_std(),
        Some(mdp.behavior().to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_mdp(gamma: f64) -> Mdp<f64> {
        // state 0 -> state 1, state 1 absorbing; one action.
        Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], gamma, 0.0, None).unwrap()
    }

    #[test]
    fn bellman_examples() {
        let m = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.9, 0.0, None).unwrap();
        assert_eq!(bellman_apply(&[0.0], &m, &[1.0]).unwrap(), vec![1.0]);

        let mut s = RngStream::new(1);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.0, 0.1).unwrap();
        let q = [5.0, -1.0, 2.0, 0.3, 9.0, 4.0];
        assert_eq!(bellman_apply(&q, &m, &[1.0; 6]).unwrap(), m.rewards().to_vec());
    }

    #[test]
    fn bellman_rejects_bad_input() {
        let m = chain_mdp(0.5);
        assert!(bellman_apply(&[0.0], &m, &[1.0, 1.0]).is_err());
        assert!(bellman_apply(&[0.0, 0.0], &m, &[1.0, 0.0]).is_err());
        assert!(bellman_apply(&[0.0, 0.0], &m, &[1.5, 1.0]).is_err());
    }

    #[test]
    fn q_star_fixed_point_under_any_weights() {
        let mut s = RngStream::new(2);
        let m = random_mdp::<f64>(&mut s, 4, 3, 0.9, 0.5).unwrap();
        let q = solve_q_star(&m, 1e-12, None).unwrap();
        let d: Vec<f64> = (0..12).map(|i| 0.1 + 0.07 * i as f64).collect();
        let hq = bellman_apply(&q, &m, &d).unwrap();
        assert!(Norm::LInf.dist(&hq, &q) < 1e-11);
    }

    #[test]
    fn q_star_examples() {
        let single = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.9, 0.0, None).unwrap();
        let q = solve_q_star(&single, 1e-12, None).unwrap();
        assert!((q[0] - 10.0f64).abs() <= 1e-12 / 0.9);

        let mut s = RngStream::new(3);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.0, 0.1).unwrap();
        assert_eq!(solve_q_star(&m, 1e-12, None).unwrap(), m.rewards().to_vec());

        let q = solve_q_star(&chain_mdp(0.5), 1e-12, None).unwrap();
        assert!((q[0] - 1.0f64).abs() < 1e-12 && q[1].abs() < 1e-12);
    }

    #[test]
    fn q_star_errors() {
        // Self-loop with reward 1: the residual shrinks only by 0.99 per sweep.
        let m = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.99, 0.0, None).unwrap();
        assert!(matches!(
            solve_q_star(&m, 1e-12, Some(3)),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
        assert!(solve_q_star(&m, 0.0, None).is_err());
    }

    #[test]
    fn residual_contracts_each_sweep() {
        let mut s = RngStream::new(4);
        let m = random_mdp::<f64>(&mut s, 5, 3, 0.95, 0.0).unwrap();
        let mut q = vec![0.0; 15];
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let hq = bellman_optimal(&q, &m);
            let r = Norm::LInf.dist(&hq, &q);
            assert!(r <= 0.95 * prev + 1e-12);
            prev = r;
            q = hq;
        }
    }

    #[test]
    fn max_iters_formula() {
        // log(1e-12 * 0.1 / 1) / log 0.9 = 284.1 -> 285 + 64.
        assert_eq!(default_max_iters(0.9, 1e-12, 1.0), 285 + 64);
        assert_eq!(default_max_iters(0.0, 1e-12, 1.0), 64);
    }

    #[test]
    fn gamma0_examples() {
        let m = chain_mdp(0.9);
        assert_eq!(gamma0(&m, &[1.0, 1.0]).unwrap(), 0.9);
        assert!((gamma0(&m, &[0.5, 1.0]).unwrap() - 0.95).abs() < 1e-15);
        assert!(gamma0(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn weighted_operator_contracts_with_gamma0() {
        let mut s = RngStream::new(5);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.0).unwrap();
        let d: Vec<f64> = (0..6).map(|_| 0.05 + 0.95 * s.uniform()).collect();
        let g0 = gamma0(&m, &d).unwrap();
        for _ in 0..2000 {
            let q: Vec<f64> = (0..6).map(|_| 5.0 * s.standard_normal()).collect();
            let p: Vec<f64> = (0..6).map(|_| 5.0 * s.standard_normal()).collect();
            let lhs = Norm::LInf.dist(&bellman_apply(&q, &m, &d).unwrap(), &bellman_apply(&p, &m, &d).unwrap());
            assert!(lhs <= g0 * Norm::LInf.dist(&q, &p) + 1e-12);
        }
    }

    #[test]
    fn random_mdp_shape() {
        let mut s = RngStream::new(6);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.3f64.sqrt()).unwrap();
        assert_eq!((m.n_states(), m.n_actions(), m.n_pairs()), (3, 2, 6));
        for sa in 0..6 {
            assert!((m.transition_row(sa).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(m.rewards().iter().all(|r| (0.0..=1.0).contains(r)));
        assert!((m.reward_noise_std().powi(2) - 0.3).abs() < 1e-15);
        assert!(m.behavior().iter().all(|p| (*p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn random_mdps_are_type_b_and_tied_copies_type_a() {
        let mut s = RngStream::new(7);
        for _ in 0..50 {
            let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.5).unwrap();
            let q = solve_q_star(&m, DEFAULT_Q_TOL, None).unwrap();
            assert_eq!(classify(&m, &q, DEFAULT_TIE_TOL).unwrap().mdp_type, MdpType::TypeB);

            let a = make_type_a(&m).unwrap();
            let qa = solve_q_star(&a, DEFAULT_Q_TOL, None).unwrap();
            assert_eq!(qa[0], qa[1]);
            let c = classify(&a, &qa, DEFAULT_TIE_TOL).unwrap();
            // Dirichlet rows are strictly positive, so state 0 is reachable.
            assert!((0..6).any(|sa| a.transition_row(sa)[0] > 0.0));
            assert_eq!(c.mdp_type, MdpType::TypeA { witness: 0 });
            assert!(c.states[0].tied && !c.states[0].rooted);
        }
    }

    #[test]
    fn make_type_a_idempotent_and_validated() {
        let mut s = RngStream::new(8);
        let m = random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.5).unwrap();
        let once = make_type_a(&m).unwrap();
        assert_eq!(make_type_a(&once).unwrap(), once);
        assert_eq!(once.transition_row(1), once.transition_row(0));
        assert_eq!(once.rewards()[1], once.rewards()[0]);
        let single = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.9, 0.0, None).unwrap();
        assert!(make_type_a(&single).is_err());
    }

    #[test]
    fn single_state_type_a_self_loop() {
        let mut s = RngStream::new(9);
        let m = make_type_a(&random_mdp::<f64>(&mut s, 1, 3, 0.9, 0.5).unwrap()).unwrap();
        assert!(m.transition_row(0)[0] > 0.0);
        let q = solve_q_star(&m, DEFAULT_Q_TOL, None).unwrap();
        let c = classify(&m, &q, DEFAULT_TIE_TOL).unwrap();
        // Action 2 may beat the tied pair; the tie matters only when it is optimal.
        if q[0] >= q[2] {
            assert_eq!(c.mdp_type, MdpType::TypeA { witness: 0 });
        }
    }

    #[test]
    fn tied_rooted_state_is_type_b() {
        // State 2 has two identical actions but nothing ever transitions into it.
        let p = vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.3, 0.7, 0.0, //
            1.0, 0.0, 0.0, //
            0.5, 0.5, 0.0, //
            0.5, 0.5, 0.0, //
        ];
        let r = vec![1.0, 0.2, 0.0, 0.5, 0.4, 0.4];
        let m = Mdp::new(3, 2, p, r, 0.9, 0.1, None).unwrap();
        let q = solve_q_star(&m, DEFAULT_Q_TOL, None).unwrap();
        let c = classify(&m, &q, DEFAULT_TIE_TOL).unwrap();
        assert!(c.states[2].tied && c.states[2].rooted);
        assert_eq!(c.states[2].optimal_actions, vec![0, 1]);
        assert_eq!(c.mdp_type, MdpType::TypeB);
        assert!(classify(&m, &q, 0.0).is_err());
    }

    #[test]
    fn single_action_is_type_b() {
        let m = chain_mdp(0.5);
        let q = solve_q_star(&m, DEFAULT_Q_TOL, None).unwrap();
        let c = classify(&m, &q, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(c.mdp_type, MdpType::TypeB);
        assert!(c.states[0].rooted && !c.states[1].rooted);
    }

    #[test]
    fn classification_invariant_to_reward_shift() {
        let mut s = RngStream::new(10);
        for _ in 0..20 {
            let m = make_type_a(&random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.5).unwrap()).unwrap();
            let q = solve_q_star(&m, DEFAULT_Q_TOL, None).unwrap();
            let shifted = m.with_reward_shift(2.5);
            let qs = solve_q_star(&shifted, DEFAULT_Q_TOL, None).unwrap();
            for (a, b) in q.iter().zip(&qs) {
                assert!((b - a - 25.0).abs() < 1e-9);
            }
            assert_eq!(
                classify(&m, &q, DEFAULT_TIE_TOL).unwrap(),
                classify(&shifted, &qs, DEFAULT_TIE_TOL).unwrap()
            );
        }
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let mut s = RngStream::new(11);
        let m = make_type_a(&random_mdp::<f64>(&mut s, 3, 2, 0.9, 0.3f64.sqrt()).unwrap()).unwrap();
        let back = Mdp::<f64>::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());

        let err = Mdp::<f64>::from_text("1 1 0.9 0\n0.5\n1\n1\n").unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "{err:?}");
        let err = Mdp::<f64>::from_text("1 1 0.9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Mdp::<f64>::from_text("# c\n1 2 0.9 0\n1\nx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
        let err = Mdp::<f64>::from_text("1 1 0.9 0\n1\n1\n1\n1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }));
    }

    #[test]
    fn f32_mdp_roundtrip() {
        let mut s = RngStream::new(12);
        let m = random_mdp::<f32>(&mut s, 2, 2, 0.8, 0.5).unwrap();
        assert_eq!(Mdp::<f32>::from_text(&m.to_text()).unwrap(), m);
        let q = solve_q_star(&m, 1e-4, None).unwrap();
        assert!(Norm::LInf.dist(&bellman_optimal(&q, &m), &q) < 1e-4);
    }
}
