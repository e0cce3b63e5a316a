//! Splittable, counter-addressed random streams.
//!
//! A stream is identified by a master seed and a path of split keys. The
//! output word at position `counter` is a pure function of
//! `(seed, path, counter)`: the pair `(seed, path)` is hashed into a ChaCha8
//! key and `counter` addresses the keystream in 64-bit words. Replica `r` of
//! experiment `e` is always `RngStream::with_path(seed, &[e, r])`, so results
//! never depend on which worker thread ran which replica.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const INV_2_POW_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Tolerance on `sum(probs) - 1` accepted by [`RngStream::categorical`].
pub const PROB_SUM_TOL: f64 = 1e-9;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut h = mix64(seed.wrapping_add(GOLDEN_GAMMA));
    for (depth, &k) in path.iter().enumerate() {
        let salted = k.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN_GAMMA));
        h = mix64(h ^ mix64(salted));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let word = mix64(h.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN_GAMMA)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    key
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    counter: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_path(seed, &[])
    }

    pub fn with_path(seed: u64, path: &[u64]) -> Self {
        Self {
            seed,
            path: path.to_vec(),
            counter: 0,
            core: ChaCha8Rng::from_seed(derive_key(seed, path)),
        }
    }

    /// Child stream with `key` appended to the path, positioned at counter 0.
    pub fn split(&self, key: u64) -> Self {
        let mut path = self.path.clone();
        path.push(key);
        Self::with_path(self.seed, &path)
    }

    /// Repositions the stream so the next word drawn is word `counter`.
    pub fn at_counter(mut self, counter: u64) -> Self {
        self.core.set_word_pos(u128::from(counter) * 2);
        self.counter = counter;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.counter += 1;
        self.core.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits. One word.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * INV_2_POW_53
    }

    /// Uniform on `(0, 1]`. One word.
    #[inline]
    pub fn uniform_open_low(&mut self) -> f64 {
        ((self.next_word() >> 11) + 1) as f64 * INV_2_POW_53
    }

    /// Standard normal draw by the cosine branch of Box-Muller:
    /// `sqrt(-2 ln u1) * cos(2 pi u2)` with `u1` in `(0, 1]` and `u2` in
    /// `[0, 1)`. Always consumes exactly two words; the sine branch is
    /// discarded so the stream position stays a function of the draw count.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `+1` or `-1` with equal probability. One word.
    #[inline]
    pub fn rademacher(&mut self) -> f64 {
        if self.next_word() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Draw from Dirichlet(concentration) via normalized Gamma variates.
    pub fn dirichlet(&mut self, concentration: &[f64]) -> Result<Vec<f64>> {
        if concentration.is_empty() {
            return Err(Error::invalid("dirichlet concentration is empty"));
        }
        if let Some(c) = concentration.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid(format!(
                "dirichlet concentration entries must be positive, got {c}"
            )));
        }
        if concentration.len() == 1 {
            return Ok(vec![1.0]);
        }
        let mut draws = Vec::with_capacity(concentration.len());
        for &c in concentration {
            let gamma = Gamma::new(c, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            draws.push(gamma.sample(self));
        }
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            draws.iter_mut().for_each(|x| *x /= total);
        } else {
            // Every Gamma variate underflowed (tiny concentrations); the
            // distribution is then concentrated on a vertex.
            let idx = (self.uniform() * draws.len() as f64) as usize;
            draws.iter_mut().for_each(|x| *x = 0.0);
            draws[idx.min(concentration.len() - 1)] = 1.0;
        }
        Ok(draws)
    }

    /// Index `i` with probability `probs[i]`.
    pub fn categorical(&mut self, probs: &[f64]) -> Result<usize> {
        validate_probabilities(probs, PROB_SUM_TOL)?;
        Ok(self.categorical_unchecked(probs))
    }

    /// Inverse-CDF categorical draw for an already validated vector. One word.
    /// Zero-probability entries are never returned.
    #[inline]
    pub(crate) fn categorical_unchecked(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last_positive = i;
                if u < cum {
                    return i;
                }
            }
        }
        last_positive
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

pub(crate) fn validate_probabilities(probs: &[f64], tol: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("probability vector is empty"));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::invalid(format!(
            "probability entries must be finite and nonnegative, got {p}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::invalid(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}
