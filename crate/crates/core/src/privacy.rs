//! Noise sources, privacy-budget accounting, and the sparse vector mechanism.
//!
//! All logarithms are natural. Noise scales returned by [`gaussian_sigma`] are
//! standard deviations.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

/// Gaussian tail constant `a = ln 2 / (2π)`: `P[|Y| > t] ≤ 2 exp(-a t²/s²)`
/// for `Y ~ N(0, s²)`.
pub const GAUSSIAN_TAIL_A: f64 = std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrivacyError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("sparse vector already halted; no further queries are answered")]
    Halted,
}

fn param(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), PrivacyError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(PrivacyError::InvalidParameter { name, value, reason })
    }
}

/// Split a total `(epsilon, delta)` budget evenly over `rounds` adaptive
/// Gaussian releases using advanced composition.
///
/// Returns `(ε′, δ′)` with `ε′ = ε / √(8T ln(2/δ))` and `δ′ = δ / (2T)`. Both
/// values are nudged down by at most a few ulps so that the ledger identities
/// `√(8T ln(2/δ))·ε′ ≤ ε` and `2T·δ′ ≤ δ` hold in floating point, not just
/// in exact arithmetic.
pub fn per_round_budget(epsilon: f64, delta: f64, rounds: u64) -> Result<(f64, f64), PrivacyError> {
    param("epsilon", epsilon, epsilon > 0.0, "must be positive")?;
    param("delta", delta, delta > 0.0 && delta < 0.5, "must lie in (0, 1/2)")?;
    if rounds == 0 {
        return Err(PrivacyError::InvalidParameter { name: "rounds", value: 0.0, reason: "must be at least 1" });
    }
    let t = rounds as f64;
    let scale = composition_scale(delta, rounds);
    let mut eps_prime = epsilon / scale;
    while scale * eps_prime > epsilon {
        eps_prime = eps_prime.next_down();
    }
    let mut delta_prime = delta / (2.0 * t);
    while 2.0 * t * delta_prime > delta {
        delta_prime = delta_prime.next_down();
    }
    Ok((eps_prime, delta_prime))
}

/// `√(8T ln(2/δ))`, the factor relating total and per-round epsilon.
pub fn composition_scale(delta: f64, rounds: u64) -> f64 {
    (8.0 * rounds as f64 * (2.0 / delta).ln()).sqrt()
}

/// Smallest Gaussian standard deviation making a release with ℓ₂ sensitivity
/// `sensitivity` `(ε′, δ′)`-differentially private: `√(2 ln(1.25/δ′))·Δ₂/ε′`.
pub fn gaussian_sigma(sensitivity: f64, epsilon_prime: f64, delta_prime: f64) -> Result<f64, PrivacyError> {
    param("sensitivity", sensitivity, sensitivity >= 0.0, "must be nonnegative")?;
    param("epsilon_prime", epsilon_prime, epsilon_prime > 0.0, "must be positive")?;
    param("delta_prime", delta_prime, delta_prime > 0.0 && delta_prime < 1.0, "must lie in (0, 1)")?;
    Ok((2.0 * (1.25 / delta_prime).ln()).sqrt() * sensitivity / epsilon_prime)
}

/// One draw from `N(0, std²)`. `std = 0` returns exactly zero without
/// touching the stream.
pub fn sample_gaussian(std: f64, rng: &mut Stream) -> Result<f64, PrivacyError> {
    param("std", std, std >= 0.0, "must be nonnegative")?;
    if std == 0.0 {
        return Ok(0.0);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(std * z)
}

/// One draw from the centered Laplace distribution with the given scale.
pub fn sample_laplace(scale: f64, rng: &mut Stream) -> Result<f64, PrivacyError> {
    param("scale", scale, scale >= 0.0, "must be nonnegative")?;
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Inverse CDF on u ∈ (-1/2, 1/2); the open interval avoids ln(0).
    let u: f64 = loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u != -0.5 {
            break u;
        }
    };
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// Accuracy of the sparse vector mechanism: with probability `1 - β` it
/// answers ⊥ on every query at least `α` below threshold and halts on the
/// first query at least `α` above, for `α = 8(ln k + ln(2/β))/ε`.
pub fn sv_accuracy_bound(epsilon: f64, queries: u64, beta: f64) -> Result<f64, PrivacyError> {
    param("epsilon", epsilon, epsilon > 0.0, "must be positive")?;
    param("beta", beta, beta > 0.0 && beta < 1.0, "must lie in (0, 1)")?;
    if queries == 0 {
        return Err(PrivacyError::InvalidParameter { name: "queries", value: 0.0, reason: "must be at least 1" });
    }
    Ok(8.0 * ((queries as f64).ln() + (2.0 / beta).ln()) / epsilon)
}

/// Answer of a sparse vector query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    /// ⊥: the query is (noisily) below threshold.
    Below,
    /// ⊤: the query reached the threshold; the mechanism has halted.
    Above,
}

/// Above-threshold detector. Answers ⊥ until a noisy query reaches the
/// noisy threshold, answers ⊤ once, and then refuses further queries.
#[derive(Debug, Clone)]
pub struct SparseVector {
    epsilon: f64,
    threshold: f64,
    noisy_threshold: f64,
    halted: bool,
    noise_disabled: bool,
    queries: u64,
    rng: Stream,
}

impl SparseVector {
    /// Draws the threshold noise `Lap(2/ε)` immediately from `rng`.
    pub fn new(epsilon: f64, threshold: f64, mut rng: Stream) -> Result<Self, PrivacyError> {
        param("epsilon", epsilon, epsilon > 0.0, "must be positive")?;
        param("threshold", threshold, true, "must be finite")?;
        let noisy_threshold = threshold + sample_laplace(2.0 / epsilon, &mut rng)?;
        Ok(SparseVector { epsilon, threshold, noisy_threshold, halted: false, noise_disabled: false, queries: 0, rng })
    }

    /// Exact comparisons against the raw threshold; for testing the flag logic.
    pub fn noiseless(epsilon: f64, threshold: f64, rng: Stream) -> Result<Self, PrivacyError> {
        param("epsilon", epsilon, epsilon > 0.0, "must be positive")?;
        param("threshold", threshold, true, "must be finite")?;
        Ok(SparseVector {
            epsilon,
            threshold,
            noisy_threshold: threshold,
            halted: false,
            noise_disabled: true,
            queries: 0,
            rng,
        })
    }

    pub fn query(&mut self, q: f64) -> Result<Flag, PrivacyError> {
        if self.halted {
            return Err(PrivacyError::Halted);
        }
        self.queries += 1;
        let noise = if self.noise_disabled { 0.0 } else { sample_laplace(4.0 / self.epsilon, &mut self.rng)? };
        if q + noise >= self.noisy_threshold {
            self.halted = true;
            Ok(Flag::Above)
        } else {
            Ok(Flag::Below)
        }
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }
}

/// One mechanism's share of the total budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

/// Append-only record of how a run spent its privacy budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total_epsilon: f64,
    pub total_delta: f64,
    pub per_round_epsilon: f64,
    pub per_round_delta: f64,
    pub rounds: u64,
    pub rounds_overridden: bool,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(
        total_epsilon: f64,
        total_delta: f64,
        per_round_epsilon: f64,
        per_round_delta: f64,
        rounds: u64,
        rounds_overridden: bool,
    ) -> Self {
        BudgetLedger {
            total_epsilon,
            total_delta,
            per_round_epsilon,
            per_round_delta,
            rounds,
            rounds_overridden,
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, label: impl Into<String>, epsilon: f64, delta: f64) {
        self.entries.push(LedgerEntry { label: label.into(), epsilon, delta });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Composition identities for the per-round split and the entry totals.
    pub fn is_within_budget(&self) -> bool {
        let composed_eps = composition_scale(self.total_delta, self.rounds) * self.per_round_epsilon;
        let composed_delta = 2.0 * self.rounds as f64 * self.per_round_delta;
        let spent_eps: f64 = self.entries.iter().map(|e| e.epsilon).sum();
        let spent_delta: f64 = self.entries.iter().map(|e| e.delta).sum();
        composed_eps <= self.total_epsilon
            && composed_delta <= self.total_delta
            && spent_eps <= self.total_epsilon * (1.0 + 1e-12)
            && spent_delta <= self.total_delta * (1.0 + 1e-12)
    }
}
