//! Projected online gradient steps over the dual box `[0, box_hi]^k`, and
//! regret measurement.
//!
//! Sign convention: the vectors fed to [`step`] are coupling gradients
//! `g = Σc − b`, and the dual iterate moves *along* them (`λ + η·g`), raising
//! prices on violated constraints. The dual player is the minimizer of the
//! Lagrangian, so its linear loss in round `t` is `⟨λ, −g_t⟩`; regret is
//! measured against that loss.

use serde::{Deserialize, Serialize};

use crate::privacy::GAUSSIAN_TAIL_A;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OgdError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty history")]
    EmptyHistory,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdConfig {
    pub eta: f64,
    pub box_hi: f64,
    pub k: usize,
    /// Per-coordinate bound on the true gradients.
    pub loss_bound: f64,
    pub horizon: u64,
}

impl OgdConfig {
    pub fn validate(&self) -> Result<(), OgdError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(OgdError::Config("eta must be positive"));
        }
        if !(self.box_hi > 0.0 && self.box_hi.is_finite()) {
            return Err(OgdError::Config("box_hi must be positive"));
        }
        if self.k == 0 {
            return Err(OgdError::Config("k must be at least 1"));
        }
        Ok(())
    }

    /// ℓ₂ diameter bound of the dual box, `box_hi·√k`.
    pub fn action_norm(&self) -> f64 {
        self.box_hi * (self.k as f64).sqrt()
    }
}

/// Clamp every coordinate to `[0, box_hi]`.
pub fn project_box(lambda: &[f64], box_hi: f64) -> Vec<f64> {
    lambda.iter().map(|&l| l.clamp(0.0, box_hi.max(0.0))).collect()
}

/// `λ′ = Π(λ + η·g)`.
pub fn step(lambda: &[f64], gradient: &[f64], config: &OgdConfig) -> Result<Vec<f64>, OgdError> {
    if lambda.len() != config.k {
        return Err(OgdError::Dimension { expected: config.k, got: lambda.len() });
    }
    if gradient.len() != config.k {
        return Err(OgdError::Dimension { expected: config.k, got: gradient.len() });
    }
    let moved: Vec<f64> = lambda.iter().zip(gradient).map(|(&l, &g)| l + config.eta * g).collect();
    Ok(project_box(&moved, config.box_hi))
}

/// Per-round record of a run of the dual player.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OgdHistory {
    pub box_hi: f64,
    pub iterates: Vec<Vec<f64>>,
    pub true_gradients: Vec<Vec<f64>>,
    pub noisy_gradients: Vec<Vec<f64>>,
}

impl OgdHistory {
    pub fn new(box_hi: f64) -> Self {
        OgdHistory { box_hi, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn push(&mut self, iterate: Vec<f64>, true_gradient: Vec<f64>, noisy_gradient: Vec<f64>) {
        self.iterates.push(iterate);
        self.true_gradients.push(true_gradient);
        self.noisy_gradients.push(noisy_gradient);
    }

    /// Mean of the recorded iterates.
    pub fn mean_iterate(&self) -> Vec<f64> {
        let Some(first) = self.iterates.first() else {
            return Vec::new();
        };
        let mut sum = vec![0.0; first.len()];
        for it in &self.iterates {
            for (s, v) in sum.iter_mut().zip(it) {
                *s += v;
            }
        }
        let t = self.iterates.len() as f64;
        sum.iter().map(|s| s / t).collect()
    }
}

/// Stateful dual player: plays the current iterate, then observes a gradient.
#[derive(Debug, Clone)]
pub struct OnlineGradientDescent {
    config: OgdConfig,
    current: Vec<f64>,
    history: OgdHistory,
}

impl OnlineGradientDescent {
    /// Starts at `λ = 0`.
    pub fn new(config: OgdConfig) -> Result<Self, OgdError> {
        config.validate()?;
        Ok(OnlineGradientDescent { current: vec![0.0; config.k], history: OgdHistory::new(config.box_hi), config })
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn config(&self) -> &OgdConfig {
        &self.config
    }

    /// Record the round played at the current iterate and advance.
    pub fn observe(&mut self, true_gradient: Vec<f64>, noisy_gradient: Vec<f64>) -> Result<(), OgdError> {
        if true_gradient.len() != self.config.k {
            return Err(OgdError::Dimension { expected: self.config.k, got: true_gradient.len() });
        }
        let next = step(&self.current, &noisy_gradient, &self.config)?;
        let played = std::mem::replace(&mut self.current, next);
        self.history.push(played, true_gradient, noisy_gradient);
        Ok(())
    }

    pub fn history(&self) -> &OgdHistory {
        &self.history
    }

    pub fn into_history(self) -> OgdHistory {
        self.history
    }
}

/// Average regret of the recorded iterates against the best fixed point of
/// the box, measured on the *true* gradients. The inner optimum is solved
/// coordinatewise: `box_hi` where the summed gradient is positive, else 0.
pub fn empirical_regret(history: &OgdHistory) -> Result<f64, OgdError> {
    if history.is_empty() {
        return Err(OgdError::EmptyHistory);
    }
    let k = history.iterates[0].len();
    let t = history.len() as f64;
    let mut played = 0.0;
    let mut summed = vec![0.0; k];
    for (lambda, g) in history.iterates.iter().zip(&history.true_gradients) {
        if lambda.len() != k {
            return Err(OgdError::Dimension { expected: k, got: lambda.len() });
        }
        if g.len() != k {
            return Err(OgdError::Dimension { expected: k, got: g.len() });
        }
        played += lambda.iter().zip(g).map(|(l, x)| l * x).sum::<f64>();
        for (s, x) in summed.iter_mut().zip(g) {
            *s += x;
        }
    }
    let best: f64 = summed.iter().map(|&s| history.box_hi * s.max(0.0)).sum();
    Ok((best - played) / t)
}

/// High-probability regret bound for noisy projected gradient descent with
/// per-coordinate Gaussian noise of standard deviation `noise_std`:
/// `(‖P‖√k/√T)·(X + 2σ√(ln(2Tk/β)/a))`, `‖P‖ = box_hi·√k`.
pub fn regret_bound(config: &OgdConfig, noise_std: f64, beta: f64) -> f64 {
    let k = config.k as f64;
    let t = config.horizon as f64;
    config.action_norm() * k.sqrt() / t.sqrt() * noisy_loss_bound(config, noise_std, beta)
}

/// Per-coordinate high-probability bound on the noisy gradients:
/// `X + 2σ√(ln(2Tk/β)/a)`.
fn noisy_loss_bound(config: &OgdConfig, noise_std: f64, beta: f64) -> f64 {
    if noise_std > 0.0 {
        let tk = config.horizon as f64 * config.k as f64;
        config.loss_bound + 2.0 * noise_std * ((2.0 * tk / beta).ln() / GAUSSIAN_TAIL_A).sqrt()
    } else {
        config.loss_bound
    }
}

/// Regret bound for the step size actually configured:
/// `‖P‖²/(2ηT) + η‖X̂‖²/2` with `‖X̂‖ = √k·(X + 2σ√(ln(2Tk/β)/a))`.
///
/// This equals [`regret_bound`] when `η` is the balancing step and exceeds it
/// otherwise.
pub fn regret_bound_at_step(config: &OgdConfig, noise_std: f64, beta: f64) -> f64 {
    let p = config.action_norm();
    let x = noisy_loss_bound(config, noise_std, beta) * (config.k as f64).sqrt();
    p * p / (2.0 * config.eta * config.horizon as f64) + config.eta * x * x / 2.0
}

/// Noiseless regret guarantee `‖P‖²/(2ηT) + η‖X‖²/2`, `‖X‖ = X√k`.
pub fn zinkevich_bound(config: &OgdConfig) -> f64 {
    let p = config.action_norm();
    let x = config.loss_bound * (config.k as f64).sqrt();
    p * p / (2.0 * config.eta * config.horizon as f64) + config.eta * x * x / 2.0
}

/// The step size minimizing [`regret_bound_at_step`]: `‖P‖ / (√T·‖X̂‖)`.
pub fn balanced_step_size(box_hi: f64, k: usize, loss_bound: f64, noise_std: f64, horizon: u64, beta: f64) -> f64 {
    let config = OgdConfig { eta: 1.0, box_hi, k, loss_bound, horizon };
    let x_hat = (k as f64).sqrt() * noisy_loss_bound(&config, noise_std, beta);
    config.action_norm() / ((horizon as f64).sqrt() * x_hat)
}
