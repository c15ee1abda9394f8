//! The private dual decomposition loop.
//!
//! Each round every participant best-responds to the current prices, the
//! coupling gradient `Σc − b` is released with Gaussian noise, and the dual
//! player takes a projected gradient step. The output is the time average of
//! the primal plays and of the prices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    evaluate_coupling, objective, positive_part_sum, AgentId, ModelError, OracleError, Play, PlaySum, PrimalPoint,
    ProgramMetadata, SeparableProgram,
};
use crate::ogd::{empirical_regret, regret_bound_at_step, OgdConfig, OgdError, OgdHistory, OnlineGradientDescent};
use crate::privacy::{gaussian_sigma, per_round_budget, sample_gaussian, BudgetLedger, PrivacyError};
use crate::rng::{substream, Purpose};

/// Refuse to run more rounds than this unless the caller overrides `T`.
pub const MAX_ITERATIONS: u64 = 100_000_000;

/// Below this many participants best responses are computed on the calling
/// thread; thread hand-off would cost more than the oracles.
pub const PARALLEL_MIN_PARTICIPANTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub noise_enabled: bool,
    pub t_override: Option<u64>,
    pub seed: u64,
}

impl SolveConfig {
    pub fn new(epsilon: f64, delta: f64, beta: f64, seed: u64) -> Self {
        SolveConfig { epsilon, delta, beta, noise_enabled: true, t_override: None, seed }
    }

    pub fn without_noise(self) -> Self {
        SolveConfig { noise_enabled: false, ..self }
    }

    pub fn with_iterations(self, t: u64) -> Self {
        SolveConfig { t_override: Some(t), ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SolveConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad =
            |name, value, reason| Err(SolveError::Privacy(PrivacyError::InvalidParameter { name, value, reason }));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", self.epsilon, "must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad("delta", self.delta, "must lie in (0, 1/2)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", self.beta, "must lie in (0, 1)");
        }
        if self.t_override == Some(0) {
            return Err(SolveError::Config("iteration override must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run parameters derived from the metadata and the privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSchedule {
    pub t: u64,
    pub t_overridden: bool,
    pub epsilon_prime: f64,
    pub delta_prime: f64,
    pub eta: f64,
    pub noise_std: f64,
    pub box_hi: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("T = {t} rounds exceeds the limit of {MAX_ITERATIONS}; set an iteration override")]
    HorizonTooLarge { t: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ogd(#[from] OgdError),
    #[error("agent {agent} failed in round {iteration}: {source}")]
    Oracle {
        agent: AgentId,
        iteration: u64,
        source: OracleError,
        /// Dual history up to the failing round.
        partial: Box<OgdHistory>,
    },
}

/// `T = ⌈w²⌉` (or the override), the per-round budget, the Gaussian scale,
/// and the step size `η = 2τ/(√T·(w + ln(Tk/β)/ε′))`. Without noise the
/// `ln(Tk/β)/ε′` term is dropped and the noise scale is zero.
pub fn derive_schedule(metadata: &ProgramMetadata, k: usize, config: &SolveConfig) -> Result<DualSchedule, SolveError> {
    config.validate()?;
    let w = metadata.width;
    if !(w >= 1.0 && w.is_finite()) {
        return Err(PrivacyError::InvalidParameter { name: "width", value: w, reason: "must be at least 1" }.into());
    }
    if !(metadata.tau > 0.0 && metadata.tau.is_finite()) {
        return Err(
            PrivacyError::InvalidParameter { name: "tau", value: metadata.tau, reason: "must be positive" }.into()
        );
    }
    if k == 0 {
        return Err(SolveError::Config("program has no coupling constraints".into()));
    }
    let t = match config.t_override {
        Some(t) => t,
        None => {
            let t = (w * w).ceil();
            if t > MAX_ITERATIONS as f64 {
                return Err(SolveError::HorizonTooLarge { t: t.min(u64::MAX as f64) as u64 });
            }
            t as u64
        }
    };
    let (epsilon_prime, delta_prime) = per_round_budget(config.epsilon, config.delta, t)?;
    let box_hi = 2.0 * metadata.tau;
    let root_t = (t as f64).sqrt();
    let (eta, noise_std) = if config.noise_enabled {
        let noise_std = gaussian_sigma(metadata.sigma, epsilon_prime, delta_prime)?;
        let spread = (t as f64 * k as f64 / config.beta).ln() / epsilon_prime;
        (box_hi / (root_t * (w + spread)), noise_std)
    } else {
        (box_hi / (root_t * w), 0.0)
    };
    Ok(DualSchedule {
        t,
        t_overridden: config.t_override.is_some(),
        epsilon_prime,
        delta_prime,
        eta,
        noise_std,
        box_hi,
    })
}

fn oracle_failure(agent: AgentId, iteration: u64, source: OracleError, partial: OgdHistory) -> SolveError {
    SolveError::Oracle { agent, iteration, source, partial: Box::new(partial) }
}

/// Every participant's best response to `lambda`, in participant order. On
/// failure returns the lowest failing agent id with its error, regardless of
/// how the work was split.
pub fn best_respond_all(program: &SeparableProgram, lambda: &[f64]) -> Result<PrimalPoint, (AgentId, OracleError)> {
    let parts = program.participants();
    let respond =
        |(id, oracle): &(AgentId, &dyn crate::model::AgentOracle)| oracle.best_response(lambda).map_err(|e| (*id, e));
    let results: Vec<Result<Play, (AgentId, OracleError)>> = if parts.len() >= PARALLEL_MIN_PARTICIPANTS {
        parts.par_iter().map(respond).collect()
    } else {
        parts.iter().map(respond).collect()
    };
    let plays = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(PrimalPoint::new(parts.iter().map(|(id, _)| *id).collect(), plays))
}

/// True coupling gradient and its noisy release. Coordinate `j` of round
/// `iteration` draws from its own substream, so the noise does not depend on
/// evaluation order.
pub fn noisy_gradient(
    program: &SeparableProgram,
    point: &PrimalPoint,
    schedule: &DualSchedule,
    seed: u64,
    iteration: u64,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let exact = evaluate_coupling(program, point)?;
    let mut noisy = exact.clone();
    if schedule.noise_std > 0.0 {
        for (j, g) in noisy.iter_mut().enumerate() {
            let mut rng = substream(seed, Purpose::GradientNoise, &[iteration, j as u64]);
            *g += sample_gaussian(schedule.noise_std, &mut rng)?;
        }
    }
    Ok((exact, noisy))
}

/// Accuracy audit of the averaged primal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveAudit {
    pub objective: f64,
    pub violation: f64,
    /// `b_j − Σc_j`; negative entries are violated constraints.
    pub slacks: Vec<f64>,
    /// Average regret of the dual player on the true gradients.
    pub empirical_regret: f64,
}

/// Dual regret bounds for the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBounds {
    /// High-probability bound for the rounds and step size actually used;
    /// the objective gap is at most this and the total violation at most
    /// this divided by `τ`.
    pub rp: f64,
    /// `40√8·kτσ/ε · ln(2w²k/β) · √ln(w²/δ)`, the closed form for `T = w²`.
    pub closed_form: f64,
    /// `τ√k·w/√T`, the noiseless convergence rate.
    pub noiseless: f64,
}

pub fn closed_form_rp(metadata: &ProgramMetadata, k: usize, config: &SolveConfig) -> f64 {
    let kf = k as f64;
    let w2 = metadata.width * metadata.width;
    40.0 * 8f64.sqrt() * kf * metadata.tau * metadata.sigma / config.epsilon
        * (2.0 * w2 * kf / config.beta).ln()
        * (w2 / config.delta).ln().max(0.0).sqrt()
}

pub fn noiseless_rp(metadata: &ProgramMetadata, k: usize, t: u64) -> f64 {
    metadata.tau * (k as f64).sqrt() * metadata.width / (t as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: SolveConfig,
    pub schedule: DualSchedule,
    pub x_bar: PrimalPoint,
    pub lambda_bar: Vec<f64>,
    pub history: OgdHistory,
    pub audit: SolveAudit,
    pub ledger: BudgetLedger,
    pub regret: RegretBounds,
}

impl SolveReport {
    pub fn ogd_config(&self, metadata: &ProgramMetadata) -> OgdConfig {
        OgdConfig {
            eta: self.schedule.eta,
            box_hi: self.schedule.box_hi,
            k: self.lambda_bar.len(),
            loss_bound: metadata.width,
            horizon: self.schedule.t,
        }
    }
}

/// Run the full loop for `T` rounds starting from `λ = 0`.
pub fn run(program: &SeparableProgram, config: &SolveConfig) -> Result<SolveReport, SolveError> {
    if program.b.len() != program.k {
        return Err(ModelError::ConstraintLength { expected: program.k, got: program.b.len() }.into());
    }
    let meta = program.metadata;
    let schedule = derive_schedule(&meta, program.k, config)?;
    let ogd_config = OgdConfig {
        eta: schedule.eta,
        box_hi: schedule.box_hi,
        k: program.k,
        loss_bound: meta.width,
        horizon: schedule.t,
    };
    let mut dual = OnlineGradientDescent::new(ogd_config)?;
    let mut sums = vec![PlaySum::new(); program.participant_count()];
    let ids: Vec<AgentId> = program.participants().iter().map(|(id, _)| *id).collect();
    for t in 0..schedule.t {
        let point = match best_respond_all(program, dual.current()) {
            Ok(p) => p,
            Err((agent, e)) => return Err(oracle_failure(agent, t, e, dual.into_history())),
        };
        for (sum, play) in sums.iter_mut().zip(&point.plays) {
            sum.add(play);
        }
        let (exact, noisy) = noisy_gradient(program, &point, &schedule, config.seed, t)?;
        dual.observe(exact, noisy)?;
    }
    let history = dual.into_history();
    let x_bar = PrimalPoint::new(ids, sums.iter().map(PlaySum::mean).collect());
    let lambda_bar = history.mean_iterate();
    let coupling = evaluate_coupling(program, &x_bar)?;
    let audit = SolveAudit {
        objective: objective(program, &x_bar)?,
        violation: positive_part_sum(&coupling),
        slacks: coupling.iter().map(|l| -l).collect(),
        empirical_regret: empirical_regret(&history)?,
    };
    let mut ledger = BudgetLedger::new(
        config.epsilon,
        config.delta,
        schedule.epsilon_prime,
        schedule.delta_prime,
        schedule.t,
        schedule.t_overridden,
    );
    if config.noise_enabled {
        ledger.record("noisy coupling gradients", config.epsilon, config.delta);
    }
    let regret = RegretBounds {
        rp: regret_bound_at_step(&ogd_config, schedule.noise_std, config.beta),
        closed_form: closed_form_rp(&meta, program.k, config),
        noiseless: noiseless_rp(&meta, program.k, schedule.t),
    };
    Ok(SolveReport { config: *config, schedule, x_bar, lambda_bar, history, audit, ledger, regret })
}

/// Agent `agent`'s best response in round `t`, recomputed from the published
/// prices alone.
pub fn replay_response(
    program: &SeparableProgram,
    agent: AgentId,
    history: &OgdHistory,
    t: usize,
) -> Result<Play, OracleError> {
    let oracle =
        program.oracle(agent).ok_or_else(|| OracleError::Instance(format!("no participant with id {agent}")))?;
    let lambda =
        history.iterates.get(t).ok_or_else(|| OracleError::Instance(format!("round {t} is not in the history")))?;
    oracle.best_response(lambda)
}

/// Agent `agent`'s averaged play recomputed from the published prices and
/// its own oracle. Matches the solver's output bit for bit.
pub fn replay_average(program: &SeparableProgram, agent: AgentId, history: &OgdHistory) -> Result<Play, OracleError> {
    let oracle =
        program.oracle(agent).ok_or_else(|| OracleError::Instance(format!("no participant with id {agent}")))?;
    let mut sum = PlaySum::new();
    for lambda in &history.iterates {
        sum.add(&oracle.best_response(lambda)?);
    }
    Ok(sum.mean())
}
