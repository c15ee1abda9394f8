//! Mechanisms built on the solver: price-based repair with payments, exact
//! feasibility via tightened constraints and vertex rounding, and rounding
//! guarded by sparse-vector capacity flags.
//!
//! All three need a null action for every participant; the last two also
//! need a packing program.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    dot, evaluate_coupling, AgentId, AgentOracle, OracleError, Play, PrimalPoint, ProgramMetadata, SeparableProgram,
};
use crate::ogd::OgdHistory;
use crate::privacy::{BudgetLedger, Flag, PrivacyError, SparseVector};
use crate::rng::{substream, Purpose};
use crate::solver::{run, SolveConfig, SolveError, SolveReport};

/// Load above `b_j` tolerated by the exact-feasibility assertion, relative to
/// `max(1, b_j)`; covers summation rounding only.
const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum MechanismError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("null action required: agent {agent} has no null action")]
    NullActionRequired { agent: AgentId },
    #[error("packing program required: metadata has no minimum contribution L")]
    PackingRequired,
    #[error("alpha = {0} must be finite and nonnegative")]
    Alpha(f64),
    #[error("reserve {xi} is not below b_{constraint} = {b} (kappa = {kappa} must be < 1)")]
    ReserveTooLarge { constraint: usize, xi: f64, b: f64, kappa: f64 },
    #[error("flag margin {zeta} is not below b_{constraint} = {b}")]
    FlagMarginTooLarge { constraint: usize, zeta: f64, b: f64 },
    #[error("agent {agent}: {source}")]
    Oracle { agent: AgentId, source: OracleError },
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("internal assertion failed: final load {load} exceeds b_{constraint} = {b}")]
    Infeasible { constraint: usize, load: f64, b: f64 },
    #[error("dimension mismatch: expected {expected} prices, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Payment `⟨λ̄, c(x)⟩` for a play.
pub fn price_of(play: &Play, lambda_bar: &[f64]) -> Result<f64, MechanismError> {
    if play.contributions.len() != lambda_bar.len() {
        return Err(MechanismError::Dimension { expected: play.contributions.len(), got: lambda_bar.len() });
    }
    Ok(dot(lambda_bar, &play.contributions))
}

/// How much utility the agent forgoes at `play` compared with its best
/// response to `lambda_bar`. Returns the gap and the best response.
pub fn utility_gap(oracle: &dyn AgentOracle, play: &Play, lambda_bar: &[f64]) -> Result<(f64, Play), OracleError> {
    let best = oracle.best_response(lambda_bar)?;
    Ok((best.utility(lambda_bar) - play.utility(lambda_bar), best))
}

/// `value − price ≥ value(BR) − price(BR) − α` at prices `λ̄`.
pub fn is_satisfied(
    oracle: &dyn AgentOracle,
    play: &Play,
    lambda_bar: &[f64],
    alpha: f64,
) -> Result<bool, OracleError> {
    Ok(utility_gap(oracle, play, lambda_bar)?.0 <= alpha)
}

/// `ρ = e^ε` and `γ = α(2e^ε − 1) + δ·max{V, C₁τ√k}`.
pub fn truthfulness(metadata: &ProgramMetadata, k: usize, epsilon: f64, delta: f64, alpha: f64) -> (f64, f64) {
    let rho = epsilon.exp();
    let price_range = metadata.total_contribution_bound * metadata.tau * (k as f64).sqrt();
    let gamma = alpha * (2.0 * rho - 1.0) + delta * metadata.value_bound.max(price_range);
    (rho, gamma)
}

/// Constraint reserve for exact feasibility:
/// `ξ = √(3·max b) + (160√8·kτσC∞/ε)·ln²(4w²k²/β)·√ln(2w/δ)·(2/τ + C∞k/α)`.
pub fn compute_reserve(
    metadata: &ProgramMetadata,
    k: usize,
    epsilon: f64,
    delta: f64,
    beta: f64,
    alpha: f64,
    b: &[f64],
) -> f64 {
    let kf = k as f64;
    let w = metadata.width;
    let c_inf = metadata.contribution_bound;
    let max_b = b.iter().copied().fold(0.0, f64::max);
    let log = (4.0 * w * w * kf * kf / beta).ln();
    let noise = 160.0 * 8f64.sqrt() * kf * metadata.tau * metadata.sigma * c_inf / epsilon
        * log
        * log
        * (2.0 * w / delta).ln().sqrt()
        * (2.0 / metadata.tau + c_inf * kf / alpha);
    (3.0 * max_b).sqrt() + noise
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightConfig {
    pub alpha: f64,
    pub xi: f64,
    /// `max_j ξ/b_j`.
    pub kappa: f64,
}

/// Final allocation of a price-based mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedOutcome {
    pub points: PrimalPoint,
    pub payments: Vec<f64>,
    /// α-satisfaction of the solver's averaged play, before repair.
    pub satisfied_before: Vec<bool>,
    /// α-satisfaction of the final play.
    pub satisfied: Vec<bool>,
    pub reassigned: usize,
    pub alpha: f64,
    pub rho: f64,
    pub gamma: f64,
    pub tight: Option<TightConfig>,
    pub ledger: BudgetLedger,
    pub report: SolveReport,
}

impl PricedOutcome {
    pub fn unsatisfied_before(&self) -> usize {
        self.satisfied_before.iter().filter(|s| !**s).count()
    }
}

fn require_null_actions(program: &SeparableProgram) -> Result<(), MechanismError> {
    match program.missing_null_action() {
        Some(agent) => Err(MechanismError::NullActionRequired { agent }),
        None => Ok(()),
    }
}

fn require_packing(program: &SeparableProgram) -> Result<f64, MechanismError> {
    match program.metadata.min_contribution {
        Some(l) if l > 0.0 => Ok(l),
        _ => Err(MechanismError::PackingRequired),
    }
}

fn check_alpha(alpha: f64) -> Result<(), MechanismError> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::Alpha(alpha))
    }
}

/// Uniform draw of one of the agent's recorded best responses, recomputed
/// from the published prices. The draw uses an agent-keyed stream so the
/// order in which agents are processed does not matter.
pub fn round_to_recorded(
    program: &SeparableProgram,
    agent: AgentId,
    history: &OgdHistory,
    seed: u64,
) -> Result<Play, MechanismError> {
    let oracle = program
        .oracle(agent)
        .ok_or(MechanismError::Oracle { agent, source: OracleError::Instance("unknown agent".into()) })?;
    let mut rng = substream(seed, Purpose::Rounding, &[agent as u64]);
    let t = rng.random_range(0..history.len());
    oracle.best_response(&history.iterates[t]).map_err(|source| MechanismError::Oracle { agent, source })
}

struct Settled {
    play: Play,
    satisfied_before: bool,
}

/// Per-agent satisfaction check at `λ̄`; unsatisfied agents get their best
/// response and satisfied ones `keep(agent)`.
fn settle<F>(
    program: &SeparableProgram,
    report: &SolveReport,
    alpha: f64,
    keep: F,
) -> Result<Vec<Settled>, MechanismError>
where
    F: Fn(AgentId, &Play) -> Result<Play, MechanismError> + Sync,
{
    let lambda_bar = &report.lambda_bar;
    let parts: Vec<(AgentId, &dyn AgentOracle, &Play)> =
        program.participants().into_iter().zip(&report.x_bar.plays).map(|((id, o), p)| (id, o, p)).collect();
    parts
        .par_iter()
        .map(|&(agent, oracle, avg)| {
            let (gap, best) =
                utility_gap(oracle, avg, lambda_bar).map_err(|source| MechanismError::Oracle { agent, source })?;
            if gap <= alpha {
                Ok(Settled { play: keep(agent, avg)?, satisfied_before: true })
            } else {
                Ok(Settled { play: best, satisfied_before: false })
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Ledger over the mechanism's whole budget, with the solver run's per-round
/// split and one entry per released component.
fn mechanism_ledger(config: &SolveConfig, report: &SolveReport, entries: &[(&str, f64, f64)]) -> BudgetLedger {
    let s = &report.schedule;
    let mut ledger =
        BudgetLedger::new(config.epsilon, config.delta, s.epsilon_prime, s.delta_prime, s.t, s.t_overridden);
    for &(label, eps, delta) in entries {
        ledger.record(label, eps, delta);
    }
    ledger
}

fn priced_outcome(
    program: &SeparableProgram,
    report: SolveReport,
    settled: Vec<Settled>,
    alpha: f64,
    config: &SolveConfig,
    tight: Option<TightConfig>,
    ledger: BudgetLedger,
) -> Result<PricedOutcome, MechanismError> {
    let lambda_bar = &report.lambda_bar;
    let mut payments = Vec::with_capacity(settled.len());
    let mut satisfied = Vec::with_capacity(settled.len());
    for ((agent, oracle), s) in program.participants().into_iter().zip(&settled) {
        payments.push(price_of(&s.play, lambda_bar)?);
        satisfied.push(
            is_satisfied(oracle, &s.play, lambda_bar, alpha)
                .map_err(|source| MechanismError::Oracle { agent, source })?,
        );
    }
    let satisfied_before: Vec<bool> = settled.iter().map(|s| s.satisfied_before).collect();
    let reassigned = satisfied_before.iter().filter(|s| !**s).count();
    let (rho, gamma) = truthfulness(&program.metadata, program.k, config.epsilon, config.delta, alpha);
    let points = PrimalPoint::new(report.x_bar.agents.clone(), settled.into_iter().map(|s| s.play).collect());
    Ok(PricedOutcome {
        points,
        payments,
        satisfied_before,
        satisfied,
        reassigned,
        alpha,
        rho,
        gamma,
        tight,
        ledger,
        report,
    })
}

/// Solve privately, then move every agent who is not α-satisfied at the
/// average prices `λ̄` to its best response, and charge `⟨λ̄, c(x)⟩`.
pub fn truedude(program: &SeparableProgram, config: &SolveConfig, alpha: f64) -> Result<PricedOutcome, MechanismError> {
    check_alpha(alpha)?;
    require_null_actions(program)?;
    let report = run(program, config)?;
    let settled = settle(program, &report, alpha, |_, avg| Ok(avg.clone()))?;
    let ledger = report.ledger.clone();
    priced_outcome(program, report, settled, alpha, config, None, ledger)
}

/// Reserve `ξ` of every constraint, solve the reduced program at half the
/// budget, repair unsatisfied agents, and round everyone else to one of
/// their recorded best responses. The result is checked against the
/// original constraints.
pub fn tightdude(
    program: &SeparableProgram,
    config: &SolveConfig,
    alpha: f64,
) -> Result<PricedOutcome, MechanismError> {
    check_alpha(alpha)?;
    require_null_actions(program)?;
    require_packing(program)?;
    config.validate()?;
    let xi =
        compute_reserve(&program.metadata, program.k, config.epsilon, config.delta, config.beta, alpha, &program.b);
    let (tightest, kappa) = program
        .b
        .iter()
        .map(|b| xi / b)
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("programs have at least one constraint");
    if kappa.is_nan() || kappa >= 1.0 {
        return Err(MechanismError::ReserveTooLarge { constraint: tightest, xi, b: program.b[tightest], kappa });
    }
    let reduced = program.with_b(program.b.iter().map(|b| b - xi).collect());
    let half =
        SolveConfig { epsilon: config.epsilon / 2.0, delta: config.delta / 2.0, beta: config.beta / 2.0, ..*config };
    let report = run(&reduced, &half)?;
    let history = &report.history;
    let settled = settle(program, &report, alpha, |agent, _| round_to_recorded(program, agent, history, config.seed))?;
    let spent: &[(&str, f64, f64)] = if config.noise_enabled {
        &[("noisy coupling gradients, reduced constraints", half.epsilon, half.delta)]
    } else {
        &[]
    };
    let ledger = mechanism_ledger(config, &report, spent);
    let outcome =
        priced_outcome(program, report, settled, alpha, config, Some(TightConfig { alpha, xi, kappa }), ledger)?;
    let l = evaluate_coupling(program, &outcome.points).map_err(SolveError::from)?;
    for (j, (lj, bj)) in l.iter().zip(&program.b).enumerate() {
        if *lj > FEASIBILITY_SLACK * bj.abs().max(1.0) {
            return Err(MechanismError::Infeasible { constraint: j, load: lj + bj, b: *bj });
        }
    }
    Ok(outcome)
}

/// Sparse-vector flags guarding each constraint during sequential rounding.
#[derive(Debug)]
pub struct FlagBank {
    flags: Vec<SparseVector>,
    pub zeta: f64,
    pub epsilon: f64,
    pub thresholds: Vec<f64>,
}

impl FlagBank {
    /// One flag per constraint at threshold `b_j − ζ`, each with privacy
    /// parameter `epsilon`; `ζ = 8(ln n + ln(3k/β))/epsilon`.
    pub fn new(b: &[f64], n: usize, epsilon: f64, beta: f64, seed: u64, noise: bool) -> Result<Self, MechanismError> {
        let k = b.len();
        let zeta = 8.0 * ((n.max(1) as f64).ln() + (3.0 * k as f64 / beta).ln()) / epsilon;
        let mut flags = Vec::with_capacity(k);
        let mut thresholds = Vec::with_capacity(k);
        for (j, &bj) in b.iter().enumerate() {
            if bj.is_nan() || bj <= zeta {
                return Err(MechanismError::FlagMarginTooLarge { constraint: j, zeta, b: bj });
            }
            let threshold = bj - zeta;
            let rng = substream(seed, Purpose::SparseVector, &[j as u64]);
            flags.push(if noise {
                SparseVector::new(epsilon, threshold, rng)?
            } else {
                SparseVector::noiseless(epsilon, threshold, rng)?
            });
            thresholds.push(threshold);
        }
        Ok(FlagBank { flags, zeta, epsilon, thresholds })
    }

    pub fn is_raised(&self, j: usize) -> bool {
        self.flags[j].is_halted()
    }

    pub fn raised(&self) -> Vec<bool> {
        self.flags.iter().map(SparseVector::is_halted).collect()
    }

    /// Query every flag that is still down with the current loads.
    pub fn observe(&mut self, loads: &[f64]) -> Result<(), MechanismError> {
        for (flag, &q) in self.flags.iter_mut().zip(loads) {
            if !flag.is_halted() {
                let _: Flag = flag.query(q)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub points: PrimalPoint,
    pub served: Vec<bool>,
    pub flags_raised: Vec<bool>,
    pub zeta: f64,
    pub thresholds: Vec<f64>,
    pub flag_epsilon: f64,
    pub flag_delta: f64,
    /// Final loads minus `b`; all nonpositive when the output is feasible.
    pub coupling: Vec<f64>,
    pub feasible: bool,
    pub objective: f64,
    pub ledger: BudgetLedger,
    pub report: SolveReport,
}

/// Per-flag budget: `ε_f = ε/(2√(8Q ln(1/δ_f)))`, `δ_f = δ/2`, where `Q` is the
/// total number of flag queries (one per participant per constraint).
pub fn flag_budget(epsilon: f64, delta: f64, queries: u64) -> (f64, f64) {
    let delta_f = delta / 2.0;
    let eps_f = epsilon / (2.0 * (8.0 * queries as f64 * (1.0 / delta_f).ln()).sqrt());
    (eps_f, delta_f)
}

/// Solve privately on the original constraints, then visit agents in order:
/// each draws one of its recorded best responses, goes unserved (null
/// action) if it touches a constraint whose flag is up, and the flags are
/// queried with the running loads.
pub fn rounddude(program: &SeparableProgram, config: &SolveConfig) -> Result<RoundOutcome, MechanismError> {
    require_null_actions(program)?;
    require_packing(program)?;
    config.validate()?;
    let queries = (program.participant_count().max(1) * program.k) as u64;
    let (flag_epsilon, flag_delta) = flag_budget(config.epsilon, config.delta, queries);
    let mut bank =
        FlagBank::new(&program.b, program.n(), flag_epsilon, config.beta, config.seed, config.noise_enabled)?;
    let sub =
        SolveConfig { epsilon: config.epsilon / 2.0, delta: config.delta / 2.0, beta: config.beta / 3.0, ..*config };
    let report = run(program, &sub)?;
    let spent: &[(&str, f64, f64)] = if config.noise_enabled {
        &[("noisy coupling gradients", sub.epsilon, sub.delta), ("capacity flags", config.epsilon / 2.0, flag_delta)]
    } else {
        &[]
    };
    let ledger = mechanism_ledger(config, &report, spent);

    let mut loads = vec![0.0; program.k];
    let mut plays = Vec::with_capacity(program.participant_count());
    let mut served = Vec::with_capacity(program.participant_count());
    for (agent, oracle) in program.participants() {
        let draw = round_to_recorded(program, agent, &report.history, config.seed)?;
        let blocked = draw.contributions.iter().enumerate().any(|(j, &c)| c > 0.0 && bank.is_raised(j));
        let play =
            if blocked { oracle.null_action().ok_or(MechanismError::NullActionRequired { agent })? } else { draw };
        for (l, c) in loads.iter_mut().zip(&play.contributions) {
            *l += c;
        }
        bank.observe(&loads)?;
        served.push(!blocked);
        plays.push(play);
    }
    let points = PrimalPoint::new(report.x_bar.agents.clone(), plays);
    let coupling = evaluate_coupling(program, &points).map_err(SolveError::from)?;
    let objective = points.plays.iter().map(|p| p.value).sum();
    Ok(RoundOutcome {
        feasible: coupling.iter().all(|l| *l <= 0.0),
        points,
        served,
        flags_raised: bank.raised(),
        zeta: bank.zeta,
        thresholds: bank.thresholds.clone(),
        flag_epsilon,
        flag_delta,
        coupling,
        objective,
        ledger,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::knapsack::{KnapsackInstance, KnapsackItem};

    fn item(v: f64) -> KnapsackItem {
        KnapsackItem { value: v, weights: vec![1.0] }
    }

    #[test]
    fn price_examples() {
        let it = item(1.0);
        let null = it.null_action().unwrap();
        assert_eq!(price_of(&null, &[0.6]).unwrap(), 0.0);
        let take = it.evaluate(&[1.0]).unwrap();
        assert_eq!(price_of(&take, &[0.6]).unwrap(), 0.6);
        assert_eq!(price_of(&take, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn satisfaction_examples() {
        let it = item(1.0);
        let best = it.best_response(&[0.6]).unwrap();
        assert!(is_satisfied(&it, &best, &[0.6], 0.0).unwrap());
        let null = it.null_action().unwrap();
        assert!(!is_satisfied(&it, &null, &[0.6], 0.39).unwrap());
        assert!(is_satisfied(&it, &null, &[0.6], 0.4 + 1e-12).unwrap());
        assert!(is_satisfied(&it, &null, &[2.0], 0.0).unwrap());
    }

    #[test]
    fn reserve_example() {
        let meta = ProgramMetadata {
            sigma: 1.0,
            tau: 1.0,
            width: 10.0,
            value_bound: 1.0,
            contribution_bound: 1.0,
            total_contribution_bound: 1.0,
            min_contribution: Some(1.0),
        };
        let xi = compute_reserve(&meta, 1, 1.0, 0.01, 0.1, 1.0, &[1e4]);
        // Independent evaluation of the closed form.
        let l = (4.0f64 * 100.0 / 0.1).ln();
        let expect = (3e4f64).sqrt() + 160.0 * 8f64.sqrt() * l * l * (2000f64).ln().sqrt() * 3.0;
        assert!((xi - expect).abs() < 1e-8 * expect);
        assert!((xi - 257_658.286_439_726_4).abs() < 1e-6);
        let faint = ProgramMetadata { sigma: 0.0, contribution_bound: 0.0, ..meta };
        assert!((compute_reserve(&faint, 1, 1.0, 0.01, 0.1, 1.0, &[1e4]) - 3e4f64.sqrt()).abs() < 1e-12);
        let heavy = ProgramMetadata { contribution_bound: 2.0, ..meta };
        let base = xi - 3e4f64.sqrt();
        assert!(compute_reserve(&heavy, 1, 1.0, 0.01, 0.1, 1.0, &[1e4]) - 3e4f64.sqrt() > 2.0 * base);
    }

    fn tiny() -> SeparableProgram {
        KnapsackInstance::new(vec![1.0, 0.8, 0.5], vec![vec![1.0]; 3], vec![2.0]).unwrap().to_program()
    }

    #[test]
    fn large_alpha_reassigns_nobody() {
        let p = tiny();
        let m = p.metadata;
        let alpha = m.value_bound + m.tau * m.total_contribution_bound;
        let cfg = SolveConfig::new(1.0, 0.01, 0.1, 2).with_iterations(50);
        let out = truedude(&p, &cfg, alpha).unwrap();
        assert_eq!(out.reassigned, 0);
        assert_eq!(out.points, out.report.x_bar);
    }

    #[test]
    fn repair_satisfies_everyone() {
        let p = tiny();
        let cfg = SolveConfig::new(1.0, 0.01, 0.1, 2).without_noise().with_iterations(2000);
        let out = truedude(&p, &cfg, 0.01).unwrap();
        assert!(out.satisfied.iter().all(|s| *s));
        assert!(out.reassigned as f64 <= out.report.regret.noiseless / 0.01);
        for (play, pay) in out.points.plays.iter().zip(&out.payments) {
            assert!(play.value - pay >= -0.01);
            assert!(*pay >= 0.0);
        }
    }

    #[test]
    fn reserve_above_capacity_is_rejected() {
        let err = tightdude(&tiny(), &SolveConfig::new(1.0, 0.01, 0.1, 0).with_iterations(10), 1.0).unwrap_err();
        assert!(matches!(err, MechanismError::ReserveTooLarge { constraint: 0, .. }));
    }

    #[test]
    fn noiseless_flags_serve_a_prefix() {
        // Five unit items, one constraint. With a single round every agent's
        // recorded response is to take its item; the flag threshold b − ζ is
        // 2.5, so it goes up once the third item is in. At this ε the margin ζ
        // exceeds one item, so the overshoot stays within b.
        let cfg = SolveConfig::new(1e3, 0.01, 0.1, 0).without_noise().with_iterations(1);
        let (eps_f, _) = flag_budget(cfg.epsilon, cfg.delta, 5);
        let zeta = 8.0 * (5f64.ln() + (30f64).ln()) / eps_f;
        assert!(zeta > 1.0);
        let p = KnapsackInstance::new(vec![1.0; 5], vec![vec![1.0]; 5], vec![2.5 + zeta]).unwrap().to_program();
        let out = rounddude(&p, &cfg).unwrap();
        assert_eq!(out.served, vec![true, true, true, false, false]);
        assert!(out.feasible);
        assert_eq!(out.flags_raised, vec![true]);
    }

    #[test]
    fn noiseless_flags_serve_everyone_with_room() {
        let cfg = SolveConfig::new(1e4, 0.01, 0.1, 0).without_noise().with_iterations(1);
        let p = KnapsackInstance::new(vec![1.0; 5], vec![vec![1.0]; 5], vec![10.0]).unwrap().to_program();
        let out = rounddude(&p, &cfg).unwrap();
        assert!(out.served.iter().all(|s| *s));
        assert!(out.feasible);
    }

    #[test]
    fn small_capacity_cannot_host_flags() {
        let cfg = SolveConfig::new(1.0, 0.01, 0.1, 0).with_iterations(1);
        assert!(matches!(rounddude(&tiny(), &cfg), Err(MechanismError::FlagMarginTooLarge { .. })));
    }
}
