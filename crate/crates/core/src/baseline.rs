//! Non-private reference values: exact optima where they are cheap to get,
//! long noiseless runs elsewhere, and the audit of a solver report against
//! its regret bound.

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, OracleError, Play, PrimalPoint, SeparableProgram};
use crate::solver::{best_respond_all, replay_average, run, SolveConfig, SolveError, SolveReport};

/// Largest joint vertex enumeration [`brute_force_opt`] will attempt.
pub const MAX_COMBINATIONS: u128 = 1 << 20;

/// Summation slack when testing `Σc ≤ b` on enumerated vertices.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("agent {agent} cannot enumerate its vertices")]
    NoVertices { agent: AgentId },
    #[error("{combinations} joint vertex combinations exceed the cap of {MAX_COMBINATIONS}")]
    Scale { combinations: u128 },
    #[error("greedy knapsack needs exactly one constraint, got {0}")]
    NotSingleConstraint(usize),
    #[error("{values} values but {weights} weight rows")]
    Shape { values: usize, weights: usize },
    #[error("agent {agent}: {source}")]
    Oracle { agent: AgentId, source: OracleError },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    /// `-∞` when no joint vertex choice is feasible.
    pub value: f64,
    pub witness: Option<PrimalPoint>,
}

/// Exhaustive maximum over joint vertex choices satisfying `Σc ≤ b`. Earlier
/// participants vary slowest; among equal objectives the first combination
/// found wins.
pub fn brute_force_opt(program: &SeparableProgram) -> Result<BruteForce, BaselineError> {
    let parts = program.participants();
    let mut tables: Vec<Vec<Play>> = Vec::with_capacity(parts.len());
    let mut combinations: u128 = 1;
    for (agent, oracle) in &parts {
        let v = oracle.vertices().ok_or(BaselineError::NoVertices { agent: *agent })?;
        combinations = combinations.saturating_mul(v.len() as u128);
        if combinations > MAX_COMBINATIONS {
            return Err(BaselineError::Scale { combinations });
        }
        tables.push(v);
    }
    let ids: Vec<AgentId> = parts.iter().map(|(id, _)| *id).collect();
    if tables.iter().any(Vec::is_empty) {
        return Ok(BruteForce { value: f64::NEG_INFINITY, witness: None });
    }
    let k = program.k;
    let mut choice = vec![0usize; tables.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut loads = vec![0.0; k];
        let mut value = 0.0;
        for (table, &c) in tables.iter().zip(&choice) {
            let play = &table[c];
            value += play.value;
            for (l, x) in loads.iter_mut().zip(&play.contributions) {
                *l += x;
            }
        }
        let feasible = loads.iter().zip(&program.b).all(|(l, b)| *l <= b + FEASIBILITY_SLACK * b.abs().max(1.0));
        if feasible && best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, choice.clone()));
        }
        // Odometer step, last participant fastest.
        let mut i = choice.len();
        loop {
            if i == 0 {
                let Some((value, pick)) = best else {
                    return Ok(BruteForce { value: f64::NEG_INFINITY, witness: None });
                };
                let plays = tables.iter().zip(&pick).map(|(t, &c)| t[c].clone()).collect();
                return Ok(BruteForce { value, witness: Some(PrimalPoint::new(ids, plays)) });
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < tables[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// Exact optimum of the single-constraint fractional knapsack: take items
/// by value density, splitting the last one.
pub fn greedy_fractional_knapsack(
    values: &[f64],
    weights: &[Vec<f64>],
    capacity: &[f64],
) -> Result<f64, BaselineError> {
    if capacity.len() != 1 {
        return Err(BaselineError::NotSingleConstraint(capacity.len()));
    }
    if values.len() != weights.len() {
        return Err(BaselineError::Shape { values: values.len(), weights: weights.len() });
    }
    let mut items: Vec<(f64, f64)> = Vec::with_capacity(values.len());
    for (v, w) in values.iter().zip(weights) {
        if w.len() != 1 {
            return Err(BaselineError::NotSingleConstraint(w.len()));
        }
        if *v > 0.0 {
            items.push((*v, w[0]));
        }
    }
    // Weightless items are free and sort first.
    let density = |(v, w): &(f64, f64)| if *w > 0.0 { v / w } else { f64::INFINITY };
    items.sort_by(|a, b| density(b).total_cmp(&density(a)));
    let mut room = capacity[0].max(0.0);
    let mut total = 0.0;
    for (v, w) in items {
        if w <= room {
            total += v;
            room -= w;
        } else {
            total += v * room / w;
            break;
        }
    }
    Ok(total)
}

/// Objective of a long noiseless run and its error bar `2τ√k·w/√T`.
pub fn noiseless_opt(program: &SeparableProgram, t_long: u64) -> Result<(f64, f64), BaselineError> {
    let config = SolveConfig::new(1.0, 0.01, 0.1, 0).without_noise().with_iterations(t_long);
    let report = run(program, &config)?;
    let m = &program.metadata;
    let error_bar = 2.0 * m.tau * (program.k as f64).sqrt() * m.width / (t_long as f64).sqrt();
    Ok((report.audit.objective, error_bar))
}

/// Weak-duality upper bound on the optimum: for any `λ ≥ 0`,
/// `OPT ≤ Σᵢ max_x [v⁽ⁱ⁾(x) − ⟨λ, c⁽ⁱ⁾(x)⟩] + ⟨λ, b⟩`.
pub fn dual_upper_bound(program: &SeparableProgram, lambda: &[f64]) -> Result<f64, BaselineError> {
    let response =
        best_respond_all(program, lambda).map_err(|(agent, source)| BaselineError::Oracle { agent, source })?;
    let utilities: f64 = response.plays.iter().map(|p| p.utility(lambda)).sum();
    let reserve: f64 = lambda.iter().zip(&program.b).map(|(l, b)| l.max(0.0) * b).sum();
    Ok(utilities + reserve)
}

/// Pass/fail of each accuracy claim, with margins (positive = room to spare).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub structure_ok: bool,
    pub violation_ok: bool,
    pub violation: f64,
    pub violation_bound: f64,
    pub violation_margin: f64,
    pub objective_ok: bool,
    pub objective: f64,
    pub objective_floor: f64,
    pub objective_margin: f64,
    pub lambda_in_box: bool,
    pub billboard_ok: bool,
    pub notes: Vec<String>,
}

impl AuditVerdict {
    pub fn all_ok(&self) -> bool {
        self.structure_ok && self.violation_ok && self.objective_ok && self.lambda_in_box && self.billboard_ok
    }
}

fn billboard_mismatch(program: &SeparableProgram, report: &SolveReport) -> Result<Option<AgentId>, OracleError> {
    for (agent, play) in report.x_bar.iter() {
        if &replay_average(program, agent, &report.history)? != play {
            return Ok(Some(agent));
        }
    }
    Ok(None)
}

/// Check a report against `violation ≤ 2R_p/τ` and
/// `objective ≥ OPT − 2R_p − opt_error`, that `λ̄` lies in the dual box, and
/// that every agent's average can be recomputed from the published prices.
pub fn audit(report: &SolveReport, program: &SeparableProgram, opt_value: f64, opt_error: f64) -> AuditVerdict {
    let rp = report.regret.rp;
    let tau = program.metadata.tau;
    let violation = report.audit.violation;
    let objective = report.audit.objective;
    let violation_bound = 2.0 * rp / tau;
    let objective_floor = opt_value - 2.0 * rp - opt_error;
    let mut notes = Vec::new();

    let k = program.k;
    let mut structure_ok = report.lambda_bar.len() == k
        && program.b.len() == k
        && report.x_bar.plays.len() == program.participant_count()
        && report.x_bar.plays.iter().all(|p| p.contributions.len() == k)
        && report.history.iterates.iter().all(|l| l.len() == k);
    if !structure_ok {
        notes.push(format!(
            "report has {} prices and {} plays; program has k = {k} and {} participants",
            report.lambda_bar.len(),
            report.x_bar.plays.len(),
            program.participant_count()
        ));
    }
    let billboard_ok = structure_ok
        && match billboard_mismatch(program, report) {
            Ok(None) => true,
            Ok(Some(agent)) => {
                notes.push(format!("agent {agent}: average differs from replay of published prices"));
                false
            }
            Err(e) => {
                notes.push(format!("replay failed: {e}"));
                structure_ok = false;
                false
            }
        };
    let lambda_in_box = report.lambda_bar.iter().all(|l| (0.0..=report.schedule.box_hi).contains(l));
    AuditVerdict {
        structure_ok,
        violation_ok: structure_ok && violation <= violation_bound,
        violation,
        violation_bound,
        violation_margin: violation_bound - violation,
        objective_ok: structure_ok && objective >= objective_floor,
        objective,
        objective_floor,
        objective_margin: objective - objective_floor,
        lambda_in_box,
        billboard_ok,
        notes,
    }
}
