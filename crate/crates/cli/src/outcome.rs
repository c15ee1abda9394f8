//! Dispatch to one algorithm and shape its result for the report file.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use privdude::baseline::{audit, greedy_fractional_knapsack, noiseless_opt, AuditVerdict};
use privdude::mechanisms::{is_satisfied, rounddude, tightdude, truedude, PricedOutcome, RoundOutcome, TightConfig};
use privdude::model::{evaluate_coupling, objective, positive_part_sum, AgentId, PrimalPoint, SeparableProgram};
use privdude::privacy::BudgetLedger;
use privdude::problems::Instance;
use privdude::solver::{run, DualSchedule, RegretBounds, SolveConfig, SolveReport};

use crate::error::CliError;

/// Rounds for the non-private reference run when none are given.
pub const REFERENCE_ITERATIONS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Privdude,
    Truedude,
    Tightdude,
    Rounddude,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptEstimate {
    pub value: f64,
    /// Half-width of the interval the true optimum lies in; 0 when exact.
    pub error: f64,
    pub method: String,
}

/// Exact fractional optimum for single-constraint knapsacks, otherwise the
/// objective of a long noiseless run with its error bar.
pub fn reference_opt(instance: &Instance, program: &SeparableProgram) -> Result<OptEstimate, CliError> {
    if let Instance::Knapsack(ks) = instance {
        if program.k == 1 {
            let values: Vec<f64> = ks.items.iter().map(|i| i.value).collect();
            let weights: Vec<Vec<f64>> = ks.items.iter().map(|i| i.weights.clone()).collect();
            let value = greedy_fractional_knapsack(&values, &weights, &program.b)?;
            return Ok(OptEstimate { value, error: 0.0, method: "greedy".into() });
        }
    }
    let (value, error) = noiseless_opt(program, REFERENCE_ITERATIONS)?;
    Ok(OptEstimate { value, error, method: "noiseless".into() })
}

pub enum Outcome {
    Solver(SolveReport),
    Priced(PricedOutcome),
    Round(RoundOutcome),
}

impl Outcome {
    pub fn solver_report(&self) -> &SolveReport {
        match self {
            Outcome::Solver(r) => r,
            Outcome::Priced(p) => &p.report,
            Outcome::Round(r) => &r.report,
        }
    }

    pub fn points(&self) -> &PrimalPoint {
        match self {
            Outcome::Solver(r) => &r.x_bar,
            Outcome::Priced(p) => &p.points,
            Outcome::Round(r) => &r.points,
        }
    }

    pub fn ledger(&self) -> &BudgetLedger {
        match self {
            Outcome::Solver(r) => &r.ledger,
            Outcome::Priced(p) => &p.ledger,
            Outcome::Round(r) => &r.ledger,
        }
    }

    /// Share of private agents that are α-satisfied (before any repair) or,
    /// for flagged rounding, served.
    pub fn satisfied_fraction(&self, program: &SeparableProgram, alpha: Option<f64>) -> Result<f64, CliError> {
        let private = |agents: &[AgentId], flags: &[bool]| {
            let n = agents.iter().filter(|&&a| a != 0).count();
            let hits = agents.iter().zip(flags).filter(|(a, f)| **a != 0 && **f).count();
            if n == 0 {
                1.0
            } else {
                hits as f64 / n as f64
            }
        };
        Ok(match self {
            Outcome::Solver(r) => {
                let alpha = alpha.unwrap_or(r.regret.rp);
                let mut flags = Vec::with_capacity(r.x_bar.plays.len());
                for (agent, play) in r.x_bar.iter() {
                    let oracle = program.oracle(agent).expect("report agents come from the program");
                    let ok = is_satisfied(oracle, play, &r.lambda_bar, alpha)
                        .map_err(|e| CliError::Usage(format!("agent {agent}: {e}")))?;
                    flags.push(ok);
                }
                private(&r.x_bar.agents, &flags)
            }
            Outcome::Priced(p) => private(&p.points.agents, &p.satisfied_before),
            Outcome::Round(r) => private(&r.points.agents, &r.served),
        })
    }
}

pub fn solve(
    program: &SeparableProgram,
    algo: Algo,
    config: &SolveConfig,
    alpha: Option<f64>,
) -> Result<Outcome, CliError> {
    let need_alpha =
        || alpha.ok_or_else(|| CliError::Usage(format!("--alpha is required for {algo:?}").to_lowercase()));
    Ok(match algo {
        Algo::Privdude => Outcome::Solver(run(program, config)?),
        Algo::Baseline => {
            let t = config.t_override.unwrap_or(REFERENCE_ITERATIONS);
            Outcome::Solver(run(program, &config.without_noise().with_iterations(t))?)
        }
        Algo::Truedude => Outcome::Priced(truedude(program, config, need_alpha()?)?),
        Algo::Tightdude => Outcome::Priced(tightdude(program, config, need_alpha()?)?),
        Algo::Rounddude => Outcome::Round(rounddude(program, config)?),
    })
}

/// Objective and constraint state of the final output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputAudit {
    pub objective: f64,
    pub violation: f64,
    /// `b − Σc`, negative where violated.
    pub slacks: Vec<f64>,
}

pub fn output_audit(program: &SeparableProgram, points: &PrimalPoint) -> Result<OutputAudit, CliError> {
    let bad = |e: privdude::model::ModelError| CliError::Assertion(e.to_string());
    let l = evaluate_coupling(program, points).map_err(bad)?;
    Ok(OutputAudit {
        objective: objective(program, points).map_err(bad)?,
        violation: positive_part_sum(&l),
        slacks: l.iter().map(|x| -x).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAudit {
    pub opt: OptEstimate,
    /// The averaged solver output against its regret bound.
    pub solver: AuditVerdict,
    pub empirical_regret: f64,
    /// The point actually returned (the average for the plain solver).
    pub output: OutputAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MechanismSummary {
    Priced {
        alpha: f64,
        rho: f64,
        gamma: f64,
        satisfied_before: Vec<bool>,
        satisfied: Vec<bool>,
        reassigned: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        tight: Option<TightConfig>,
    },
    Round {
        served: Vec<bool>,
        flags_raised: Vec<bool>,
        zeta: f64,
        thresholds: Vec<f64>,
        flag_epsilon: f64,
        flag_delta: f64,
        feasible: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub algo: Algo,
    pub config: SolveConfig,
    pub schedule: DualSchedule,
    pub agents: Vec<AgentId>,
    /// Per-agent dense points: the average for the solver, final points for
    /// the mechanisms.
    pub x_bar: Vec<Vec<f64>>,
    pub lambda_bar: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payments: Option<Vec<f64>>,
    pub regret: RegretBounds,
    pub audit: ReportAudit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSummary>,
    pub ledger: BudgetLedger,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl ReportFile {
    pub fn build(
        program: &SeparableProgram,
        algo: Algo,
        outcome: &Outcome,
        opt: OptEstimate,
    ) -> Result<Self, CliError> {
        let solver = outcome.solver_report();
        // Mechanisms that tighten `b` solve a reduced program; audit the
        // solver against the program it actually saw.
        let solved = match outcome {
            Outcome::Priced(PricedOutcome { tight: Some(t), .. }) => {
                program.with_b(program.b.iter().map(|b| b - t.xi).collect())
            }
            _ => program.clone(),
        };
        let verdict = audit(solver, &solved, opt.value, opt.error);
        let points = outcome.points();
        let (payments, mechanism) = match outcome {
            Outcome::Solver(_) => (None, None),
            Outcome::Priced(p) => (
                Some(p.payments.clone()),
                Some(MechanismSummary::Priced {
                    alpha: p.alpha,
                    rho: p.rho,
                    gamma: p.gamma,
                    satisfied_before: p.satisfied_before.clone(),
                    satisfied: p.satisfied.clone(),
                    reassigned: p.reassigned,
                    tight: p.tight,
                }),
            ),
            Outcome::Round(r) => (
                None,
                Some(MechanismSummary::Round {
                    served: r.served.clone(),
                    flags_raised: r.flags_raised.clone(),
                    zeta: r.zeta,
                    thresholds: r.thresholds.clone(),
                    flag_epsilon: r.flag_epsilon,
                    flag_delta: r.flag_delta,
                    feasible: r.feasible,
                }),
            ),
        };
        Ok(ReportFile {
            algo,
            config: solver.config,
            schedule: solver.schedule,
            agents: points.agents.clone(),
            x_bar: points.plays.iter().map(|p| p.point.clone()).collect(),
            lambda_bar: solver.lambda_bar.clone(),
            payments,
            regret: solver.regret,
            audit: ReportAudit {
                opt,
                solver: verdict,
                empirical_regret: solver.audit.empirical_regret,
                output: output_audit(program, points)?,
            },
            mechanism,
            ledger: outcome.ledger().clone(),
            timings: None,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize to plain JSON");
        s.push('\n');
        s
    }
}
