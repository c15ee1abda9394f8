//! Linearly separable convex programs.
//!
//! A program is a list of agents, each hidden behind an [`AgentOracle`], plus
//! an optional public agent 0, `k` coupling constraints `Σᵢ cᵢ(xᵢ) ≤ b`, and
//! class-level metadata. The solver only ever sees what oracles return: a
//! point, its value, and its length-`k` contribution vector.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Index of a participant: `0` is the public agent, `1..=n` the private ones.
pub type AgentId = usize;

/// A point in one agent's feasible set together with its value and its
/// contributions to the coupling constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Play {
    pub point: Vec<f64>,
    pub value: f64,
    pub contributions: Vec<f64>,
}

impl Play {
    /// Lagrangian utility `value − ⟨λ, contributions⟩`.
    pub fn utility(&self, lambda: &[f64]) -> f64 {
        self.value - dot(lambda, &self.contributions)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("no path from node {source_node} to node {sink}")]
    NoPath { source_node: usize, sink: usize },
    #[error("instance too large: {0}")]
    Scale(String),
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// One agent's private feasible set, objective, and constraint functions.
///
/// Implementations must be pure functions of `(private data, λ)` so that
/// best responses can be computed concurrently and recomputed later from the
/// dual history alone.
pub trait AgentOracle: Send + Sync + fmt::Debug {
    /// Argmax over the feasible set of `value − ⟨λ, contributions⟩`, with a
    /// deterministic, documented tie-break. Returned points are vertices.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError>;

    /// The opt-out point with zero value and zero contributions, if the
    /// feasible set contains one.
    fn null_action(&self) -> Option<Play>;

    /// Every vertex of the feasible set, for desk-scale instances only.
    fn vertices(&self) -> Option<Vec<Play>>;

    /// Value and contributions at an arbitrary point of the feasible set.
    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError>;

    fn is_feasible(&self, point: &[f64]) -> bool;
}

/// Class-level constants of the program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramMetadata {
    /// ℓ₂ sensitivity of the coupling gradient to one agent's data.
    pub sigma: f64,
    /// Dual bound; the dual box is `[0, 2τ]^k`.
    pub tau: f64,
    /// Bound on `|Σc − b|` for every constraint.
    pub width: f64,
    /// Upper bound on any private agent's value.
    #[serde(rename = "V")]
    pub value_bound: f64,
    /// Bound on any private agent's contribution to one constraint.
    #[serde(rename = "C_inf")]
    pub contribution_bound: f64,
    /// Bound on any private agent's summed contributions.
    #[serde(rename = "C_1")]
    pub total_contribution_bound: f64,
    /// Minimum nonzero vertex contribution; present only for packing programs.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub min_contribution: Option<f64>,
}

#[derive(Clone)]
pub struct SeparableProgram {
    pub agents: Vec<Arc<dyn AgentOracle>>,
    pub agent0: Option<Arc<dyn AgentOracle>>,
    pub k: usize,
    pub b: Vec<f64>,
    pub metadata: ProgramMetadata,
}

impl fmt::Debug for SeparableProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparableProgram")
            .field("n", &self.agents.len())
            .field("agent0", &self.agent0.is_some())
            .field("k", &self.k)
            .field("b", &self.b)
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl SeparableProgram {
    pub fn new(
        agents: Vec<Arc<dyn AgentOracle>>,
        agent0: Option<Arc<dyn AgentOracle>>,
        b: Vec<f64>,
        metadata: ProgramMetadata,
    ) -> Self {
        SeparableProgram { agents, agent0, k: b.len(), b, metadata }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Participants in solver order: agent 0 first (if any), then `1..=n`.
    pub fn participants(&self) -> Vec<(AgentId, &dyn AgentOracle)> {
        let mut out = Vec::with_capacity(self.agents.len() + 1);
        if let Some(a0) = &self.agent0 {
            out.push((0, a0.as_ref()));
        }
        out.extend(self.agents.iter().enumerate().map(|(i, a)| (i + 1, a.as_ref())));
        out
    }

    pub fn participant_count(&self) -> usize {
        self.agents.len() + usize::from(self.agent0.is_some())
    }

    pub fn oracle(&self, id: AgentId) -> Option<&dyn AgentOracle> {
        if id == 0 {
            self.agent0.as_deref()
        } else {
            self.agents.get(id - 1).map(|a| a.as_ref())
        }
    }

    /// Same agents and metadata, different constraint scalars.
    pub fn with_b(&self, b: Vec<f64>) -> Self {
        SeparableProgram { b, ..self.clone() }
    }

    pub fn is_packing(&self) -> bool {
        self.metadata.min_contribution.is_some()
    }

    /// First participant without a null action, if any.
    pub fn missing_null_action(&self) -> Option<AgentId> {
        self.participants().into_iter().find(|(_, o)| o.null_action().is_none()).map(|(id, _)| id)
    }
}

/// One play per participant, aligned with [`SeparableProgram::participants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub agents: Vec<AgentId>,
    pub plays: Vec<Play>,
}

impl PrimalPoint {
    pub fn new(agents: Vec<AgentId>, plays: Vec<Play>) -> Self {
        PrimalPoint { agents, plays }
    }

    pub fn play(&self, id: AgentId) -> Option<&Play> {
        self.agents.iter().position(|&a| a == id).map(|i| &self.plays[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &Play)> {
        self.agents.iter().copied().zip(&self.plays)
    }

    /// Everyone at the null action.
    pub fn null(program: &SeparableProgram) -> Option<Self> {
        let mut ids = Vec::new();
        let mut plays = Vec::new();
        for (id, o) in program.participants() {
            ids.push(id);
            plays.push(o.null_action()?);
        }
        Some(PrimalPoint::new(ids, plays))
    }
}

/// Running sum of plays for one agent, turned into an exact mean at the end.
#[derive(Debug, Clone)]
pub struct PlaySum {
    point: Vec<f64>,
    value: f64,
    contributions: Vec<f64>,
    count: u64,
}

impl PlaySum {
    pub fn new() -> Self {
        PlaySum { point: Vec::new(), value: 0.0, contributions: Vec::new(), count: 0 }
    }

    pub fn add(&mut self, play: &Play) {
        if self.count == 0 {
            self.point = vec![0.0; play.point.len()];
            self.contributions = vec![0.0; play.contributions.len()];
        }
        for (s, x) in self.point.iter_mut().zip(&play.point) {
            *s += x;
        }
        for (s, x) in self.contributions.iter_mut().zip(&play.contributions) {
            *s += x;
        }
        self.value += play.value;
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Play {
        let t = self.count.max(1) as f64;
        Play {
            point: self.point.iter().map(|s| s / t).collect(),
            value: self.value / t,
            contributions: self.contributions.iter().map(|s| s / t).collect(),
        }
    }
}

impl Default for PlaySum {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("point has {got} plays but the program has {expected} participants")]
    PlayCount { expected: usize, got: usize },
    #[error("agent {agent}: contribution vector has length {got}, expected k = {expected}")]
    Contributions { agent: AgentId, expected: usize, got: usize },
    #[error("constraint vector b has length {got}, expected k = {expected}")]
    ConstraintLength { expected: usize, got: usize },
}

fn check_shapes(program: &SeparableProgram, point: &PrimalPoint) -> Result<(), ModelError> {
    let expected = program.participant_count();
    if point.plays.len() != expected || point.agents.len() != expected {
        return Err(ModelError::PlayCount { expected, got: point.plays.len() });
    }
    if program.b.len() != program.k {
        return Err(ModelError::ConstraintLength { expected: program.k, got: program.b.len() });
    }
    for (id, play) in point.iter() {
        if play.contributions.len() != program.k {
            return Err(ModelError::Contributions { agent: id, expected: program.k, got: play.contributions.len() });
        }
    }
    Ok(())
}

/// Coupling gradient `l_j = Σᵢ cᵢⱼ − b_j`; positive entries are violations.
pub fn evaluate_coupling(program: &SeparableProgram, point: &PrimalPoint) -> Result<Vec<f64>, ModelError> {
    check_shapes(program, point)?;
    let mut sums = vec![0.0; program.k];
    for play in &point.plays {
        for (s, c) in sums.iter_mut().zip(&play.contributions) {
            *s += c;
        }
    }
    Ok(sums.iter().zip(&program.b).map(|(s, b)| s - b).collect())
}

/// `Σⱼ max(0, l_j)`.
pub fn total_violation(program: &SeparableProgram, point: &PrimalPoint) -> Result<f64, ModelError> {
    Ok(positive_part_sum(&evaluate_coupling(program, point)?))
}

pub fn positive_part_sum(l: &[f64]) -> f64 {
    l.iter().map(|x| x.max(0.0)).sum()
}

pub fn objective(program: &SeparableProgram, point: &PrimalPoint) -> Result<f64, ModelError> {
    check_shapes(program, point)?;
    Ok(point.plays.iter().map(|p| p.value).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FindingKind {
    Structure,
    Metadata,
    ValueBound,
    ContributionBound,
    TotalContributionBound,
    OracleFailure,
}

/// A metadata or structural inconsistency spotted by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub agent: Option<AgentId>,
    pub message: String,
}

const BOUND_SLACK: f64 = 1e-12;

/// Sample each oracle at `λ = 0` and `λ = 2τ·1` and report anything that
/// contradicts the declared shapes or metadata. Bounds on values and
/// contributions are checked for private agents only; agent 0 carries no
/// private data.
pub fn validate(program: &SeparableProgram) -> Vec<Finding> {
    let mut out = Vec::new();
    let meta = &program.metadata;
    let structural = |msg: String| Finding { kind: FindingKind::Structure, agent: None, message: msg };
    if program.k == 0 {
        out.push(structural("program has no coupling constraints (k = 0)".into()));
    }
    if program.b.len() != program.k {
        out.push(structural(format!("b has length {} but k = {}", program.b.len(), program.k)));
        return out;
    }
    if program.b.iter().any(|b| !b.is_finite()) {
        out.push(structural("b has non-finite entries".into()));
    }
    let mut meta_finding = |msg: String| {
        out.push(Finding { kind: FindingKind::Metadata, agent: None, message: msg });
    };
    for (name, v) in [
        ("sigma", meta.sigma),
        ("V", meta.value_bound),
        ("C_inf", meta.contribution_bound),
        ("C_1", meta.total_contribution_bound),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            meta_finding(format!("{name} = {v} must be finite and nonnegative"));
        }
    }
    if !(meta.tau > 0.0 && meta.tau.is_finite()) {
        meta_finding(format!("tau = {} must be positive", meta.tau));
    }
    if !(meta.width > 0.0 && meta.width.is_finite()) {
        meta_finding(format!("width = {} must be positive", meta.width));
    }
    if let Some(l) = meta.min_contribution {
        if !(l > 0.0 && l.is_finite()) {
            meta_finding(format!("L = {l} must be positive for packing programs"));
        }
    }

    let probes = [vec![0.0; program.k], vec![2.0 * meta.tau; program.k]];
    for (id, oracle) in program.participants() {
        for lambda in &probes {
            let play = match oracle.best_response(lambda) {
                Ok(p) => p,
                Err(e) => {
                    out.push(Finding {
                        kind: FindingKind::OracleFailure,
                        agent: Some(id),
                        message: format!("best response failed: {e}"),
                    });
                    continue;
                }
            };
            if play.contributions.len() != program.k {
                out.push(Finding {
                    kind: FindingKind::Structure,
                    agent: Some(id),
                    message: format!(
                        "contribution vector has length {}, expected {}",
                        play.contributions.len(),
                        program.k
                    ),
                });
                break;
            }
            if id == 0 {
                continue;
            }
            if play.value > meta.value_bound + BOUND_SLACK {
                out.push(Finding {
                    kind: FindingKind::ValueBound,
                    agent: Some(id),
                    message: format!("value {} exceeds V = {}", play.value, meta.value_bound),
                });
            }
            if let Some(c) = play.contributions.iter().find(|c| c.abs() > meta.contribution_bound + BOUND_SLACK) {
                out.push(Finding {
                    kind: FindingKind::ContributionBound,
                    agent: Some(id),
                    message: format!("contribution {c} exceeds C_inf = {}", meta.contribution_bound),
                });
            }
            let total: f64 = play.contributions.iter().map(|c| c.abs()).sum();
            if total > meta.total_contribution_bound + BOUND_SLACK {
                out.push(Finding {
                    kind: FindingKind::TotalContributionBound,
                    agent: Some(id),
                    message: format!("total contribution {total} exceeds C_1 = {}", meta.total_contribution_bound),
                });
            }
        }
    }
    // Both probes usually trip the same bound; report each agent/kind once.
    out.dedup_by(|a, b| a.agent == b.agent && a.kind == b.kind);
    out
}
