//! d-demand allocation: agents bid on bundles of at most `d` goods out of `k`,
//! good `j` has supply `s_j`.
//!
//! An agent's point is a fractional choice over its bundles (one coordinate
//! per nonempty bundle, summing to at most 1); vertices are the empty choice
//! and the unit vectors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AgentOracle, OracleError, Play, ProgramMetadata, SeparableProgram};

/// Largest bundle table a single oracle will brute-force.
pub const MAX_BUNDLES: usize = 1_000_000;

/// Slack for sums of averaged points that should equal 1.
const SIMPLEX_SLACK: f64 = 1e-9;

/// Every nonempty subset of `0..k` with at most `d` elements, in lexicographic
/// order of their sorted index lists (`{0} < {0,1} < {1}`).
pub fn enumerate_bundles(k: usize, d: usize) -> Result<Vec<Vec<usize>>, OracleError> {
    let count = bundle_count(k, d);
    if count > MAX_BUNDLES {
        return Err(OracleError::Scale(format!(
            "{count} bundles of at most {d} out of {k} goods exceeds {MAX_BUNDLES}"
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut prefix = Vec::with_capacity(d);
    fn walk(start: usize, k: usize, d: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for g in start..k {
            prefix.push(g);
            out.push(prefix.clone());
            if prefix.len() < d {
                walk(g + 1, k, d, prefix, out);
            }
            prefix.pop();
        }
    }
    walk(0, k, d, &mut prefix, &mut out);
    Ok(out)
}

/// `Σ_{s=1..d} C(k, s)`, saturating.
pub fn bundle_count(k: usize, d: usize) -> usize {
    let mut total: usize = 0;
    let mut c: u128 = 1;
    for s in 1..=d.min(k) {
        c = c * (k - s + 1) as u128 / s as u128;
        total = total.saturating_add(usize::try_from(c).unwrap_or(usize::MAX));
    }
    total
}

#[derive(Debug, Clone)]
pub struct DDemandAgent {
    k: usize,
    bundles: Arc<Vec<Vec<usize>>>,
    values: Vec<f64>,
}

impl DDemandAgent {
    fn unit(&self, idx: Option<usize>) -> Play {
        let mut point = vec![0.0; self.bundles.len()];
        let mut contributions = vec![0.0; self.k];
        let mut value = 0.0;
        if let Some(b) = idx {
            point[b] = 1.0;
            value = self.values[b];
            for &g in &self.bundles[b] {
                contributions[g] = 1.0;
            }
        }
        Play { point, value, contributions }
    }

    pub fn bundle(&self, idx: usize) -> &[usize] {
        &self.bundles[idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl AgentOracle for DDemandAgent {
    /// Brute-force demand oracle. The empty bundle comes first and a later
    /// bundle wins only on strict improvement, so ties go to the
    /// lexicographically smallest bundle.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        if lambda.len() != self.k {
            return Err(OracleError::Dimension { expected: self.k, got: lambda.len() });
        }
        let mut best = None;
        let mut best_u = 0.0;
        for (b, goods) in self.bundles.iter().enumerate() {
            let u = self.values[b] - goods.iter().map(|&g| lambda[g]).sum::<f64>();
            if u > best_u {
                best_u = u;
                best = Some(b);
            }
        }
        Ok(self.unit(best))
    }

    fn null_action(&self) -> Option<Play> {
        Some(self.unit(None))
    }

    fn vertices(&self) -> Option<Vec<Play>> {
        let mut out = vec![self.unit(None)];
        out.extend((0..self.bundles.len()).map(|b| self.unit(Some(b))));
        Some(out)
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        if point.len() != self.bundles.len() {
            return Err(OracleError::Dimension { expected: self.bundles.len(), got: point.len() });
        }
        if !self.is_feasible(point) {
            return Err(OracleError::Instance("bundle weights must be nonnegative and sum to at most 1".into()));
        }
        let mut contributions = vec![0.0; self.k];
        let mut value = 0.0;
        for (b, &x) in point.iter().enumerate() {
            value += self.values[b] * x;
            for &g in &self.bundles[b] {
                contributions[g] += x;
            }
        }
        Ok(Play { point: point.to_vec(), value, contributions })
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        point.len() == self.bundles.len()
            && point.iter().all(|&x| x >= 0.0)
            && point.iter().sum::<f64>() <= 1.0 + SIMPLEX_SLACK
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DDemandData {
    supplies: Vec<f64>,
    d: usize,
    valuations: Vec<Vec<f64>>,
}

/// Valuations are stored as explicit tables aligned with
/// [`enumerate_bundles`]`(k, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DDemandData", into = "DDemandData")]
pub struct DDemandInstance {
    supplies: Vec<f64>,
    d: usize,
    valuations: Vec<Vec<f64>>,
    bundles: Arc<Vec<Vec<usize>>>,
}

impl TryFrom<DDemandData> for DDemandInstance {
    type Error = OracleError;

    fn try_from(data: DDemandData) -> Result<Self, Self::Error> {
        DDemandInstance::new(data.supplies, data.d, data.valuations)
    }
}

impl From<DDemandInstance> for DDemandData {
    fn from(inst: DDemandInstance) -> Self {
        DDemandData { supplies: inst.supplies, d: inst.d, valuations: inst.valuations }
    }
}

impl DDemandInstance {
    pub fn new(supplies: Vec<f64>, d: usize, valuations: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let k = supplies.len();
        if k == 0 || d == 0 {
            return Err(OracleError::Instance("d-demand needs k ≥ 1 goods and d ≥ 1".into()));
        }
        if supplies.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(OracleError::Instance("supplies must be positive".into()));
        }
        let bundles = enumerate_bundles(k, d)?;
        for (i, row) in valuations.iter().enumerate() {
            if row.len() != bundles.len() {
                return Err(OracleError::Instance(format!(
                    "agent {} has {} bundle values, expected {}",
                    i + 1,
                    row.len(),
                    bundles.len()
                )));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(OracleError::Instance(format!("agent {} has values outside [0, 1]", i + 1)));
            }
        }
        Ok(DDemandInstance { supplies, d, valuations, bundles: Arc::new(bundles) })
    }

    pub fn k(&self) -> usize {
        self.supplies.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn supplies(&self) -> &[f64] {
        &self.supplies
    }

    pub fn valuations(&self) -> &[Vec<f64>] {
        &self.valuations
    }

    pub fn bundles(&self) -> &[Vec<usize>] {
        &self.bundles
    }

    pub fn agent(&self, i: usize) -> DDemandAgent {
        DDemandAgent { k: self.k(), bundles: Arc::clone(&self.bundles), values: self.valuations[i].clone() }
    }

    pub fn metadata(&self) -> ProgramMetadata {
        let n = self.valuations.len() as f64;
        let d = self.d.min(self.k()) as f64;
        let max_supply = self.supplies.iter().copied().fold(0.0, f64::max);
        ProgramMetadata {
            sigma: 2f64.sqrt() * d,
            tau: 1.0,
            width: (n * d).max(max_supply).max(1.0),
            value_bound: 1.0,
            contribution_bound: 1.0,
            total_contribution_bound: d,
            min_contribution: Some(1.0),
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        let agents = (0..self.valuations.len()).map(|i| Arc::new(self.agent(i)) as Arc<dyn AgentOracle>).collect();
        SeparableProgram::new(agents, None, self.supplies.clone(), self.metadata())
    }
}
