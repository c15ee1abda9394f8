//! Project matching with shared resources.
//!
//! Agents join at most one of `m` projects. Project `j` needs every resource
//! in its set `R_j`, one unit per enrolled agent, and resources can be shared
//! across projects. The resource quantities `y_r ∈ [0, n]` are public
//! variables owned by agent 0, who pays `c_r` per unit. There is one coupling
//! constraint `Σᵢ x_ij − y_r ≤ 0` per pair `(j, r ∈ R_j)`, flattened in
//! project order then resource order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AgentOracle, OracleError, Play, ProgramMetadata, SeparableProgram};

const SIMPLEX_SLACK: f64 = 1e-9;

/// Pair layout shared by all participants.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    projects: usize,
    resources: usize,
    /// `(project, resource)` for each coupling constraint.
    pairs: Vec<(usize, usize)>,
    /// Constraint indices belonging to each project.
    project_pairs: Vec<Vec<usize>>,
}

impl Layout {
    fn new(resources: usize, requirements: &[Vec<usize>]) -> Self {
        let mut pairs = Vec::new();
        let mut project_pairs = Vec::with_capacity(requirements.len());
        for (j, req) in requirements.iter().enumerate() {
            let mut own = Vec::with_capacity(req.len());
            for &r in req {
                own.push(pairs.len());
                pairs.push((j, r));
            }
            project_pairs.push(own);
        }
        Layout { projects: requirements.len(), resources, pairs, project_pairs }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectAgent {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ProjectAgent {
    fn play_of(&self, x: Vec<f64>) -> Play {
        let value = x.iter().zip(&self.values).map(|(a, b)| a * b).sum();
        let contributions = self.layout.pairs.iter().map(|&(j, _)| x[j]).collect();
        Play { point: x, value, contributions }
    }

    fn unit(&self, project: Option<usize>) -> Play {
        let mut x = vec![0.0; self.layout.projects];
        if let Some(j) = project {
            x[j] = 1.0;
        }
        self.play_of(x)
    }
}

impl AgentOracle for ProjectAgent {
    /// Join the project with the largest strictly positive margin
    /// `v_j − Σ_{r∈R_j} λ_{j,r}`; ties go to the lower project index and a
    /// zero margin stays out.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        let k = self.layout.pairs.len();
        if lambda.len() != k {
            return Err(OracleError::Dimension { expected: k, got: lambda.len() });
        }
        let mut best = None;
        let mut best_u = 0.0;
        for (j, own) in self.layout.project_pairs.iter().enumerate() {
            let u = self.values[j] - own.iter().map(|&p| lambda[p]).sum::<f64>();
            if u > best_u {
                best_u = u;
                best = Some(j);
            }
        }
        Ok(self.unit(best))
    }

    fn null_action(&self) -> Option<Play> {
        Some(self.unit(None))
    }

    fn vertices(&self) -> Option<Vec<Play>> {
        let mut out = vec![self.unit(None)];
        out.extend((0..self.layout.projects).map(|j| self.unit(Some(j))));
        Some(out)
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        if point.len() != self.layout.projects {
            return Err(OracleError::Dimension { expected: self.layout.projects, got: point.len() });
        }
        if !self.is_feasible(point) {
            return Err(OracleError::Instance("project shares must be nonnegative and sum to at most 1".into()));
        }
        Ok(self.play_of(point.to_vec()))
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        point.len() == self.layout.projects
            && point.iter().all(|&x| x >= 0.0)
            && point.iter().sum::<f64>() <= 1.0 + SIMPLEX_SLACK
    }
}

/// Agent 0: buys resource quantities `y_r ∈ [0, n]`.
#[derive(Debug, Clone)]
pub struct ResourcePlanner {
    layout: Arc<Layout>,
    costs: Vec<f64>,
    cap: f64,
}

impl ResourcePlanner {
    fn play_of(&self, y: Vec<f64>) -> Play {
        let value = -y.iter().zip(&self.costs).map(|(a, b)| a * b).sum::<f64>();
        let contributions = self.layout.pairs.iter().map(|&(_, r)| -y[r]).collect();
        Play { point: y, value, contributions }
    }
}

impl AgentOracle for ResourcePlanner {
    /// `y_r = n` iff the prices on constraints using `r` add up to strictly
    /// more than `c_r`, else 0.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        let k = self.layout.pairs.len();
        if lambda.len() != k {
            return Err(OracleError::Dimension { expected: k, got: lambda.len() });
        }
        let mut price = vec![0.0; self.layout.resources];
        for (&(_, r), &l) in self.layout.pairs.iter().zip(lambda) {
            price[r] += l;
        }
        let y = price.iter().zip(&self.costs).map(|(p, c)| if p > c { self.cap } else { 0.0 }).collect();
        Ok(self.play_of(y))
    }

    fn null_action(&self) -> Option<Play> {
        Some(self.play_of(vec![0.0; self.layout.resources]))
    }

    fn vertices(&self) -> Option<Vec<Play>> {
        let r = self.layout.resources;
        if r > 20 {
            return None;
        }
        Some(
            (0u32..(1 << r))
                .map(|mask| (0..r).map(|i| if (mask >> i) & 1 == 1 { self.cap } else { 0.0 }).collect())
                .map(|y| self.play_of(y))
                .collect(),
        )
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        if point.len() != self.layout.resources {
            return Err(OracleError::Dimension { expected: self.layout.resources, got: point.len() });
        }
        if !self.is_feasible(point) {
            return Err(OracleError::Instance(format!("resource quantities must lie in [0, {}]", self.cap)));
        }
        Ok(self.play_of(point.to_vec()))
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        point.len() == self.layout.resources && point.iter().all(|y| (0.0..=self.cap).contains(y))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SharedData {
    resources: usize,
    costs: Vec<f64>,
    requirements: Vec<Vec<usize>>,
    valuations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SharedData", into = "SharedData")]
pub struct SharedResourceInstance {
    costs: Vec<f64>,
    requirements: Vec<Vec<usize>>,
    valuations: Vec<Vec<f64>>,
    layout: Arc<Layout>,
}

impl TryFrom<SharedData> for SharedResourceInstance {
    type Error = OracleError;

    fn try_from(d: SharedData) -> Result<Self, Self::Error> {
        if d.costs.len() != d.resources {
            return Err(OracleError::Instance(format!("{} costs for {} resources", d.costs.len(), d.resources)));
        }
        SharedResourceInstance::new(d.costs, d.requirements, d.valuations)
    }
}

impl From<SharedResourceInstance> for SharedData {
    fn from(s: SharedResourceInstance) -> Self {
        SharedData { resources: s.costs.len(), costs: s.costs, requirements: s.requirements, valuations: s.valuations }
    }
}

impl SharedResourceInstance {
    /// `requirements[j]` lists the resources project `j` needs; duplicates are
    /// dropped and the list is sorted.
    pub fn new(costs: Vec<f64>, requirements: Vec<Vec<usize>>, valuations: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let resources = costs.len();
        if costs.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(OracleError::Instance("resource costs must lie in [0, 1]".into()));
        }
        let mut requirements = requirements;
        for (j, req) in requirements.iter_mut().enumerate() {
            req.sort_unstable();
            req.dedup();
            if req.iter().any(|&r| r >= resources) {
                return Err(OracleError::Instance(format!("project {j} needs a resource that does not exist")));
            }
        }
        let layout = Layout::new(resources, &requirements);
        if layout.pairs.is_empty() {
            return Err(OracleError::Instance("no project requires any resource".into()));
        }
        for (i, row) in valuations.iter().enumerate() {
            if row.len() != requirements.len() || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(OracleError::Instance(format!(
                    "agent {} needs {} project values in [0, 1]",
                    i + 1,
                    requirements.len()
                )));
            }
        }
        Ok(SharedResourceInstance { costs, requirements, valuations, layout: Arc::new(layout) })
    }

    pub fn k(&self) -> usize {
        self.layout.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.layout.pairs
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn requirements(&self) -> &[Vec<usize>] {
        &self.requirements
    }

    pub fn valuations(&self) -> &[Vec<f64>] {
        &self.valuations
    }

    pub fn agent(&self, i: usize) -> ProjectAgent {
        ProjectAgent { layout: Arc::clone(&self.layout), values: self.valuations[i].clone() }
    }

    pub fn planner(&self) -> ResourcePlanner {
        ResourcePlanner {
            layout: Arc::clone(&self.layout),
            costs: self.costs.clone(),
            cap: self.valuations.len() as f64,
        }
    }

    pub fn metadata(&self) -> ProgramMetadata {
        let d = self.requirements.iter().map(Vec::len).max().unwrap_or(1).max(1) as f64;
        let n = self.valuations.len() as f64;
        ProgramMetadata {
            sigma: (2.0 * d).sqrt(),
            tau: 1.0,
            width: n.max(1.0),
            value_bound: 1.0,
            contribution_bound: 1.0,
            total_contribution_bound: d,
            min_contribution: None,
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        let agents = (0..self.valuations.len()).map(|i| Arc::new(self.agent(i)) as Arc<dyn AgentOracle>).collect();
        SeparableProgram::new(agents, Some(Arc::new(self.planner())), vec![0.0; self.k()], self.metadata())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_project(n: usize, cost: f64) -> SharedResourceInstance {
        SharedResourceInstance::new(vec![cost], vec![vec![0]], vec![vec![0.5]; n]).unwrap()
    }

    #[test]
    fn planner_examples() {
        let p = single_project(10, 0.5).planner();
        assert_eq!(p.best_response(&[0.0]).unwrap().point, vec![0.0]);
        assert_eq!(p.best_response(&[0.8]).unwrap().point, vec![10.0]);
        assert_eq!(p.best_response(&[0.5]).unwrap().point, vec![0.0]);
    }

    #[test]
    fn planner_sums_prices_over_projects() {
        // Resource 0 is shared by both projects.
        let inst =
            SharedResourceInstance::new(vec![0.5, 0.2], vec![vec![0], vec![0, 1]], vec![vec![0.3, 0.9]]).unwrap();
        assert_eq!(inst.pairs(), &[(0, 0), (1, 0), (1, 1)]);
        let p = inst.planner().best_response(&[0.3, 0.3, 0.1]).unwrap();
        assert_eq!(p.point, vec![1.0, 0.0]);
        assert_eq!(p.contributions, vec![-1.0, -1.0, 0.0]);
        assert!((p.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn agent_picks_best_positive_project() {
        let inst =
            SharedResourceInstance::new(vec![0.5, 0.2], vec![vec![0], vec![0, 1]], vec![vec![0.3, 0.9]]).unwrap();
        let a = inst.agent(0);
        assert_eq!(a.best_response(&[0.0; 3]).unwrap().point, vec![0.0, 1.0]);
        assert_eq!(a.best_response(&[0.0, 0.5, 0.5]).unwrap().point, vec![1.0, 0.0]);
        assert_eq!(a.best_response(&[0.3, 0.9, 0.0]).unwrap().point, vec![0.0, 0.0]);
        assert_eq!(a.best_response(&[0.0, 0.5, 0.5]).unwrap().contributions, vec![1.0, 0.0, 0.0]);
    }
}
