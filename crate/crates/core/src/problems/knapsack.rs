//! Multi-dimensional fractional knapsack: each item is an agent choosing
//! `x ∈ [0, 1]`, item `i` uses `w_ij·x` of capacity `j`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AgentOracle, OracleError, Play, ProgramMetadata, SeparableProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub value: f64,
    pub weights: Vec<f64>,
}

impl KnapsackItem {
    fn play(&self, x: f64) -> Play {
        Play { point: vec![x], value: self.value * x, contributions: self.weights.iter().map(|w| w * x).collect() }
    }
}

impl AgentOracle for KnapsackItem {
    /// Take the item iff its margin `v − ⟨λ, w⟩` is strictly positive; ties
    /// resolve to the null action.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        if lambda.len() != self.weights.len() {
            return Err(OracleError::Dimension { expected: self.weights.len(), got: lambda.len() });
        }
        let cost: f64 = lambda.iter().zip(&self.weights).map(|(l, w)| l * w).sum();
        Ok(self.play(if self.value - cost > 0.0 { 1.0 } else { 0.0 }))
    }

    fn null_action(&self) -> Option<Play> {
        Some(self.play(0.0))
    }

    fn vertices(&self) -> Option<Vec<Play>> {
        Some(vec![self.play(0.0), self.play(1.0)])
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        match point {
            [x] if self.is_feasible(point) => Ok(self.play(*x)),
            [x] => Err(OracleError::Instance(format!("x = {x} outside [0, 1]"))),
            _ => Err(OracleError::Dimension { expected: 1, got: point.len() }),
        }
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        matches!(point, [x] if (0.0..=1.0).contains(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub items: Vec<KnapsackItem>,
    pub capacities: Vec<f64>,
}

impl KnapsackInstance {
    /// `weights[i]` is item `i`'s weight vector; every one must have length
    /// `capacities.len()`.
    pub fn new(values: Vec<f64>, weights: Vec<Vec<f64>>, capacities: Vec<f64>) -> Result<Self, OracleError> {
        if values.len() != weights.len() {
            return Err(OracleError::Instance(format!("{} values but {} weight rows", values.len(), weights.len())));
        }
        let inst = KnapsackInstance {
            items: values.into_iter().zip(weights).map(|(value, weights)| KnapsackItem { value, weights }).collect(),
            capacities,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<(), OracleError> {
        let k = self.capacities.len();
        if k == 0 {
            return Err(OracleError::Instance("knapsack needs at least one capacity".into()));
        }
        if self.capacities.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(OracleError::Instance("capacities must be positive".into()));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.weights.len() != k {
                return Err(OracleError::Instance(format!(
                    "item {} has {} weights, expected {k}",
                    i + 1,
                    item.weights.len()
                )));
            }
            if !(0.0..=1.0).contains(&item.value) || item.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(OracleError::Instance(format!("item {} has data outside [0, 1]", i + 1)));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.capacities.len()
    }

    /// `τ = max v/w` over positive weights, `L` the smallest positive weight.
    pub fn metadata(&self) -> ProgramMetadata {
        let k = self.k() as f64;
        let n = self.items.len() as f64;
        let mut tau: f64 = 0.0;
        let mut min_w = f64::INFINITY;
        for item in &self.items {
            for &w in item.weights.iter().filter(|w| **w > 0.0) {
                tau = tau.max(item.value / w);
                min_w = min_w.min(w);
            }
        }
        let max_cap = self.capacities.iter().copied().fold(0.0, f64::max);
        ProgramMetadata {
            sigma: k.sqrt(),
            tau: if tau > 0.0 { tau } else { 1.0 },
            width: n.max(max_cap).max(1.0),
            value_bound: 1.0,
            contribution_bound: 1.0,
            total_contribution_bound: k,
            min_contribution: Some(if min_w.is_finite() { min_w } else { 1.0 }),
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        let agents = self.items.iter().map(|it| Arc::new(it.clone()) as Arc<dyn AgentOracle>).collect();
        SeparableProgram::new(agents, None, self.capacities.clone(), self.metadata())
    }
}
