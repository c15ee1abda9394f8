//! Electricity scheduling: each agent needs `d_t` slots in interval `t`, may
//! take at most `d_max` slots overall, and values slot `(t, q)` at `v_tq`.
//! Slot `(t, q)` has capacity `c_tq` shared by everyone; constraints are
//! indexed row-major, `t·Q + q`.
//!
//! With integral demands the personal constraints form a laminar family, so
//! the feasible set is an integral polytope and best responses are 0/1.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AgentOracle, OracleError, Play, ProgramMetadata, SeparableProgram};

const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    /// Row-major `intervals × slots` values in `[0, 1]`.
    pub values: Vec<f64>,
    /// Required slots per interval.
    pub demands: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct ScheduleAgent {
    intervals: usize,
    slots: usize,
    d_max: u32,
    household: Household,
}

impl ScheduleAgent {
    fn play_of(&self, x: Vec<f64>) -> Play {
        let value = x.iter().zip(&self.household.values).map(|(a, b)| a * b).sum();
        Play { contributions: x.clone(), point: x, value }
    }

    fn forced(&self) -> u32 {
        self.household.demands.iter().sum()
    }
}

/// Order slot indices by margin, highest first, ties to the lower index.
fn by_margin(idx: &mut [usize], margin: &[f64]) {
    idx.sort_by(|&a, &b| margin[b].total_cmp(&margin[a]).then(a.cmp(&b)));
}

impl AgentOracle for ScheduleAgent {
    /// Fill the `d_t` best slots of each interval by margin `v − λ`, then
    /// spend the remaining allowance on the globally best strictly positive
    /// margins among the slots left over.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        let dim = self.intervals * self.slots;
        if lambda.len() != dim {
            return Err(OracleError::Dimension { expected: dim, got: lambda.len() });
        }
        let margin: Vec<f64> = self.household.values.iter().zip(lambda).map(|(v, l)| v - l).collect();
        let mut x = vec![0.0; dim];
        let mut leftover = Vec::with_capacity(dim);
        for t in 0..self.intervals {
            let mut idx: Vec<usize> = (t * self.slots..(t + 1) * self.slots).collect();
            by_margin(&mut idx, &margin);
            let need = self.household.demands[t] as usize;
            for &i in &idx[..need] {
                x[i] = 1.0;
            }
            leftover.extend_from_slice(&idx[need..]);
        }
        by_margin(&mut leftover, &margin);
        let extra = (self.d_max - self.forced()) as usize;
        for &i in leftover.iter().take(extra) {
            if margin[i] > 0.0 {
                x[i] = 1.0;
            }
        }
        Ok(self.play_of(x))
    }

    /// Exists only when the agent has no mandatory demand.
    fn null_action(&self) -> Option<Play> {
        (self.forced() == 0).then(|| self.play_of(vec![0.0; self.intervals * self.slots]))
    }

    /// All 0/1 assignments meeting the demands within the allowance.
    fn vertices(&self) -> Option<Vec<Play>> {
        let dim = self.intervals * self.slots;
        if dim > 20 {
            return None;
        }
        let mut out = Vec::new();
        for mask in 0u32..(1 << dim) {
            let x: Vec<f64> = (0..dim).map(|i| f64::from((mask >> i) & 1)).collect();
            if self.is_feasible(&x) {
                out.push(self.play_of(x));
            }
        }
        Some(out)
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        let dim = self.intervals * self.slots;
        if point.len() != dim {
            return Err(OracleError::Dimension { expected: dim, got: point.len() });
        }
        if !self.is_feasible(point) {
            return Err(OracleError::Instance("schedule violates demand or allowance".into()));
        }
        Ok(self.play_of(point.to_vec()))
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        if point.len() != self.intervals * self.slots
            || point.iter().any(|x| !(0.0..=1.0 + FEASIBILITY_SLACK).contains(x))
        {
            return false;
        }
        let meets_demand = point
            .chunks(self.slots)
            .zip(&self.household.demands)
            .all(|(row, &d)| row.iter().sum::<f64>() >= f64::from(d) - FEASIBILITY_SLACK);
        meets_demand && point.iter().sum::<f64>() <= f64::from(self.d_max) + FEASIBILITY_SLACK
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleData {
    intervals: usize,
    slots: usize,
    d_max: u32,
    capacities: Vec<f64>,
    households: Vec<Household>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleData", into = "ScheduleData")]
pub struct ScheduleInstance {
    intervals: usize,
    slots: usize,
    d_max: u32,
    capacities: Vec<f64>,
    households: Vec<Household>,
}

impl TryFrom<ScheduleData> for ScheduleInstance {
    type Error = OracleError;

    fn try_from(d: ScheduleData) -> Result<Self, Self::Error> {
        ScheduleInstance::new(d.intervals, d.slots, d.d_max, d.capacities, d.households)
    }
}

impl From<ScheduleInstance> for ScheduleData {
    fn from(s: ScheduleInstance) -> Self {
        ScheduleData {
            intervals: s.intervals,
            slots: s.slots,
            d_max: s.d_max,
            capacities: s.capacities,
            households: s.households,
        }
    }
}

impl ScheduleInstance {
    pub fn new(
        intervals: usize,
        slots: usize,
        d_max: u32,
        capacities: Vec<f64>,
        households: Vec<Household>,
    ) -> Result<Self, OracleError> {
        let dim = intervals * slots;
        if dim == 0 {
            return Err(OracleError::Instance("schedule needs at least one interval and slot".into()));
        }
        if capacities.len() != dim || capacities.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(OracleError::Instance(format!("need {dim} positive slot capacities")));
        }
        for (i, h) in households.iter().enumerate() {
            let who = i + 1;
            if h.values.len() != dim || h.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(OracleError::Instance(format!("agent {who} needs {dim} slot values in [0, 1]")));
            }
            if h.demands.len() != intervals {
                return Err(OracleError::Instance(format!("agent {who} needs {intervals} interval demands")));
            }
            if let Some(t) = h.demands.iter().position(|&d| d as usize > slots) {
                return Err(OracleError::Instance(format!(
                    "agent {who} demands {} slots in interval {t} which has only {slots}",
                    h.demands[t]
                )));
            }
            if h.demands.iter().sum::<u32>() > d_max {
                return Err(OracleError::Instance(format!("agent {who} demands more than d_max = {d_max}")));
            }
        }
        Ok(ScheduleInstance { intervals, slots, d_max, capacities, households })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    pub fn agent(&self, i: usize) -> ScheduleAgent {
        ScheduleAgent {
            intervals: self.intervals,
            slots: self.slots,
            d_max: self.d_max,
            household: self.households[i].clone(),
        }
    }

    pub fn metadata(&self) -> ProgramMetadata {
        let d = f64::from(self.d_max.max(1));
        let n = self.households.len() as f64;
        let max_cap = self.capacities.iter().copied().fold(0.0, f64::max);
        ProgramMetadata {
            sigma: 2.0 * d.sqrt(),
            tau: 1.0,
            width: (n * d).max(max_cap).max(1.0),
            value_bound: d,
            contribution_bound: 1.0,
            total_contribution_bound: d,
            min_contribution: None,
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        let agents = (0..self.households.len()).map(|i| Arc::new(self.agent(i)) as Arc<dyn AgentOracle>).collect();
        SeparableProgram::new(agents, None, self.capacities.clone(), self.metadata())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(intervals: usize, slots: usize, d_max: u32, values: Vec<f64>, demands: Vec<u32>) -> ScheduleAgent {
        ScheduleInstance::new(
            intervals,
            slots,
            d_max,
            vec![1.0; intervals * slots],
            vec![Household { values, demands }],
        )
        .unwrap()
        .agent(0)
    }

    #[test]
    fn zero_demand_negative_margins_is_idle() {
        let a = agent(1, 2, 1, vec![0.1, 0.2], vec![0]);
        assert_eq!(a.best_response(&[0.5, 0.5]).unwrap().point, vec![0.0, 0.0]);
    }

    #[test]
    fn forced_slot_takes_best_margin() {
        let a = agent(1, 2, 1, vec![0.5, 0.0], vec![1]);
        assert_eq!(a.best_response(&[0.0, 0.2]).unwrap().point, vec![1.0, 0.0]);
    }

    #[test]
    fn forced_slot_even_at_negative_margin() {
        let a = agent(1, 2, 1, vec![0.1, 0.0], vec![1]);
        assert_eq!(a.best_response(&[0.5, 0.5]).unwrap().point, vec![1.0, 0.0]);
    }

    #[test]
    fn allowance_goes_to_best_extra_slot() {
        // Interval 0 needs one slot; one unit of slack remains for the extra
        // slots with margins 0.3 and 0.1.
        let a = agent(2, 2, 2, vec![0.9, 0.0, 0.3, 0.1], vec![1, 0]);
        assert_eq!(a.best_response(&[0.0; 4]).unwrap().point, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn infeasible_demand_is_rejected() {
        let r =
            ScheduleInstance::new(1, 2, 3, vec![1.0; 2], vec![Household { values: vec![0.1, 0.1], demands: vec![3] }]);
        assert!(matches!(r, Err(OracleError::Instance(_))));
    }
}
