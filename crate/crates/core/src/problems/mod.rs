//! Example problem classes with their best-response oracles, analytically
//! known metadata, and seeded generators.

pub mod ddemand;
pub mod flow;
pub mod knapsack;
pub mod schedule;
pub mod shared;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{OracleError, ProgramMetadata, SeparableProgram};
use crate::rng::{substream, Purpose, Stream};

pub use ddemand::DDemandInstance;
pub use flow::{Commodity, FlowGraph, FlowInstance};
pub use knapsack::KnapsackInstance;
pub use schedule::{Household, ScheduleInstance};
pub use shared::SharedResourceInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Knapsack,
    Ddemand,
    Flow,
    Schedule,
    Shared,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] =
        [ProblemKind::Knapsack, ProblemKind::Ddemand, ProblemKind::Flow, ProblemKind::Schedule, ProblemKind::Shared];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Knapsack => "knapsack",
            ProblemKind::Ddemand => "ddemand",
            ProblemKind::Flow => "flow",
            ProblemKind::Schedule => "schedule",
            ProblemKind::Shared => "shared",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported problem kind '{0}' (expected one of knapsack, ddemand, flow, schedule, shared)")]
pub struct UnknownKind(pub String);

impl FromStr for ProblemKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knapsack" => Ok(ProblemKind::Knapsack),
            "ddemand" | "d-demand" => Ok(ProblemKind::Ddemand),
            "flow" => Ok(ProblemKind::Flow),
            "schedule" => Ok(ProblemKind::Schedule),
            "shared" => Ok(ProblemKind::Shared),
            other => Err(UnknownKind(other.to_string())),
        }
    }
}

/// Size parameters for [`generate`]. Their meaning depends on the kind:
///
/// | kind     | `k`                  | `d`                     | `m`                 |
/// |----------|----------------------|-------------------------|---------------------|
/// | knapsack | constraints          | unused                  | unused              |
/// | ddemand  | goods                | bundle size cap         | unused              |
/// | flow     | intermediate layers  | unused                  | nodes per layer     |
/// | schedule | intervals            | allowance `d_max`       | slots per interval  |
/// | shared   | resources            | resources per project   | projects            |
///
/// `n` is always the number of private agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub m: usize,
}

impl GenParams {
    pub fn new(n: usize, k: usize) -> Self {
        GenParams { n, k, d: 2, m: 2 }
    }

    pub fn with_d(self, d: usize) -> Self {
        GenParams { d, ..self }
    }

    pub fn with_m(self, m: usize) -> Self {
        GenParams { m, ..self }
    }
}

/// A concrete instance of one of the example classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Knapsack(KnapsackInstance),
    Ddemand(DDemandInstance),
    Flow(FlowInstance),
    Schedule(ScheduleInstance),
    Shared(SharedResourceInstance),
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Instance::Knapsack(_) => ProblemKind::Knapsack,
            Instance::Ddemand(_) => ProblemKind::Ddemand,
            Instance::Flow(_) => ProblemKind::Flow,
            Instance::Schedule(_) => ProblemKind::Schedule,
            Instance::Shared(_) => ProblemKind::Shared,
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        match self {
            Instance::Knapsack(i) => i.to_program(),
            Instance::Ddemand(i) => i.to_program(),
            Instance::Flow(i) => i.to_program(),
            Instance::Schedule(i) => i.to_program(),
            Instance::Shared(i) => i.to_program(),
        }
    }

    pub fn metadata(&self) -> ProgramMetadata {
        match self {
            Instance::Knapsack(i) => i.metadata(),
            Instance::Ddemand(i) => i.metadata(),
            Instance::Flow(i) => i.metadata(),
            Instance::Schedule(i) => i.metadata(),
            Instance::Shared(i) => i.metadata(),
        }
    }

    /// Number of private agents.
    pub fn n(&self) -> usize {
        match self {
            Instance::Knapsack(i) => i.items.len(),
            Instance::Ddemand(i) => i.valuations().len(),
            Instance::Flow(i) => i.commodities().len(),
            Instance::Schedule(i) => i.households().len(),
            Instance::Shared(i) => i.valuations().len(),
        }
    }

    pub fn payload(&self) -> serde_json::Value {
        let v = match self {
            Instance::Knapsack(i) => serde_json::to_value(i),
            Instance::Ddemand(i) => serde_json::to_value(i),
            Instance::Flow(i) => serde_json::to_value(i),
            Instance::Schedule(i) => serde_json::to_value(i),
            Instance::Shared(i) => serde_json::to_value(i),
        };
        v.expect("instances serialize to plain JSON")
    }

    pub fn from_payload(kind: ProblemKind, payload: serde_json::Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            ProblemKind::Knapsack => {
                let inst: KnapsackInstance = serde_json::from_value(payload)?;
                inst.check().map_err(serde::de::Error::custom)?;
                Instance::Knapsack(inst)
            }
            ProblemKind::Ddemand => Instance::Ddemand(serde_json::from_value(payload)?),
            ProblemKind::Flow => Instance::Flow(serde_json::from_value(payload)?),
            ProblemKind::Schedule => Instance::Schedule(serde_json::from_value(payload)?),
            ProblemKind::Shared => Instance::Shared(serde_json::from_value(payload)?),
        })
    }
}

fn unit(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}

fn positive(name: &str, v: usize) -> Result<(), OracleError> {
    if v == 0 {
        Err(OracleError::Instance(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Integer capacity in `1..=max(1, n/2)`, so constraints can bind.
fn capacity(rng: &mut Stream, n: usize) -> f64 {
    rng.random_range(1..=(n / 2).max(1)) as f64
}

fn knapsack_item(rng: &mut Stream, k: usize) -> knapsack::KnapsackItem {
    // Weights stay away from 0 so that τ = max v/w stays moderate.
    knapsack::KnapsackItem { value: unit(rng), weights: (0..k).map(|_| 0.1 + 0.9 * unit(rng)).collect() }
}

fn ddemand_row(rng: &mut Stream, bundles: usize) -> Vec<f64> {
    (0..bundles).map(|_| unit(rng)).collect()
}

fn flow_costs(rng: &mut Stream, edges: usize) -> Vec<f64> {
    (0..edges).map(|_| unit(rng)).collect()
}

fn household(rng: &mut Stream, intervals: usize, slots: usize, d_max: usize) -> Household {
    let values = (0..intervals * slots).map(|_| unit(rng)).collect();
    let mut budget = d_max;
    let demands = (0..intervals)
        .map(|_| {
            let d = if budget > 0 && rng.random_bool(0.5) { 1 } else { 0 };
            budget -= d;
            d as u32
        })
        .collect();
    Household { values, demands }
}

fn project_values(rng: &mut Stream, projects: usize) -> Vec<f64> {
    (0..projects).map(|_| unit(rng)).collect()
}

/// Seeded pseudo-random instance; the same `(kind, params, seed)` always
/// yields the same instance.
pub fn generate(kind: ProblemKind, params: GenParams, seed: u64) -> Result<Instance, OracleError> {
    let GenParams { n, k, d, m } = params;
    positive("n", n)?;
    positive("k", k)?;
    let mut rng = substream(seed, Purpose::Generate, &[kind as u64]);
    let rng = &mut rng;
    Ok(match kind {
        ProblemKind::Knapsack => {
            let items: Vec<_> = (0..n).map(|_| knapsack_item(rng, k)).collect();
            let capacities =
                (0..k).map(|j| (0.5 * items.iter().map(|it| it.weights[j]).sum::<f64>()).max(0.1)).collect();
            let inst = KnapsackInstance { items, capacities };
            inst.check()?;
            Instance::Knapsack(inst)
        }
        ProblemKind::Ddemand => {
            positive("d", d)?;
            let supplies: Vec<f64> = (0..k).map(|_| capacity(rng, n)).collect();
            let bundles = ddemand::bundle_count(k, d);
            let valuations = (0..n).map(|_| ddemand_row(rng, bundles)).collect();
            Instance::Ddemand(DDemandInstance::new(supplies, d, valuations)?)
        }
        ProblemKind::Flow => {
            positive("m", m)?;
            let (graph, edges) = layered_graph(k, m)?;
            let capacities = (0..edges).map(|_| capacity(rng, n)).collect();
            let sink = graph.nodes() - 1;
            let commodities = (0..n).map(|_| Commodity { source: 0, sink, costs: flow_costs(rng, edges) }).collect();
            Instance::Flow(FlowInstance::new(graph, capacities, commodities)?)
        }
        ProblemKind::Schedule => {
            positive("m", m)?;
            positive("d", d)?;
            let capacities = (0..k * m).map(|_| capacity(rng, n)).collect();
            let households = (0..n).map(|_| household(rng, k, m, d)).collect();
            Instance::Schedule(ScheduleInstance::new(k, m, d as u32, capacities, households)?)
        }
        ProblemKind::Shared => {
            positive("m", m)?;
            positive("d", d)?;
            let costs: Vec<f64> = (0..k).map(|_| unit(rng)).collect();
            let requirements = (0..m)
                .map(|_| {
                    let size = rng.random_range(1..=d.min(k));
                    sample(rng, k, size).into_vec()
                })
                .collect();
            let valuations = (0..n).map(|_| project_values(rng, m)).collect();
            Instance::Shared(SharedResourceInstance::new(costs, requirements, valuations)?)
        }
    })
}

/// Source `0`, `layers` layers of `width` nodes, sink last; consecutive layers
/// are fully connected.
fn layered_graph(layers: usize, width: usize) -> Result<(FlowGraph, usize), OracleError> {
    let nodes = 2 + layers * width;
    let sink = nodes - 1;
    let node = |layer: usize, i: usize| 1 + layer * width + i;
    let mut edges = Vec::new();
    for i in 0..width {
        edges.push((0, node(0, i)));
    }
    for l in 0..layers - 1 {
        for i in 0..width {
            for j in 0..width {
                edges.push((node(l, i), node(l + 1, j)));
            }
        }
    }
    for i in 0..width {
        edges.push((node(layers - 1, i), sink));
    }
    let m = edges.len();
    Ok((FlowGraph::new(nodes, edges)?, m))
}

/// Neighboring instance: agent `agent` (0-based among private agents) gets
/// freshly drawn private data, everything else is unchanged.
pub fn resample_agent(instance: &Instance, agent: usize, seed: u64) -> Result<Instance, OracleError> {
    let n = instance.n();
    if agent >= n {
        return Err(OracleError::Instance(format!("agent index {agent} out of range for n = {n}")));
    }
    let mut rng = substream(seed, Purpose::Generate, &[instance.kind() as u64, agent as u64, 1]);
    let rng = &mut rng;
    Ok(match instance {
        Instance::Knapsack(inst) => {
            let mut inst = inst.clone();
            inst.items[agent] = knapsack_item(rng, inst.k());
            Instance::Knapsack(inst)
        }
        Instance::Ddemand(inst) => {
            let mut rows = inst.valuations().to_vec();
            rows[agent] = ddemand_row(rng, inst.bundles().len());
            Instance::Ddemand(DDemandInstance::new(inst.supplies().to_vec(), inst.d(), rows)?)
        }
        Instance::Flow(inst) => {
            let mut commodities = inst.commodities().to_vec();
            commodities[agent].costs = flow_costs(rng, inst.graph().edges().len());
            Instance::Flow(FlowInstance::new(inst.graph().clone(), inst.capacities().to_vec(), commodities)?)
        }
        Instance::Schedule(inst) => {
            let mut hh = inst.households().to_vec();
            hh[agent] = household(rng, inst.intervals(), inst.slots(), inst.d_max() as usize);
            Instance::Schedule(ScheduleInstance::new(
                inst.intervals(),
                inst.slots(),
                inst.d_max(),
                inst.capacities().to_vec(),
                hh,
            )?)
        }
        Instance::Shared(inst) => {
            let mut rows = inst.valuations().to_vec();
            rows[agent] = project_values(rng, inst.requirements().len());
            Instance::Shared(SharedResourceInstance::new(inst.costs().to_vec(), inst.requirements().to_vec(), rows)?)
        }
    })
}
