//! Multi-commodity min-cost flow on a directed acyclic graph.
//!
//! Each agent routes one unit from its source to its sink; every edge carries
//! a capacity shared by all agents. Costs are negated once, here, so the
//! solver sees an ordinary maximization with value `−Σ c_e x_e ≤ 0`. A unit
//! flow must be routed, so there is no null action.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AgentOracle, OracleError, Play, ProgramMetadata, SeparableProgram};

const CONSERVATION_SLACK: f64 = 1e-9;

/// Graph structure shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    out_edges: Vec<Vec<usize>>,
    /// Nodes in topological order.
    order: Vec<usize>,
    longest_path: usize,
}

impl FlowGraph {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self, OracleError> {
        let mut out_edges = vec![Vec::new(); nodes];
        let mut indegree = vec![0usize; nodes];
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= nodes || v >= nodes {
                return Err(OracleError::Instance(format!("edge {e} ({u}, {v}) references a missing node")));
            }
            out_edges[u].push(e);
            indegree[v] += 1;
        }
        // Kahn's algorithm; the smallest ready node goes first so the order is
        // canonical.
        let mut ready: std::collections::BTreeSet<usize> = (0..nodes).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(nodes);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &e in &out_edges[u] {
                let v = edges[e].1;
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != nodes {
            return Err(OracleError::Instance("flow graph must be acyclic".into()));
        }
        let mut hops = vec![0usize; nodes];
        for &u in order.iter().rev() {
            hops[u] = out_edges[u].iter().map(|&e| hops[edges[e].1] + 1).max().unwrap_or(0);
        }
        let longest_path = hops.iter().copied().max().unwrap_or(0);
        Ok(FlowGraph { nodes, edges, out_edges, order, longest_path })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Maximum number of edges on any path.
    pub fn longest_path(&self) -> usize {
        self.longest_path
    }

    /// Every source-to-sink path as an edge list, in lexicographic order of
    /// edge indices.
    pub fn paths(&self, source: usize, sink: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.collect_paths(source, sink, &mut stack, &mut out);
        out
    }

    fn collect_paths(&self, u: usize, sink: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if u == sink {
            out.push(stack.clone());
            return;
        }
        for &e in &self.out_edges[u] {
            stack.push(e);
            self.collect_paths(self.edges[e].1, sink, stack, out);
            stack.pop();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub source: usize,
    pub sink: usize,
    /// Per-edge cost in `[0, 1]`.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowAgent {
    graph: Arc<FlowGraph>,
    commodity: Commodity,
}

impl FlowAgent {
    fn path_play(&self, path: &[usize]) -> Play {
        let mut x = vec![0.0; self.graph.edges.len()];
        for &e in path {
            x[e] = 1.0;
        }
        let value = -path.iter().map(|&e| self.commodity.costs[e]).sum::<f64>();
        Play { contributions: x.clone(), point: x, value }
    }

    pub fn commodity(&self) -> &Commodity {
        &self.commodity
    }

    /// Net outflow at every node for an edge-flow vector.
    pub fn net_outflow(&self, x: &[f64]) -> Vec<f64> {
        let mut net = vec![0.0; self.graph.nodes];
        for (&(u, v), &f) in self.graph.edges.iter().zip(x) {
            net[u] += f;
            net[v] -= f;
        }
        net
    }
}

impl AgentOracle for FlowAgent {
    /// Cheapest path under edge weights `c_e + λ_e`. Distances to the sink
    /// come from a pass over the topological order; the path is then walked
    /// from the source taking the lowest-indexed tight edge at each node,
    /// which yields the lexicographically smallest optimal edge sequence.
    fn best_response(&self, lambda: &[f64]) -> Result<Play, OracleError> {
        let g = &self.graph;
        if lambda.len() != g.edges.len() {
            return Err(OracleError::Dimension { expected: g.edges.len(), got: lambda.len() });
        }
        let weight = |e: usize| self.commodity.costs[e] + lambda[e];
        let mut dist = vec![f64::INFINITY; g.nodes];
        dist[self.commodity.sink] = 0.0;
        for &u in g.order.iter().rev() {
            for &e in &g.out_edges[u] {
                let cand = weight(e) + dist[g.edges[e].1];
                if cand < dist[u] {
                    dist[u] = cand;
                }
            }
        }
        let (s, t) = (self.commodity.source, self.commodity.sink);
        if !dist[s].is_finite() {
            return Err(OracleError::NoPath { source_node: s, sink: t });
        }
        let mut path = Vec::new();
        let mut u = s;
        while u != t {
            let e = g.out_edges[u]
                .iter()
                .copied()
                .find(|&e| weight(e) + dist[g.edges[e].1] == dist[u])
                .expect("a finite distance is attained by some out-edge");
            path.push(e);
            u = g.edges[e].1;
        }
        Ok(self.path_play(&path))
    }

    fn null_action(&self) -> Option<Play> {
        None
    }

    fn vertices(&self) -> Option<Vec<Play>> {
        Some(self.graph.paths(self.commodity.source, self.commodity.sink).iter().map(|p| self.path_play(p)).collect())
    }

    fn evaluate(&self, point: &[f64]) -> Result<Play, OracleError> {
        let m = self.graph.edges.len();
        if point.len() != m {
            return Err(OracleError::Dimension { expected: m, got: point.len() });
        }
        if !self.is_feasible(point) {
            return Err(OracleError::Instance("not a unit flow".into()));
        }
        let value = -point.iter().zip(&self.commodity.costs).map(|(x, c)| x * c).sum::<f64>();
        Ok(Play { point: point.to_vec(), value, contributions: point.to_vec() })
    }

    fn is_feasible(&self, point: &[f64]) -> bool {
        if point.len() != self.graph.edges.len() || point.iter().any(|x| !(0.0..=1.0 + CONSERVATION_SLACK).contains(x))
        {
            return false;
        }
        let (s, t) = (self.commodity.source, self.commodity.sink);
        self.net_outflow(point).iter().enumerate().all(|(v, &net)| {
            let want = if s == t {
                0.0
            } else if v == s {
                1.0
            } else if v == t {
                -1.0
            } else {
                0.0
            };
            (net - want).abs() <= CONSERVATION_SLACK
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowData {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    capacities: Vec<f64>,
    commodities: Vec<Commodity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowData", into = "FlowData")]
pub struct FlowInstance {
    graph: Arc<FlowGraph>,
    capacities: Vec<f64>,
    commodities: Vec<Commodity>,
}

impl TryFrom<FlowData> for FlowInstance {
    type Error = OracleError;

    fn try_from(d: FlowData) -> Result<Self, Self::Error> {
        FlowInstance::new(FlowGraph::new(d.nodes, d.edges)?, d.capacities, d.commodities)
    }
}

impl From<FlowInstance> for FlowData {
    fn from(inst: FlowInstance) -> Self {
        FlowData {
            nodes: inst.graph.nodes,
            edges: inst.graph.edges.clone(),
            capacities: inst.capacities,
            commodities: inst.commodities,
        }
    }
}

impl FlowInstance {
    pub fn new(graph: FlowGraph, capacities: Vec<f64>, commodities: Vec<Commodity>) -> Result<Self, OracleError> {
        let m = graph.edges.len();
        if m == 0 {
            return Err(OracleError::Instance("flow graph has no edges".into()));
        }
        if capacities.len() != m {
            return Err(OracleError::Instance(format!("{} capacities for {m} edges", capacities.len())));
        }
        for (i, c) in commodities.iter().enumerate() {
            if c.source >= graph.nodes || c.sink >= graph.nodes {
                return Err(OracleError::Instance(format!("agent {} has an endpoint outside the graph", i + 1)));
            }
            if c.costs.len() != m || c.costs.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(OracleError::Instance(format!("agent {} needs {m} edge costs in [0, 1]", i + 1)));
            }
        }
        Ok(FlowInstance { graph: Arc::new(graph), capacities, commodities })
    }

    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn agent(&self, i: usize) -> FlowAgent {
        FlowAgent { graph: Arc::clone(&self.graph), commodity: self.commodities[i].clone() }
    }

    pub fn metadata(&self) -> ProgramMetadata {
        let path = self.graph.longest_path.max(1) as f64;
        let n = self.commodities.len() as f64;
        let max_cap = self.capacities.iter().copied().fold(0.0, f64::max);
        ProgramMetadata {
            sigma: (2.0 * path).sqrt(),
            tau: 1.0,
            width: n.max(max_cap).max(1.0),
            value_bound: 0.0,
            contribution_bound: 1.0,
            total_contribution_bound: path,
            min_contribution: None,
        }
    }

    pub fn to_program(&self) -> SeparableProgram {
        let agents = (0..self.commodities.len()).map(|i| Arc::new(self.agent(i)) as Arc<dyn AgentOracle>).collect();
        SeparableProgram::new(agents, None, self.capacities.clone(), self.metadata())
    }
}
