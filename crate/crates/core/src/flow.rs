//! Integer max-flow and min-cost max-flow.
//!
//! Both solvers run on a residual graph where edge `e` owns arcs `2e`
//! (forward) and `2e + 1` (backward). Adjacency lists keep arcs in edge
//! insertion order, so path selection is reproducible run to run.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("edge {edge} references node {node}, network has {nodes} nodes")]
    DanglingNode { edge: usize, node: usize, nodes: usize },
    #[error("terminal node {node} out of range")]
    BadTerminal { node: usize },
    #[error("source and sink coincide")]
    SourceIsSink,
    #[error("edge {edge} is a self-loop")]
    SelfLoop { edge: usize },
    #[error("edge {edge} has negative capacity")]
    NegativeCapacity { edge: usize },
    #[error("residual graph has a negative-cost cycle")]
    NegativeCycle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge<T> {
    pub from: usize,
    pub to: usize,
    pub capacity: i64,
    pub cost: i64,
    pub tag: T,
}

/// Directed network with integer capacities and costs. `T` labels edges so
/// callers can map flow values back to their domain objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNetwork<T = ()> {
    nodes: usize,
    source: usize,
    sink: usize,
    edges: Vec<Edge<T>>,
}

impl<T> FlowNetwork<T> {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            nodes,
            source,
            sink,
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.nodes += 1;
        self.nodes - 1
    }

    /// Appends an edge and returns its index.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: i64, cost: i64, tag: T) -> usize {
        self.edges.push(Edge {
            from,
            to,
            capacity,
            cost,
            tag,
        });
        self.edges.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge<T> {
        &self.edges[index]
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        for node in [self.source, self.sink] {
            if node >= self.nodes {
                return Err(FlowError::BadTerminal { node });
            }
        }
        if self.source == self.sink {
            return Err(FlowError::SourceIsSink);
        }
        for (i, e) in self.edges.iter().enumerate() {
            for node in [e.from, e.to] {
                if node >= self.nodes {
                    return Err(FlowError::DanglingNode {
                        edge: i,
                        node,
                        nodes: self.nodes,
                    });
                }
            }
            if e.from == e.to {
                return Err(FlowError::SelfLoop { edge: i });
            }
            if e.capacity < 0 {
                return Err(FlowError::NegativeCapacity { edge: i });
            }
        }
        Ok(())
    }

    /// Total cost of an edge-flow assignment.
    pub fn cost_of(&self, edge_flow: &[i64]) -> i64 {
        self.edges.iter().zip(edge_flow).map(|(e, f)| e.cost * f).sum()
    }
}

impl<T: fmt::Display> FlowNetwork<T> {
    /// One line per edge: `from to cap cost tag`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {} {}", e.from, e.to, e.capacity, e.cost, e.tag);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub edge_flow: Vec<i64>,
    pub value: i64,
    pub cost: i64,
}

impl Flow {
    pub fn on(&self, edge: usize) -> i64 {
        self.edge_flow[edge]
    }
}

struct Residual {
    head: Vec<usize>,
    residual: Vec<i64>,
    cost: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn build<T>(net: &FlowNetwork<T>) -> Self {
        let m = net.edges.len();
        let mut head = Vec::with_capacity(2 * m);
        let mut residual = Vec::with_capacity(2 * m);
        let mut cost = Vec::with_capacity(2 * m);
        let mut adj = vec![Vec::new(); net.nodes];
        for (i, e) in net.edges.iter().enumerate() {
            head.extend([e.to, e.from]);
            residual.extend([e.capacity, 0]);
            cost.extend([e.cost, -e.cost]);
            adj[e.from].push(2 * i);
            adj[e.to].push(2 * i + 1);
        }
        Residual {
            head,
            residual,
            cost,
            adj,
        }
    }

    fn tail(&self, arc: usize) -> usize {
        self.head[arc ^ 1]
    }

    fn augment(&mut self, parent: &[usize], source: usize, sink: usize) -> i64 {
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != source {
            let arc = parent[v];
            bottleneck = bottleneck.min(self.residual[arc]);
            v = self.tail(arc);
        }
        let mut v = sink;
        while v != source {
            let arc = parent[v];
            self.residual[arc] -= bottleneck;
            self.residual[arc ^ 1] += bottleneck;
            v = self.tail(arc);
        }
        bottleneck
    }

    fn into_flow<T>(self, net: &FlowNetwork<T>) -> Flow {
        let edge_flow: Vec<i64> = net
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| e.capacity - self.residual[2 * i])
            .collect();
        let value = net
            .edges
            .iter()
            .zip(&edge_flow)
            .map(|(e, f)| {
                let mut v = 0;
                if e.from == net.source {
                    v += f;
                }
                if e.to == net.source {
                    v -= f;
                }
                v
            })
            .sum();
        let cost = net.cost_of(&edge_flow);
        Flow {
            edge_flow,
            value,
            cost,
        }
    }
}

const UNSET: usize = usize::MAX;

/// Maximum flow by shortest augmenting paths (Edmonds-Karp). Costs are ignored
/// for path selection but reported on the result.
pub fn max_flow<T>(net: &FlowNetwork<T>) -> Result<Flow, FlowError> {
    net.validate()?;
    let mut res = Residual::build(net);
    let mut parent = vec![UNSET; net.nodes];
    let mut queue = VecDeque::new();
    loop {
        parent.fill(UNSET);
        queue.clear();
        queue.push_back(net.source);
        let mut found = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for &arc in &res.adj[u] {
                let v = res.head[arc];
                if res.residual[arc] > 0 && parent[v] == UNSET && v != net.source {
                    parent[v] = arc;
                    if v == net.sink {
                        found = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if !found {
            break;
        }
        res.augment(&parent, net.source, net.sink);
    }
    Ok(res.into_flow(net))
}

/// Minimum-cost maximum flow by successive shortest paths.
///
/// Initial potentials come from one label-correcting pass over the forward
/// arcs, so negative edge costs are fine as long as the network has no
/// negative-cost cycle (true for the layered graphs built in this crate).
pub fn min_cost_max_flow<T>(net: &FlowNetwork<T>) -> Result<Flow, FlowError> {
    net.validate()?;
    let n = net.nodes;
    let mut res = Residual::build(net);
    let mut potential = initial_potentials(&res, n)?;

    const INF: i64 = i64::MAX;
    let mut dist = vec![INF; n];
    let mut parent = vec![UNSET; n];
    let mut heap = BinaryHeap::new();
    loop {
        dist.fill(INF);
        parent.fill(UNSET);
        dist[net.source] = 0;
        heap.push(Reverse((0i64, net.source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &arc in &res.adj[u] {
                if res.residual[arc] <= 0 {
                    continue;
                }
                let v = res.head[arc];
                let reduced = res.cost[arc] + potential[u] - potential[v];
                debug_assert!(reduced >= 0, "negative reduced cost");
                let nd = d + reduced;
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = arc;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        if dist[net.sink] == INF {
            break;
        }
        for v in 0..n {
            if dist[v] < INF {
                potential[v] += dist[v];
            }
        }
        res.augment(&parent, net.source, net.sink);
    }
    Ok(res.into_flow(net))
}

fn initial_potentials(res: &Residual, n: usize) -> Result<Vec<i64>, FlowError> {
    // Bellman-Ford from a virtual root joined to every node at cost 0.
    let mut dist = vec![0i64; n];
    let mut in_queue = vec![true; n];
    let mut relaxations = vec![0usize; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    while let Some(u) = queue.pop_front() {
        in_queue[u] = false;
        for &arc in &res.adj[u] {
            if res.residual[arc] <= 0 {
                continue;
            }
            let v = res.head[arc];
            let nd = dist[u] + res.cost[arc];
            if nd < dist[v] {
                dist[v] = nd;
                relaxations[v] += 1;
                if relaxations[v] > n {
                    return Err(FlowError::NegativeCycle);
                }
                if !in_queue[v] {
                    in_queue[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_edge(0, 1, 7, 0, ());
        assert_eq!(max_flow(&net).unwrap().value, 7);
    }

    #[test]
    fn two_path_min_cut() {
        // r=0, a=1, b=2, t=3
        let mut net = FlowNetwork::new(4, 0, 3);
        net.add_edge(0, 1, 3, 0, ());
        net.add_edge(0, 2, 2, 0, ());
        net.add_edge(1, 3, 1, 0, ());
        net.add_edge(2, 3, 5, 0, ());
        let flow = max_flow(&net).unwrap();
        assert_eq!(flow.value, 3);
        assert_eq!(flow.edge_flow, vec![1, 2, 1, 2]);
    }

    #[test]
    fn needs_reverse_arc() {
        // classic example where the first BFS path must be partially undone
        let mut net = FlowNetwork::new(4, 0, 3);
        net.add_edge(0, 1, 1, 0, ());
        net.add_edge(0, 2, 1, 0, ());
        net.add_edge(1, 2, 1, 0, ());
        net.add_edge(1, 3, 1, 0, ());
        net.add_edge(2, 3, 1, 0, ());
        assert_eq!(max_flow(&net).unwrap().value, 2);
    }

    #[test]
    fn picks_cheaper_parallel_edge() {
        let mut net = FlowNetwork::new(3, 0, 2);
        net.add_edge(0, 1, 1, 0, ());
        net.add_edge(1, 2, 1, -3, ());
        net.add_edge(1, 2, 1, -5, ());
        let flow = min_cost_max_flow(&net).unwrap();
        assert_eq!(flow.value, 1);
        assert_eq!(flow.cost, -5);
        assert_eq!(flow.edge_flow, vec![1, 0, 1]);
    }

    #[test]
    fn min_cost_prefers_reassignment() {
        // two buyers, two slots; greedy on buyer 0 would be suboptimal
        // nodes: r=0, b0=1, b1=2, x=3, y=4, t=5
        let mut net = FlowNetwork::new(6, 0, 5);
        net.add_edge(0, 1, 1, 0, ());
        net.add_edge(0, 2, 1, 0, ());
        net.add_edge(1, 3, 1, -10, ());
        net.add_edge(1, 4, 1, -9, ());
        net.add_edge(2, 3, 1, -10, ());
        net.add_edge(2, 4, 1, -1, ());
        net.add_edge(3, 5, 1, 0, ());
        net.add_edge(4, 5, 1, 0, ());
        let flow = min_cost_max_flow(&net).unwrap();
        assert_eq!(flow.value, 2);
        assert_eq!(flow.cost, -19);
    }

    #[test]
    fn rejects_malformed() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_edge(0, 5, 1, 0, ());
        assert!(matches!(max_flow(&net), Err(FlowError::DanglingNode { node: 5, .. })));

        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_edge(1, 1, 1, 0, ());
        assert_eq!(max_flow(&net), Err(FlowError::SelfLoop { edge: 0 }));

        let net: FlowNetwork = FlowNetwork::new(2, 0, 3);
        assert_eq!(max_flow(&net), Err(FlowError::BadTerminal { node: 3 }));
    }

    #[test]
    fn detects_negative_cycle() {
        let mut net = FlowNetwork::new(4, 0, 3);
        net.add_edge(0, 1, 1, 0, ());
        net.add_edge(1, 2, 1, -2, ());
        net.add_edge(2, 1, 1, 1, ());
        net.add_edge(2, 3, 1, 0, ());
        assert_eq!(min_cost_max_flow(&net), Err(FlowError::NegativeCycle));
    }

    #[test]
    fn dump_format() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_edge(0, 1, 4, -2, "a");
        assert_eq!(net.dump(), "0 1 4 -2 a\n");
    }
}
