//! Min-cost circulation with node demands expressed as edge lower bounds,
//! plus the Hungarian algorithm. These are the engines behind every
//! partition solver.
//!
//! The circulation solver transforms lower bounds away, routes the resulting
//! excesses with successive shortest augmenting paths under node potentials,
//! and finishes with a negative-cycle canceling sweep so that optimality does
//! not rest on the gadgets keeping costs nonnegative. Flows are integral
//! throughout; no rounding step exists.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Absolute tolerance for residual-cycle tests. Shortest-path relaxations
/// compare costs strictly so that rescaling all costs by a power of two
/// replays bit-identical decisions.
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    pub capacity: i64,
    pub cost: f64,
}

/// A directed network. When `source` and `sink` are set, an implicit
/// uncapacitated zero-cost return arc `sink -> source` closes the
/// circulation.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub num_nodes: usize,
    pub edges: Vec<FlowEdge>,
    pub source: Option<usize>,
    pub sink: Option<usize>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        Self { num_nodes, edges: Vec::new(), source: None, sink: None }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, lower: i64, capacity: i64, cost: f64) {
        self.edges.push(FlowEdge { from, to, lower, capacity, cost });
    }
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Integral flow per input edge, in input order.
    pub flows: Vec<i64>,
    pub total_cost: f64,
    pub feasible: bool,
}

struct Arc {
    to: usize,
    residual: i64,
    cost: f64,
}

struct Residual {
    arcs: Vec<Arc>, // paired arcs at 2e, 2e+1
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Self { arcs: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn push(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, residual: cap, cost });
        self.arcs.push(Arc { to: from, residual: 0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn nodes(&self) -> usize {
        self.adj.len()
    }

    /// Cancel negative-cost residual cycles until none remain (below -tol).
    fn cancel_negative_cycles(&mut self) {
        loop {
            match self.find_negative_cycle() {
                Some(cycle) => {
                    let bottleneck = cycle
                        .iter()
                        .map(|&a| self.arcs[a].residual)
                        .min()
                        .unwrap_or(0);
                    if bottleneck <= 0 {
                        break;
                    }
                    for &a in &cycle {
                        self.arcs[a].residual -= bottleneck;
                        self.arcs[a ^ 1].residual += bottleneck;
                    }
                }
                None => break,
            }
        }
    }

    /// Bellman-Ford from a virtual source; returns arc ids of one negative
    /// cycle if any exists.
    fn find_negative_cycle(&self) -> Option<Vec<usize>> {
        let n = self.nodes();
        let mut dist = vec![0.0f64; n];
        let mut pred_arc = vec![usize::MAX; n];
        let mut relaxed_node = usize::MAX;
        for _round in 0..n {
            relaxed_node = usize::MAX;
            for (u, arcs) in self.adj.iter().enumerate() {
                for &a in arcs {
                    let arc = &self.arcs[a];
                    if arc.residual <= 0 {
                        continue;
                    }
                    if dist[u] + arc.cost < dist[arc.to] - COST_TOL {
                        dist[arc.to] = dist[u] + arc.cost;
                        pred_arc[arc.to] = a;
                        relaxed_node = arc.to;
                    }
                }
            }
            if relaxed_node == usize::MAX {
                return None;
            }
        }
        // Walk predecessors back into the cycle.
        let mut v = relaxed_node;
        for _ in 0..n {
            let a = pred_arc[v];
            v = self.arcs[a ^ 1].to; // tail of a
        }
        let start = v;
        let mut cycle = Vec::new();
        loop {
            let a = pred_arc[v];
            cycle.push(a);
            v = self.arcs[a ^ 1].to;
            if v == start {
                break;
            }
        }
        cycle.reverse();
        Some(cycle)
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Feasible integral circulation of minimum total cost, or `feasible: false`
/// when none exists.
pub fn min_cost_circulation(net: &FlowNetwork) -> Result<FlowSolution> {
    let n = net.num_nodes;
    for (i, e) in net.edges.iter().enumerate() {
        if e.from >= n || e.to >= n {
            return Err(Error::Malformed(format!("edge {i} references missing node")));
        }
        if e.lower > e.capacity {
            return Err(Error::Malformed(format!("edge {i} has lower > capacity")));
        }
        if !e.cost.is_finite() {
            return Err(Error::Malformed(format!("edge {i} has non-finite cost")));
        }
    }
    if let (Some(s), Some(t)) = (net.source, net.sink) {
        if s >= n || t >= n {
            return Err(Error::Malformed("designated source/sink out of range".into()));
        }
    }

    // Node layout: 0..n original, n = supersource, n+1 = supersink.
    let ss = n;
    let st = n + 1;
    let mut res = Residual::new(n + 2);
    let mut excess = vec![0i64; n];
    let mut edge_arc = Vec::with_capacity(net.edges.len());
    let mut base_cost = 0.0;
    for e in &net.edges {
        excess[e.from] -= e.lower;
        excess[e.to] += e.lower;
        base_cost += e.lower as f64 * e.cost;
        edge_arc.push(res.push(e.from, e.to, e.capacity - e.lower, e.cost));
    }
    if let (Some(s), Some(t)) = (net.source, net.sink) {
        let closing_cap: i64 = net.edges.iter().map(|e| e.capacity.max(0)).sum();
        res.push(t, s, closing_cap, 0.0);
    }
    let mut need = 0i64;
    for (v, &x) in excess.iter().enumerate() {
        match x.cmp(&0) {
            Ordering::Greater => {
                res.push(ss, v, x, 0.0);
                need += x;
            }
            Ordering::Less => {
                res.push(v, st, -x, 0.0);
            }
            Ordering::Equal => {}
        }
    }

    // Any free negative cycles must go before potentials can exist.
    res.cancel_negative_cycles();

    // Initial potentials by Bellman-Ford (costs may be negative).
    let nn = res.nodes();
    let mut phi = vec![0.0f64; nn];
    for _ in 0..nn {
        let mut changed = false;
        for (u, arcs) in res.adj.iter().enumerate() {
            for &a in arcs {
                let arc = &res.arcs[a];
                if arc.residual > 0 && phi[u] + arc.cost < phi[arc.to] {
                    phi[arc.to] = phi[u] + arc.cost;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Successive shortest augmenting paths from supersource to supersink.
    let mut routed = 0i64;
    while routed < need {
        let mut dist = vec![f64::INFINITY; nn];
        let mut pred = vec![usize::MAX; nn];
        dist[ss] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry { dist: 0.0, node: ss });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &a in &res.adj[u] {
                let arc = &res.arcs[a];
                if arc.residual <= 0 {
                    continue;
                }
                let rc = (arc.cost + phi[u] - phi[arc.to]).max(0.0);
                let nd = d + rc;
                if nd < dist[arc.to] {
                    dist[arc.to] = nd;
                    pred[arc.to] = a;
                    heap.push(HeapEntry { dist: nd, node: arc.to });
                }
            }
        }
        if pred[st] == usize::MAX {
            break; // no augmenting path left
        }
        let mut bottleneck = need - routed;
        let mut v = st;
        while v != ss {
            let a = pred[v];
            bottleneck = bottleneck.min(res.arcs[a].residual);
            v = res.arcs[a ^ 1].to;
        }
        let mut v = st;
        while v != ss {
            let a = pred[v];
            res.arcs[a].residual -= bottleneck;
            res.arcs[a ^ 1].residual += bottleneck;
            v = res.arcs[a ^ 1].to;
        }
        routed += bottleneck;
        let dt = dist[st];
        for v in 0..nn {
            phi[v] += if dist[v].is_finite() { dist[v] } else { dt };
        }
    }

    let feasible = routed == need;
    if feasible {
        // Float drift or residual free capacity may leave improving cycles.
        res.cancel_negative_cycles();
    }

    let mut flows = vec![0i64; net.edges.len()];
    let mut total_cost = base_cost;
    for (i, e) in net.edges.iter().enumerate() {
        let sent = (e.capacity - e.lower) - res.arcs[edge_arc[i]].residual;
        flows[i] = e.lower + sent;
        total_cost += sent as f64 * e.cost;
    }
    if !feasible {
        return Ok(FlowSolution { flows, total_cost: f64::INFINITY, feasible: false });
    }
    Ok(FlowSolution { flows, total_cost, feasible: true })
}

/// Test support: does the residual graph of `sol` admit a negative cycle?
pub fn has_negative_residual_cycle(net: &FlowNetwork, sol: &FlowSolution) -> bool {
    let mut res = Residual::new(net.num_nodes + 2);
    for (e, &f) in net.edges.iter().zip(&sol.flows) {
        let id = res.push(e.from, e.to, e.capacity - f, e.cost);
        res.arcs[id ^ 1].residual = f - e.lower;
    }
    if let (Some(s), Some(t)) = (net.source, net.sink) {
        let closing_flow: i64 = sol.flows.iter().sum::<i64>().max(0);
        let id = res.push(t, s, i64::MAX / 4, 0.0);
        res.arcs[id ^ 1].residual = closing_flow;
    }
    res.find_negative_cycle().is_some()
}

/// A dense `rows x cols` cost matrix with `rows <= cols`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows > cols {
            return Err(Error::Malformed("cost matrix requires rows <= cols".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Malformed("cost matrix shape mismatch".into()));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::Malformed("cost matrix entry not finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

fn hungarian_core(a: &CostMatrix) -> (Vec<usize>, f64) {
    let n = a.rows();
    let m = a.cols();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // Shortest augmenting paths with dual potentials, 1-based with a virtual
    // column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| a.get(i, j)).sum();
    (assign, total)
}

/// Minimum-cost injective row-to-column assignment. Among cost-optimal
/// assignments, the lexicographically smallest one is returned.
pub fn hungarian(a: &CostMatrix) -> (Vec<usize>, f64) {
    let (_, opt) = hungarian_core(a);
    let tol = 1e-9 * (1.0 + opt.abs());
    let n = a.rows();
    let m = a.cols();
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; m];
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let mut chosen = usize::MAX;
        for j in 0..m {
            if used[j] {
                continue;
            }
            // Best completion of the remaining rows on the remaining columns.
            let free_cols: Vec<usize> =
                (0..m).filter(|&c| !used[c] && c != j).collect();
            let rest_rows = n - i - 1;
            let completion = if rest_rows == 0 {
                0.0
            } else {
                let mut data = Vec::with_capacity(rest_rows * free_cols.len());
                for r in i + 1..n {
                    for &c in &free_cols {
                        data.push(a.get(r, c));
                    }
                }
                let sub = CostMatrix::new(rest_rows, free_cols.len(), data)
                    .expect("submatrix stays rectangular");
                hungarian_core(&sub).1
            };
            if fixed_cost + a.get(i, j) + completion <= opt + tol {
                chosen = j;
                break;
            }
        }
        debug_assert!(chosen != usize::MAX, "no column completes an optimal assignment");
        fixed_cost += a.get(i, chosen);
        used[chosen] = true;
        fixed.push(chosen);
    }
    (fixed, fixed_cost)
}
