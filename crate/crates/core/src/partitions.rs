//! Partition-step solvers: given fixed centers and a constraint, compute a
//! constraint-feasible assignment of minimum average objective.
//!
//! Size-constrained problems reduce to min-cost circulation, the coloring
//! problems to circulations with gate vertices or per-group matchings, and
//! the remaining ones to direct per-point or per-node rules. Every solver
//! returns a [`PartitionOutcome`] whose objective is recomputed from the
//! assignment it returns, so flow arithmetic never leaks into reported costs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flow::{hungarian, min_cost_circulation, CostMatrix, FlowNetwork};
use crate::geometry::{cost, Objective, Point, PointSet};

/// Cap on the number of gate-bound guesses enumerated for l-diversity.
const GUESS_CAP: usize = 100_000;

/// One uncertain node: a discrete distribution over locations.
#[derive(Debug, Clone)]
pub struct UncertainNode {
    pub realizations: Vec<(Point, f64)>,
}

impl UncertainNode {
    /// Total probability mass of the node.
    pub fn weight(&self) -> f64 {
        self.realizations.iter().map(|(_, t)| t).sum()
    }

    /// Probability-weighted mean location.
    pub fn mean(&self) -> Result<Point> {
        let w = self.weight();
        if w <= 0.0 {
            return Err(Error::Malformed("node has zero probability mass".into()));
        }
        let dim = self.realizations[0].0.dim();
        let mut acc = vec![0.0; dim];
        for (p, t) in &self.realizations {
            for (a, c) in acc.iter_mut().zip(p.coords()) {
                *a += t * c;
            }
        }
        for a in acc.iter_mut() {
            *a /= w;
        }
        Point::new(acc)
    }

    /// Probability-weighted average squared distance to the node mean.
    pub fn variance(&self) -> Result<f64> {
        let m = self.mean()?;
        let w = self.weight();
        Ok(self.realizations.iter().map(|(p, t)| t * p.dist_sq(&m)).sum::<f64>() / w)
    }

    /// `sum_l t_l * ||p_l - c||` (median) or squared (means).
    pub fn dist_to(&self, c: &Point, objective: Objective) -> f64 {
        self.realizations
            .iter()
            .map(|(p, t)| {
                t * match objective {
                    Objective::Means => p.dist_sq(c),
                    Objective::Median => p.dist(c),
                }
            })
            .sum()
    }
}

/// A set of uncertain nodes sharing one ambient dimension.
#[derive(Debug, Clone)]
pub struct UncertainSet {
    dim: usize,
    nodes: Vec<UncertainNode>,
}

impl UncertainSet {
    pub fn new(nodes: Vec<UncertainNode>) -> Result<Self> {
        let first = nodes.first().ok_or(Error::EmptySubset)?;
        let dim = first
            .realizations
            .first()
            .ok_or_else(|| Error::Malformed("node 0 has no realizations".into()))?
            .0
            .dim();
        for (i, node) in nodes.iter().enumerate() {
            if node.realizations.is_empty() {
                return Err(Error::Malformed(format!("node {i} has no realizations")));
            }
            let mut total = 0.0;
            for (p, t) in &node.realizations {
                if p.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
                }
                if !t.is_finite() || *t < 0.0 {
                    return Err(Error::Malformed(format!("node {i} has a negative probability")));
                }
                total += t;
            }
            if total > 1.0 + 1e-9 {
                return Err(Error::Malformed(format!(
                    "node {i} has total probability {total} > 1"
                )));
            }
        }
        Ok(Self { dim, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &UncertainNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[UncertainNode] {
        &self.nodes
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight()).sum()
    }

    pub fn scaled(&self, gamma: f64) -> UncertainSet {
        let nodes = self
            .nodes
            .iter()
            .map(|n| UncertainNode {
                realizations: n
                    .realizations
                    .iter()
                    .map(|(p, t)| {
                        let coords = p.coords().iter().map(|c| c * gamma).collect();
                        (Point::new(coords).expect("finite"), *t)
                    })
                    .collect(),
            })
            .collect();
        UncertainSet { dim: self.dim, nodes }
    }

    /// Flatten to a weighted point set (one point per realization).
    pub fn flatten(&self) -> Result<PointSet> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for node in &self.nodes {
            for (p, t) in &node.realizations {
                if *t > 0.0 {
                    points.push(p.clone());
                    weights.push(*t);
                }
            }
        }
        PointSet::new(points)?.with_weights(weights)
    }
}

/// The problem instance handed to solvers: plain points or uncertain nodes.
#[derive(Debug, Clone)]
pub enum Instance {
    Points(PointSet),
    Uncertain(UncertainSet),
}

impl Instance {
    pub fn len(&self) -> usize {
        match self {
            Instance::Points(p) => p.len(),
            Instance::Uncertain(u) => u.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        match self {
            Instance::Points(p) => p.dim(),
            Instance::Uncertain(u) => u.dim(),
        }
    }

    pub fn as_points(&self) -> Result<&PointSet> {
        match self {
            Instance::Points(p) => Ok(p),
            Instance::Uncertain(_) => {
                Err(Error::InvalidParameter("constraint requires plain points".into()))
            }
        }
    }

    pub fn as_uncertain(&self) -> Result<&UncertainSet> {
        match self {
            Instance::Uncertain(u) => Ok(u),
            Instance::Points(_) => {
                Err(Error::InvalidParameter("constraint requires uncertain nodes".into()))
            }
        }
    }

    pub fn scaled(&self, gamma: f64) -> Instance {
        match self {
            Instance::Points(p) => Instance::Points(p.scaled(gamma)),
            Instance::Uncertain(u) => Instance::Uncertain(u.scaled(gamma)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultTolerance {
    Uniform(usize),
    PerPoint(Vec<usize>),
}

/// Which constrained problem is being solved.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    Unconstrained,
    RGather { r: usize },
    RCapacity { r: usize },
    LDiversity { l: usize },
    DistinctColor { l: usize },
    Chromatic,
    FaultTolerant { l: FaultTolerance },
    SemiSupervised { alpha: f64, e1: f64, e2: f64 },
    ProbabilisticMedian,
    UncertainMeans,
}

impl ConstraintSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSpec::Unconstrained => "unconstrained",
            ConstraintSpec::RGather { .. } => "r-gather",
            ConstraintSpec::RCapacity { .. } => "r-capacity",
            ConstraintSpec::LDiversity { .. } => "l-diversity",
            ConstraintSpec::DistinctColor { .. } => "distinct-color",
            ConstraintSpec::Chromatic => "chromatic",
            ConstraintSpec::FaultTolerant { .. } => "fault-tolerant",
            ConstraintSpec::SemiSupervised { .. } => "semi-supervised",
            ConstraintSpec::ProbabilisticMedian => "probabilistic-median",
            ConstraintSpec::UncertainMeans => "uncertain-means",
        }
    }

    /// Check that `data` carries what the constraint needs.
    pub fn check_applicable(&self, data: &Instance, k: usize) -> Result<()> {
        match self {
            ConstraintSpec::LDiversity { l } => {
                let ps = data.as_points()?;
                if ps.colors().is_none() {
                    return Err(Error::InvalidParameter("l-diversity requires colors".into()));
                }
                if *l <= 1 {
                    return Err(Error::InvalidParameter("l-diversity requires l > 1".into()));
                }
            }
            ConstraintSpec::DistinctColor { l } => {
                let ps = data.as_points()?;
                if ps.colors().is_none() {
                    return Err(Error::InvalidParameter("distinct-color requires colors".into()));
                }
                if *l == 0 {
                    return Err(Error::InvalidParameter("distinct-color requires l >= 1".into()));
                }
            }
            ConstraintSpec::Chromatic => {
                if data.as_points()?.colors().is_none() {
                    return Err(Error::InvalidParameter("chromatic requires colors".into()));
                }
            }
            ConstraintSpec::FaultTolerant { l } => {
                let n = data.as_points()?.len();
                match l {
                    FaultTolerance::Uniform(v) => {
                        if *v == 0 || *v > k {
                            return Err(Error::InvalidParameter("need 1 <= l <= k".into()));
                        }
                    }
                    FaultTolerance::PerPoint(vs) => {
                        if vs.len() != n || vs.iter().any(|v| *v == 0 || *v > k) {
                            return Err(Error::InvalidParameter(
                                "per-point l values must satisfy 1 <= l_i <= k".into(),
                            ));
                        }
                    }
                }
            }
            ConstraintSpec::SemiSupervised { alpha, e1, e2 } => {
                let ps = data.as_points()?;
                let prior = ps
                    .prior_labels()
                    .ok_or_else(|| Error::InvalidParameter("semi-supervised requires prior labels".into()))?;
                if prior.iter().any(|&p| p >= k) {
                    return Err(Error::InvalidParameter("prior label out of range".into()));
                }
                if !(0.0..=1.0).contains(alpha) || *e1 <= 0.0 || *e2 <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "need alpha in [0,1] and E1, E2 > 0".into(),
                    ));
                }
            }
            ConstraintSpec::RGather { r } | ConstraintSpec::RCapacity { r } => {
                data.as_points()?;
                if *r == 0 {
                    return Err(Error::InvalidParameter("r must be >= 1".into()));
                }
            }
            ConstraintSpec::Unconstrained => {
                data.as_points()?;
            }
            ConstraintSpec::ProbabilisticMedian | ConstraintSpec::UncertainMeans => {
                data.as_uncertain()?;
            }
        }
        Ok(())
    }
}

/// A cluster assignment plus its average objective. `memberships[i]` lists
/// the cluster ids of point (or node) `i`; it is a singleton everywhere
/// except fault-tolerant clustering.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub memberships: Vec<Vec<usize>>,
    pub objective: f64,
    pub feasible: bool,
}

impl PartitionOutcome {
    fn infeasible() -> Self {
        Self { memberships: Vec::new(), objective: f64::INFINITY, feasible: false }
    }

    fn from_labels(labels: Vec<usize>, objective: f64) -> Self {
        Self {
            memberships: labels.into_iter().map(|l| vec![l]).collect(),
            objective,
            feasible: true,
        }
    }

    /// Per-point single labels, when every membership is a singleton.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.memberships
            .iter()
            .map(|m| if m.len() == 1 { Some(m[0]) } else { None })
            .collect()
    }
}

fn edge_weight(ps: &PointSet, i: usize, c: &Point, objective: Objective) -> f64 {
    let d2 = ps.point(i).dist_sq(c);
    ps.weight(i)
        * match objective {
            Objective::Means => d2,
            Objective::Median => d2.sqrt(),
        }
}

/// Nearest-center assignment with lowest-index tie-break.
pub fn partition_unconstrained(
    ps: &PointSet,
    centers: &[Point],
    objective: Objective,
) -> PartitionOutcome {
    let labels: Vec<usize> = ps
        .points()
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = p.dist_sq(c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();
    let objective = cost(ps, &labels, centers, objective).expect("valid labels");
    PartitionOutcome::from_labels(labels, objective)
}

/// Solve a point/center transportation instance with per-center in-flow
/// bounds `[demand_j, cap_j]` via min-cost circulation; returns labels.
fn size_bounded_assignment(
    ps: &PointSet,
    centers: &[Point],
    demand: &[i64],
    cap: &[i64],
    objective: Objective,
) -> Result<Option<Vec<usize>>> {
    let n = ps.len();
    let k = centers.len();
    let s = 0usize;
    let t = 1 + n + k;
    let mut net = FlowNetwork::new(n + k + 2);
    net.source = Some(s);
    net.sink = Some(t);
    for i in 0..n {
        net.add_edge(s, 1 + i, 1, 1, 0.0);
        for (j, c) in centers.iter().enumerate() {
            net.add_edge(1 + i, 1 + n + j, 0, 1, edge_weight(ps, i, c, objective));
        }
    }
    for j in 0..k {
        net.add_edge(1 + n + j, t, demand[j], cap[j], 0.0);
    }
    let sol = min_cost_circulation(&net)?;
    if !sol.feasible {
        return Ok(None);
    }
    let mut labels = vec![usize::MAX; n];
    for i in 0..n {
        for j in 0..k {
            if sol.flows[i * (k + 1) + 1 + j] == 1 {
                labels[i] = j;
            }
        }
    }
    debug_assert!(labels.iter().all(|&l| l != usize::MAX));
    Ok(Some(labels))
}

/// Every cluster must contain at least `r` points.
pub fn partition_r_gather(
    ps: &PointSet,
    centers: &[Point],
    r: usize,
    objective: Objective,
) -> Result<PartitionOutcome> {
    let n = ps.len();
    let k = centers.len();
    if k * r > n {
        return Ok(PartitionOutcome::infeasible());
    }
    match size_bounded_assignment(ps, centers, &vec![r as i64; k], &vec![n as i64; k], objective)? {
        Some(labels) => {
            let obj = cost(ps, &labels, centers, objective)?;
            Ok(PartitionOutcome::from_labels(labels, obj))
        }
        None => Ok(PartitionOutcome::infeasible()),
    }
}

/// Every cluster must contain at most `r` points.
pub fn partition_r_capacity(
    ps: &PointSet,
    centers: &[Point],
    r: usize,
    objective: Objective,
) -> Result<PartitionOutcome> {
    let n = ps.len();
    let k = centers.len();
    if k * r < n {
        return Ok(PartitionOutcome::infeasible());
    }
    match size_bounded_assignment(ps, centers, &vec![0; k], &vec![r as i64; k], objective)? {
        Some(labels) => {
            let obj = cost(ps, &labels, centers, objective)?;
            Ok(PartitionOutcome::from_labels(labels, obj))
        }
        None => Ok(PartitionOutcome::infeasible()),
    }
}

fn color_groups(ps: &PointSet) -> Result<Vec<Vec<usize>>> {
    let colors = ps
        .colors()
        .ok_or_else(|| Error::InvalidParameter("constraint requires colors".into()))?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in colors.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    Ok(groups.into_values().collect())
}

/// Gate-vertex circulation for one guess vector of per-cluster same-color
/// bounds. `gate_cap[j]` bounds how many points of one color may enter
/// cluster j; the center in-flow must lie in `[demand[j], cap[j]]`.
fn gated_assignment(
    ps: &PointSet,
    centers: &[Point],
    groups: &[Vec<usize>],
    gate_cap: &[i64],
    demand: &[i64],
    cap: &[i64],
    objective: Objective,
) -> Result<Option<(Vec<usize>, f64)>> {
    let n = ps.len();
    let k = centers.len();
    let g = groups.len();
    // Layout: 0 = source, 1..=n points, then g*k gates, then k centers, sink.
    let gate = |gi: usize, j: usize| 1 + n + gi * k + j;
    let center = |j: usize| 1 + n + g * k + j;
    let t = 1 + n + g * k + k;
    let mut net = FlowNetwork::new(t + 1);
    net.source = Some(0);
    net.sink = Some(t);
    let mut point_edges = vec![Vec::with_capacity(k); n];
    for (gi, members) in groups.iter().enumerate() {
        for &i in members {
            net.add_edge(0, 1 + i, 1, 1, 0.0);
            for (j, c) in centers.iter().enumerate() {
                point_edges[i].push(net.edges.len());
                net.add_edge(1 + i, gate(gi, j), 0, 1, edge_weight(ps, i, c, objective));
            }
        }
    }
    for gi in 0..g {
        for j in 0..k {
            net.add_edge(gate(gi, j), center(j), 0, gate_cap[j], 0.0);
        }
    }
    for j in 0..k {
        net.add_edge(center(j), t, demand[j], cap[j], 0.0);
    }
    let sol = min_cost_circulation(&net)?;
    if !sol.feasible {
        return Ok(None);
    }
    let mut labels = vec![usize::MAX; n];
    for i in 0..n {
        for (j, &e) in point_edges[i].iter().enumerate() {
            if sol.flows[e] == 1 {
                labels[i] = j;
            }
        }
    }
    debug_assert!(labels.iter().all(|&l| l != usize::MAX));
    let obj = cost(ps, &labels, centers, objective)?;
    Ok(Some((labels, obj)))
}

/// Inside every cluster, each color may hold at most a `1/l` fraction.
/// Enumerates per-cluster bound guesses (`0..=t` and "above t") and keeps the
/// cheapest feasible circulation.
pub fn partition_l_diversity(
    ps: &PointSet,
    centers: &[Point],
    l: usize,
    objective: Objective,
) -> Result<PartitionOutcome> {
    if l <= 1 {
        return Err(Error::InvalidParameter("l-diversity requires l > 1".into()));
    }
    let groups = color_groups(ps)?;
    let n = ps.len();
    let k = centers.len();
    let t_max = groups.iter().map(|g| g.len()).max().unwrap_or(0);
    // Guess values 0..=t_max, with t_max + 1 standing for "above t".
    let per_cluster: Vec<i64> = if ((t_max + 2) as f64).powi(k as i32) <= GUESS_CAP as f64 {
        (0..=(t_max as i64 + 1)).collect()
    } else {
        // Restricted neighborhood: loses exactness, keeps the run bounded.
        let q = (n / (l * k.max(1))) as i64;
        let mut vals: Vec<i64> = vec![0, q - 1, q, q + 1, t_max as i64 + 1];
        vals.retain(|v| *v >= 0 && *v <= t_max as i64 + 1);
        vals.sort_unstable();
        vals.dedup();
        vals
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut guess = vec![0usize; k];
    'outer: loop {
        let u: Vec<i64> = guess.iter().map(|&gi| per_cluster[gi]).collect();
        let mut gate_cap = vec![0i64; k];
        let mut demand = vec![0i64; k];
        let mut cap = vec![0i64; k];
        for j in 0..k {
            if u[j] <= t_max as i64 {
                gate_cap[j] = u[j];
                demand[j] = l as i64 * u[j];
                cap[j] = l as i64 * (u[j] + 1) - 1;
            } else {
                gate_cap[j] = n as i64;
                demand[j] = (l * (t_max + 1)) as i64;
                cap[j] = n as i64;
            }
        }
        let total_demand: i64 = demand.iter().sum();
        let total_cap: i64 = cap.iter().sum();
        if total_demand <= n as i64 && total_cap >= n as i64 {
            if let Some((labels, obj)) =
                gated_assignment(ps, centers, &groups, &gate_cap, &demand, &cap, objective)?
            {
                if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                    best = Some((labels, obj));
                }
            }
        }
        for j in 0..k {
            guess[j] += 1;
            if guess[j] < per_cluster.len() {
                continue 'outer;
            }
            guess[j] = 0;
        }
        break;
    }
    Ok(match best {
        Some((labels, obj)) => PartitionOutcome::from_labels(labels, obj),
        None => PartitionOutcome::infeasible(),
    })
}

/// Every cluster has at least `l` points, all of distinct colors (gate
/// capacity 1, center demand `l`).
pub fn partition_distinct_color(
    ps: &PointSet,
    centers: &[Point],
    l: usize,
    objective: Objective,
) -> Result<PartitionOutcome> {
    let groups = color_groups(ps)?;
    let n = ps.len();
    let k = centers.len();
    if k * l > n {
        return Ok(PartitionOutcome::infeasible());
    }
    match gated_assignment(
        ps,
        centers,
        &groups,
        &vec![1; k],
        &vec![l as i64; k],
        &vec![n as i64; k],
        objective,
    )? {
        Some((labels, obj)) => Ok(PartitionOutcome::from_labels(labels, obj)),
        None => Ok(PartitionOutcome::infeasible()),
    }
}

/// No two points of the same color share a cluster: an independent
/// minimum-cost matching per color group.
pub fn partition_chromatic(
    ps: &PointSet,
    centers: &[Point],
    objective: Objective,
) -> Result<PartitionOutcome> {
    let groups = color_groups(ps)?;
    let k = centers.len();
    let mut labels = vec![0usize; ps.len()];
    for members in &groups {
        if members.len() > k {
            return Ok(PartitionOutcome::infeasible());
        }
        let mut data = Vec::with_capacity(members.len() * k);
        for &i in members {
            for c in centers {
                data.push(edge_weight(ps, i, c, objective));
            }
        }
        let m = CostMatrix::new(members.len(), k, data)?;
        let (assign, _) = hungarian(&m);
        for (row, &i) in members.iter().enumerate() {
            labels[i] = assign[row];
        }
    }
    let obj = cost(ps, &labels, centers, objective)?;
    Ok(PartitionOutcome::from_labels(labels, obj))
}

fn fault_l_values(ft: &FaultTolerance, n: usize) -> Vec<usize> {
    match ft {
        FaultTolerance::Uniform(l) => vec![*l; n],
        FaultTolerance::PerPoint(ls) => ls.clone(),
    }
}

/// Each point is served by its `l_i` nearest centers and pays all of them.
pub fn partition_fault_tolerant(
    ps: &PointSet,
    centers: &[Point],
    ft: &FaultTolerance,
    objective: Objective,
) -> Result<PartitionOutcome> {
    let k = centers.len();
    let ls = fault_l_values(ft, ps.len());
    if ls.len() != ps.len() || ls.iter().any(|&l| l == 0 || l > k) {
        return Err(Error::InvalidParameter("need 1 <= l_i <= k".into()));
    }
    let mut memberships = Vec::with_capacity(ps.len());
    for (i, p) in ps.points().iter().enumerate() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| p.dist_sq(&centers[a]).total_cmp(&p.dist_sq(&centers[b])).then(a.cmp(&b)));
        let mut mine: Vec<usize> = order[..ls[i]].to_vec();
        mine.sort_unstable();
        memberships.push(mine);
    }
    let objective = fault_tolerant_cost(ps, &memberships, centers, objective)?;
    Ok(PartitionOutcome { memberships, objective, feasible: true })
}

/// Average (over point weight) of each point's summed cost to all its
/// assigned centers.
pub fn fault_tolerant_cost(
    ps: &PointSet,
    memberships: &[Vec<usize>],
    centers: &[Point],
    objective: Objective,
) -> Result<f64> {
    if memberships.len() != ps.len() {
        return Err(Error::Malformed("membership length mismatch".into()));
    }
    let mut sum = 0.0;
    for (i, mine) in memberships.iter().enumerate() {
        for &j in mine {
            let c = centers.get(j).ok_or_else(|| Error::Malformed("cluster id out of range".into()))?;
            sum += edge_weight(ps, i, c, objective);
        }
    }
    Ok(sum / ps.total_weight())
}

/// The l-copy chromatic reduction of fault-tolerant clustering, kept as a
/// cross-check for [`partition_fault_tolerant`]. Returns the folded outcome
/// with the same normalization as the direct solver.
pub fn partition_fault_tolerant_via_chromatic(
    ps: &PointSet,
    centers: &[Point],
    ft: &FaultTolerance,
    objective: Objective,
) -> Result<PartitionOutcome> {
    let ls = fault_l_values(ft, ps.len());
    let mut rows = Vec::new();
    let mut colors = Vec::new();
    let mut weights = Vec::new();
    let mut owner = Vec::new();
    for (i, &l) in ls.iter().enumerate() {
        for _ in 0..l {
            rows.push(ps.point(i).clone());
            colors.push(i as u32);
            weights.push(ps.weight(i));
            owner.push(i);
        }
    }
    let copied = PointSet::new(rows)?.with_weights(weights)?.with_colors(colors)?;
    let chrom = partition_chromatic(&copied, centers, objective)?;
    if !chrom.feasible {
        return Ok(PartitionOutcome::infeasible());
    }
    let mut memberships = vec![Vec::new(); ps.len()];
    for (copy, m) in chrom.memberships.iter().enumerate() {
        memberships[owner[copy]].push(m[0]);
    }
    for m in memberships.iter_mut() {
        m.sort_unstable();
    }
    let objective = fault_tolerant_cost(ps, &memberships, centers, objective)?;
    Ok(PartitionOutcome { memberships, objective, feasible: true })
}

fn semi_point_cost(
    ps: &PointSet,
    i: usize,
    centers: &[Point],
    l: usize,
    paired: usize,
    alpha: f64,
    e1: f64,
    e2: f64,
) -> f64 {
    let geo = alpha * ps.weight(i) * ps.point(i).dist_sq(&centers[l]) / e1;
    if l == paired {
        geo
    } else {
        geo + (1.0 - alpha) * ps.weight(i) / e2
    }
}

/// Semi-supervised k-means: a k x k matching pairs clusters with prior
/// classes, then every point picks its own cheapest cluster under the
/// matching. Objective is `alpha*Cost/E1 + (1-alpha)*dist/E2`, averaged over
/// total weight.
pub fn partition_semi_supervised(
    ps: &PointSet,
    centers: &[Point],
    alpha: f64,
    e1: f64,
    e2: f64,
) -> Result<PartitionOutcome> {
    let prior = ps
        .prior_labels()
        .ok_or_else(|| Error::InvalidParameter("semi-supervised requires prior labels".into()))?;
    let k = centers.len();
    if prior.iter().any(|&p| p >= k) {
        return Err(Error::InvalidParameter("prior label out of range".into()));
    }
    // w[(i, j)]: total best-response cost of prior class i when paired with
    // cluster j.
    let mut w = vec![0.0f64; k * k];
    for (p_idx, &i) in prior.iter().enumerate() {
        for j in 0..k {
            let best = (0..k)
                .map(|l| semi_point_cost(ps, p_idx, centers, l, j, alpha, e1, e2))
                .fold(f64::INFINITY, f64::min);
            w[i * k + j] += best;
        }
    }
    let m = CostMatrix::new(k, k, w)?;
    let (sigma_row, _) = hungarian(&m); // prior class i -> cluster sigma_row[i]
    let mut labels = vec![0usize; ps.len()];
    let mut total = 0.0;
    for (p_idx, &i) in prior.iter().enumerate() {
        let paired = sigma_row[i];
        let mut best_l = 0usize;
        let mut best_c = f64::INFINITY;
        for l in 0..k {
            let c = semi_point_cost(ps, p_idx, centers, l, paired, alpha, e1, e2);
            if c < best_c {
                best_c = c;
                best_l = l;
            }
        }
        labels[p_idx] = best_l;
        total += best_c;
    }
    let objective = total / ps.total_weight();
    Ok(PartitionOutcome::from_labels(labels, objective))
}

/// The combined semi-supervised objective of an arbitrary assignment, with
/// the class-to-cluster matching re-optimized for that assignment.
pub fn semi_supervised_cost(
    ps: &PointSet,
    labels: &[usize],
    centers: &[Point],
    alpha: f64,
    e1: f64,
    e2: f64,
) -> Result<f64> {
    let prior = ps
        .prior_labels()
        .ok_or_else(|| Error::InvalidParameter("semi-supervised requires prior labels".into()))?;
    let k = centers.len();
    let geo: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| alpha * ps.weight(i) * ps.point(i).dist_sq(&centers[l]) / e1)
        .sum();
    // disagree[(i, j)]: weight of points labeled j but outside prior class i.
    let mut disagree = vec![0.0f64; k * k];
    for (p_idx, &l) in labels.iter().enumerate() {
        for i in 0..k {
            if prior[p_idx] != i {
                disagree[i * k + l] += ps.weight(p_idx);
            }
        }
    }
    let m = CostMatrix::new(k, k, disagree)?;
    let (_, dist) = hungarian(&m);
    Ok((geo + (1.0 - alpha) * dist / e2) / ps.total_weight())
}

/// Assign each uncertain node wholly to the center minimizing its expected
/// distance; lowest index wins ties.
pub fn partition_probabilistic_median(nodes: &UncertainSet, centers: &[Point]) -> PartitionOutcome {
    let mut labels = Vec::with_capacity(nodes.len());
    let mut sum = 0.0;
    for node in nodes.nodes() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = node.dist_to(c, Objective::Median);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        labels.push(best);
        sum += best_d;
    }
    let objective = sum / nodes.total_weight();
    PartitionOutcome::from_labels(labels, objective)
}

/// Expected k-median cost of a node assignment, averaged over node mass.
pub fn probabilistic_median_cost(
    nodes: &UncertainSet,
    labels: &[usize],
    centers: &[Point],
) -> Result<f64> {
    if labels.len() != nodes.len() {
        return Err(Error::Malformed("label length mismatch".into()));
    }
    let mut sum = 0.0;
    for (node, &j) in nodes.nodes().iter().zip(labels) {
        let c = centers.get(j).ok_or_else(|| Error::Malformed("cluster id out of range".into()))?;
        sum += node.dist_to(c, Objective::Median);
    }
    Ok(sum / nodes.total_weight())
}

/// Replace each node by its weighted mean point with weight `w_i`. Solving
/// weighted k-means on the reduction and adding the constant within-node
/// variance term reproduces the uncertain objective.
pub fn reduce_uncertain_means(nodes: &UncertainSet) -> Result<PointSet> {
    let mut points = Vec::with_capacity(nodes.len());
    let mut weights = Vec::with_capacity(nodes.len());
    for node in nodes.nodes() {
        points.push(node.mean()?);
        weights.push(node.weight());
    }
    PointSet::new(points)?.with_weights(weights)
}

/// `sum_i w_i * variance_i / W`: the assignment-independent part of the
/// uncertain k-means objective.
pub fn uncertain_means_constant(nodes: &UncertainSet) -> Result<f64> {
    let mut sum = 0.0;
    for node in nodes.nodes() {
        sum += node.weight() * node.variance()?;
    }
    Ok(sum / nodes.total_weight())
}

/// Expected k-means cost of a node assignment, averaged over node mass.
pub fn uncertain_means_cost(
    nodes: &UncertainSet,
    labels: &[usize],
    centers: &[Point],
) -> Result<f64> {
    if labels.len() != nodes.len() {
        return Err(Error::Malformed("label length mismatch".into()));
    }
    let mut sum = 0.0;
    for (node, &j) in nodes.nodes().iter().zip(labels) {
        let c = centers.get(j).ok_or_else(|| Error::Malformed("cluster id out of range".into()))?;
        sum += node.dist_to(c, Objective::Means);
    }
    Ok(sum / nodes.total_weight())
}

/// Dispatch to the solver for `constraint`.
pub fn partition(
    data: &Instance,
    centers: &[Point],
    constraint: &ConstraintSpec,
    objective: Objective,
) -> Result<PartitionOutcome> {
    match constraint {
        ConstraintSpec::Unconstrained => {
            Ok(partition_unconstrained(data.as_points()?, centers, objective))
        }
        ConstraintSpec::RGather { r } => partition_r_gather(data.as_points()?, centers, *r, objective),
        ConstraintSpec::RCapacity { r } => {
            partition_r_capacity(data.as_points()?, centers, *r, objective)
        }
        ConstraintSpec::LDiversity { l } => {
            partition_l_diversity(data.as_points()?, centers, *l, objective)
        }
        ConstraintSpec::DistinctColor { l } => {
            partition_distinct_color(data.as_points()?, centers, *l, objective)
        }
        ConstraintSpec::Chromatic => partition_chromatic(data.as_points()?, centers, objective),
        ConstraintSpec::FaultTolerant { l } => {
            partition_fault_tolerant(data.as_points()?, centers, l, objective)
        }
        ConstraintSpec::SemiSupervised { alpha, e1, e2 } => {
            partition_semi_supervised(data.as_points()?, centers, *alpha, *e1, *e2)
        }
        ConstraintSpec::ProbabilisticMedian => {
            Ok(partition_probabilistic_median(data.as_uncertain()?, centers))
        }
        ConstraintSpec::UncertainMeans => {
            let nodes = data.as_uncertain()?;
            let reduced = reduce_uncertain_means(nodes)?;
            let outcome = partition_unconstrained(&reduced, centers, Objective::Means);
            let labels = outcome.labels().expect("singleton labels");
            let objective = uncertain_means_cost(nodes, &labels, centers)?;
            Ok(PartitionOutcome::from_labels(labels, objective))
        }
    }
}

/// Recompute the objective of `memberships` from scratch, honoring the
/// constraint's own cost convention.
pub fn recompute_objective(
    data: &Instance,
    memberships: &[Vec<usize>],
    centers: &[Point],
    constraint: &ConstraintSpec,
    objective: Objective,
) -> Result<f64> {
    let single = || -> Result<Vec<usize>> {
        memberships
            .iter()
            .map(|m| {
                if m.len() == 1 {
                    Ok(m[0])
                } else {
                    Err(Error::Malformed("expected singleton memberships".into()))
                }
            })
            .collect()
    };
    match constraint {
        ConstraintSpec::FaultTolerant { .. } => {
            fault_tolerant_cost(data.as_points()?, memberships, centers, objective)
        }
        ConstraintSpec::SemiSupervised { alpha, e1, e2 } => {
            semi_supervised_cost(data.as_points()?, &single()?, centers, *alpha, *e1, *e2)
        }
        ConstraintSpec::ProbabilisticMedian => {
            probabilistic_median_cost(data.as_uncertain()?, &single()?, centers)
        }
        ConstraintSpec::UncertainMeans => {
            uncertain_means_cost(data.as_uncertain()?, &single()?, centers)
        }
        _ => cost(data.as_points()?, &single()?, centers, objective),
    }
}

/// Independent constraint predicate on an assignment. Exact integer checks
/// only; never consults the solvers.
pub fn validate_assignment(
    data: &Instance,
    constraint: &ConstraintSpec,
    memberships: &[Vec<usize>],
    k: usize,
) -> std::result::Result<(), String> {
    if memberships.len() != data.len() {
        return Err(format!(
            "assignment covers {} items, instance has {}",
            memberships.len(),
            data.len()
        ));
    }
    for (i, m) in memberships.iter().enumerate() {
        if m.iter().any(|&j| j >= k) {
            return Err(format!("item {i} assigned to a cluster id >= k"));
        }
    }
    let singleton = |kind: &str| -> std::result::Result<Vec<usize>, String> {
        memberships
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if m.len() == 1 {
                    Ok(m[0])
                } else {
                    Err(format!("{kind}: item {i} must belong to exactly one cluster"))
                }
            })
            .collect()
    };
    let sizes = |labels: &[usize]| -> Vec<usize> {
        let mut s = vec![0usize; k];
        for &l in labels {
            s[l] += 1;
        }
        s
    };
    match constraint {
        ConstraintSpec::Unconstrained
        | ConstraintSpec::SemiSupervised { .. }
        | ConstraintSpec::ProbabilisticMedian
        | ConstraintSpec::UncertainMeans => {
            singleton(constraint.name())?;
            Ok(())
        }
        ConstraintSpec::RGather { r } => {
            let labels = singleton("r-gather")?;
            for (j, s) in sizes(&labels).iter().enumerate() {
                if *s < *r {
                    return Err(format!("cluster {j} has {s} < r = {r} points"));
                }
            }
            Ok(())
        }
        ConstraintSpec::RCapacity { r } => {
            let labels = singleton("r-capacity")?;
            for (j, s) in sizes(&labels).iter().enumerate() {
                if *s > *r {
                    return Err(format!("cluster {j} has {s} > r = {r} points"));
                }
            }
            Ok(())
        }
        ConstraintSpec::LDiversity { l } => {
            let ps = data.as_points().map_err(|e| e.to_string())?;
            let colors = ps.colors().ok_or("l-diversity requires colors")?;
            let labels = singleton("l-diversity")?;
            let s = sizes(&labels);
            let mut counts: BTreeMap<(usize, u32), usize> = BTreeMap::new();
            for (i, &j) in labels.iter().enumerate() {
                *counts.entry((j, colors[i])).or_default() += 1;
            }
            for ((j, c), cnt) in counts {
                if cnt * l > s[j] {
                    return Err(format!(
                        "cluster {j} holds {cnt} points of color {c} out of {} (fraction > 1/{l})",
                        s[j]
                    ));
                }
            }
            Ok(())
        }
        ConstraintSpec::DistinctColor { l } => {
            let ps = data.as_points().map_err(|e| e.to_string())?;
            let colors = ps.colors().ok_or("distinct-color requires colors")?;
            let labels = singleton("distinct-color")?;
            for (j, s) in sizes(&labels).iter().enumerate() {
                if *s < *l {
                    return Err(format!("cluster {j} has {s} < l = {l} points"));
                }
            }
            let mut seen = std::collections::HashSet::new();
            for (i, &j) in labels.iter().enumerate() {
                if !seen.insert((j, colors[i])) {
                    return Err(format!("cluster {j} repeats color {}", colors[i]));
                }
            }
            Ok(())
        }
        ConstraintSpec::Chromatic => {
            let ps = data.as_points().map_err(|e| e.to_string())?;
            let colors = ps.colors().ok_or("chromatic requires colors")?;
            let labels = singleton("chromatic")?;
            let mut seen = std::collections::HashSet::new();
            for (i, &j) in labels.iter().enumerate() {
                if !seen.insert((j, colors[i])) {
                    return Err(format!("cluster {j} repeats color {}", colors[i]));
                }
            }
            Ok(())
        }
        ConstraintSpec::FaultTolerant { l } => {
            let n = data.len();
            let ls = fault_l_values(l, n);
            for (i, m) in memberships.iter().enumerate() {
                if m.len() != ls[i] {
                    return Err(format!("point {i} assigned to {} centers, needs {}", m.len(), ls[i]));
                }
                let mut sorted = m.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != m.len() {
                    return Err(format!("point {i} assigned twice to one center"));
                }
            }
            Ok(())
        }
    }
}
