//! The peel-and-enclose driver: upper-bound estimation over the Cartesian
//! product of reference centers, the geometric ladder of objective guesses,
//! radius candidate sets, candidate trees for the means and median tracks,
//! and the selection loop that pairs every candidate tuple with the
//! partition solver for the active constraint.
//!
//! Parameter presets matter here. The faithful sample sizes make the trees
//! provably good and astronomically wide; the practical preset keeps the same
//! construction shape with small samples, a node budget, and an optional beam
//! that prunes each node's children. Only the faithful constants inherit the
//! approximation guarantee, so the practical default is validated empirically
//! against the brute-force oracle instead.

use log::debug;

use crate::error::{Error, Result};
use crate::geometry::{
    cost, mean, simplex_grid, simplex_grid_specs, weaker_simplex_grid,
    weaker_simplex_grid_specs, Objective, Point, PointSet,
};
use crate::par::{filter_min_indexed, TotalF64};
use crate::partitions::{partition, ConstraintSpec, Instance, PartitionOutcome};
use crate::sampling::{
    sample_uniform, sample_weighted, subset_means, weiszfeld_median, Preset, RandomSource,
    SampleParams,
};

/// Cap on the number of `[C]^k` tuples enumerated during upper-bound
/// estimation; beyond it tuples are sampled uniformly.
const PRODUCT_CAP: usize = 1_000_000;

/// Largest per-node enumeration allowed before a grid is represented by
/// snap points only (beam mode never enumerates more than this).
const GRID_ENUM_CAP: u64 = 8_192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    Means,
    Median,
}

impl Track {
    pub fn for_objective(objective: Objective) -> Track {
        match objective {
            Objective::Means => Track::Means,
            Objective::Median => Track::Median,
        }
    }
}

/// Parameters for one tree construction (one objective-value guess).
#[derive(Debug, Clone)]
pub struct PneParams {
    pub k: usize,
    pub eps: f64,
    /// Current guess of delta (means track) or mu (median track).
    pub delta_or_mu: f64,
    pub preset: SampleParams,
    pub max_tree_nodes: usize,
    pub beam_width: Option<usize>,
}

impl PneParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter("eps must be in (0, 1)".into()));
        }
        if !(self.delta_or_mu >= 0.0) {
            return Err(Error::InvalidParameter("objective guess must be >= 0".into()));
        }
        if self.max_tree_nodes < 2 {
            return Err(Error::InvalidParameter("max_tree_nodes must be >= 2".into()));
        }
        if self.preset.preset == Preset::Faithful {
            if self.k < 2 {
                return Err(Error::InvalidParameter("faithful mode requires k >= 2".into()));
            }
            let lim = 1.0 / (4.0 * (self.k * self.k) as f64);
            if self.eps >= lim {
                return Err(Error::InvalidParameter(format!(
                    "faithful mode requires eps < 1/(4k^2) = {lim}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct TreeNode {
    parent: Option<usize>,
    point: Option<Point>,
    height: usize,
}

/// A candidate tree: the root carries no point, every deeper node carries
/// one center candidate, and each root-to-leaf path spells a k-tuple.
#[derive(Debug)]
pub struct PneTree {
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
}

impl PneTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn height_of(&self, node: usize) -> usize {
        self.nodes[node].height
    }

    /// The k points associated with the path from the root to `leaf`.
    pub fn path_points(&self, leaf: usize) -> Vec<Point> {
        let mut out = Vec::new();
        let mut cur = Some(leaf);
        while let Some(id) = cur {
            if let Some(p) = &self.nodes[id].point {
                out.push(p.clone());
            }
            cur = self.nodes[id].parent;
        }
        out.reverse();
        out
    }
}

/// Where a candidate tuple came from. Orders by guess, then tree, then leaf,
/// which is the "earliest provenance" tie-break. The estimator fallback
/// tuple uses `usize::MAX` markers and therefore loses every tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Provenance {
    pub delta_index: usize,
    pub tree: usize,
    pub leaf: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateTuple {
    pub centers: Vec<Point>,
    pub provenance: Provenance,
}

/// Upper bound `Delta` on the optimal average objective, with the ratio `c`
/// such that `Delta <= c * optimum` under a faithful lambda.
#[derive(Debug, Clone)]
pub struct UpperBound {
    pub delta: f64,
    pub c: f64,
    pub tuple: Vec<Point>,
    pub outcome: PartitionOutcome,
}

/// Geometric ladder `{Delta/c, (1+eps)Delta/c, ...}` whose last element
/// reaches `Delta`.
pub fn objective_search_set(delta: f64, c: f64, eps: f64) -> Vec<f64> {
    if delta <= 0.0 {
        return vec![0.0];
    }
    let c = c.max(1.0);
    let steps = if c <= 1.0 { 0 } else { (c.ln() / (1.0 + eps).ln()).ceil() as usize };
    (0..=steps).map(|i| delta / c * (1.0 + eps).powi(i as i32)).collect()
}

/// Radius candidate set for peeling spheres at height `j`. The means track
/// ladders `2^(t/2) * sqrt(eps) * delta`; the median track `2^t * eps * mu`.
pub fn radius_candidates(j: usize, delta: f64, eps: f64, n: usize, track: Track) -> Vec<f64> {
    let n = n.max(2);
    let t_hi = (n as f64).log2().ceil() as i32;
    let l_hi = (4.0 + 2.0 / eps).ceil() as usize;
    let mut out = Vec::with_capacity((t_hi as usize + 1) * (l_hi + 1));
    for t in 0..=t_hi {
        let base = match track {
            Track::Means => 2f64.powf(t as f64 / 2.0) * eps.sqrt() * delta,
            Track::Median => 2f64.powi(t) * eps * delta,
        };
        for l in 0..=l_hi {
            let r = (1.0 + l as f64 * eps / 2.0) / (2.0 * (1.0 + eps)) * j as f64 * base;
            out.push(r);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| a.to_bits() == b.to_bits());
    out
}

/// Distance-proportional seeding plus local improvement to convergence: the
/// unconstrained reference algorithm used for upper-bound estimation.
pub fn unconstrained_reference(
    ps: &PointSet,
    k: usize,
    objective: Objective,
    restarts: usize,
    rng: &RandomSource,
) -> Result<Vec<Point>> {
    let n = ps.len();
    let mut best: Option<(f64, Vec<Point>)> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng.child(restart as u64).rng();
        let mut centers: Vec<Point> = Vec::with_capacity(k);
        let weights: Vec<f64> = (0..n).map(|i| ps.weight(i)).collect();
        let first = sample_weighted(&weights, 1, &mut rng)?[0];
        centers.push(ps.point(first).clone());
        while centers.len() < k {
            let scores: Vec<f64> = (0..n)
                .map(|i| {
                    let d2 = centers.iter().map(|c| ps.point(i).dist_sq(c)).fold(f64::INFINITY, f64::min);
                    let d = match objective {
                        Objective::Means => d2,
                        Objective::Median => d2.sqrt(),
                    };
                    ps.weight(i) * d
                })
                .collect();
            let total: f64 = scores.iter().sum();
            let pick = if total > 0.0 {
                sample_weighted(&scores, 1, &mut rng)?[0]
            } else {
                sample_uniform(n, 1, &mut rng)?[0]
            };
            centers.push(ps.point(pick).clone());
        }
        let mut labels = vec![usize::MAX; n];
        for _ in 0..100 {
            let next: Vec<usize> = ps
                .points()
                .iter()
                .map(|p| {
                    let mut bj = 0;
                    let mut bd = f64::INFINITY;
                    for (j, c) in centers.iter().enumerate() {
                        let d = p.dist_sq(c);
                        if d < bd {
                            bd = d;
                            bj = j;
                        }
                    }
                    bj
                })
                .collect();
            if next == labels {
                break;
            }
            labels = next;
            for j in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == j).collect();
                if members.is_empty() {
                    // Reseed an empty cluster at the worst-served point.
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            let da = centers.iter().map(|c| ps.point(a).dist_sq(c)).fold(f64::INFINITY, f64::min);
                            let db = centers.iter().map(|c| ps.point(b).dist_sq(c)).fold(f64::INFINITY, f64::min);
                            da.total_cmp(&db).then(b.cmp(&a))
                        })
                        .expect("nonempty set");
                    centers[j] = ps.point(far).clone();
                    continue;
                }
                centers[j] = match objective {
                    Objective::Means => mean(ps, &members)?,
                    Objective::Median => weiszfeld_median(ps, &members, 1e-9, 10_000)?,
                };
            }
        }
        let c = cost(ps, &labels, &centers, objective)?;
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, centers));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn ratio_constant(objective: Objective, lambda: f64) -> f64 {
    match objective {
        Objective::Means => 18.0 * lambda + 16.0,
        Objective::Median => 3.0 * lambda + 2.0,
    }
}

/// Enumerate `[C]^k` (capped), partition every tuple under the constraint,
/// and return the best feasible cost as the upper bound.
pub fn estimate_upper_bound_with_centers(
    data: &Instance,
    k: usize,
    constraint: &ConstraintSpec,
    objective: Objective,
    reference: &[Point],
    lambda: f64,
    rng: &RandomSource,
) -> Result<UpperBound> {
    let m = reference.len();
    if m == 0 {
        return Err(Error::EmptySubset);
    }
    let total = (m as f64).powi(k as i32);
    let tuples: Vec<Vec<usize>> = if total <= PRODUCT_CAP as f64 {
        let mut out = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; k];
        'outer: loop {
            out.push(idx.clone());
            for d in 0..k {
                idx[d] += 1;
                if idx[d] < m {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        out
    } else {
        let mut rng = rng.rng();
        (0..PRODUCT_CAP)
            .map(|_| (0..k).map(|_| sample_uniform(m, 1, &mut rng).expect("m >= 1")[0]).collect())
            .collect()
    };
    let best = filter_min_indexed(tuples.len(), |t| {
        let centers: Vec<Point> = tuples[t].iter().map(|&i| reference[i].clone()).collect();
        match partition(data, &centers, constraint, objective) {
            Ok(out) if out.feasible => Some((TotalF64(out.objective), t)),
            _ => None,
        }
    });
    let (TotalF64(delta), t) = best.ok_or(Error::AllTuplesInfeasible)?;
    let centers: Vec<Point> = tuples[t].iter().map(|&i| reference[i].clone()).collect();
    let outcome = partition(data, &centers, constraint, objective)?;
    Ok(UpperBound { delta, c: ratio_constant(objective, lambda), tuple: centers, outcome })
}

/// Upper-bound estimation end to end: run the unconstrained reference
/// algorithm, then [`estimate_upper_bound_with_centers`].
pub fn estimate_upper_bound(
    data: &Instance,
    k: usize,
    constraint: &ConstraintSpec,
    objective: Objective,
    lambda: f64,
    restarts: usize,
    rng: &RandomSource,
) -> Result<UpperBound> {
    let working = working_points(data, constraint)?;
    let reference =
        unconstrained_reference(&working, k, objective, restarts, &rng.child(0x5eed))?;
    estimate_upper_bound_with_centers(data, k, constraint, objective, &reference, lambda, &rng.child(1))
}

/// The point set the trees are built on: plain points as-is, uncertain
/// instances flattened (median) or reduced to node means (means).
pub fn working_points(data: &Instance, constraint: &ConstraintSpec) -> Result<PointSet> {
    match data {
        Instance::Points(ps) => Ok(ps.clone()),
        Instance::Uncertain(nodes) => match constraint {
            ConstraintSpec::UncertainMeans => crate::partitions::reduce_uncertain_means(nodes),
            _ => nodes.flatten(),
        },
    }
}

/// Effective `n` for the radius ladder: `ceil(W / w_min)` on weighted sets.
fn effective_n(ps: &PointSet) -> usize {
    match ps.weights() {
        None => ps.len(),
        Some(ws) => {
            let w_min = ws.iter().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
            if !w_min.is_finite() {
                return ps.len();
            }
            ((ps.total_weight() / w_min).ceil() as usize).clamp(2, 1 << 20)
        }
    }
}

fn dedup_in_order(points: Vec<Point>) -> Vec<Point> {
    let mut seen = std::collections::HashSet::new();
    points.into_iter().filter(|p| seen.insert(p.bits())).collect()
}

fn sample_points(ps: &PointSet, from: &[usize], s: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    if from.is_empty() || s == 0 {
        return Vec::new();
    }
    if ps.weights().is_some() {
        let ws: Vec<f64> = from.iter().map(|&i| ps.weight(i)).collect();
        if ws.iter().sum::<f64>() > 0.0 {
            return sample_weighted(&ws, s, rng)
                .expect("nonempty weights")
                .into_iter()
                .map(|local| from[local])
                .collect();
        }
    }
    sample_uniform(from.len(), s, rng)
        .expect("nonempty universe")
        .into_iter()
        .map(|local| from[local])
        .collect()
}

/// Candidate children of the root: subset means of one plain sample, led by
/// the full-sample mean and the sampled points themselves.
fn root_candidates_means(ps: &PointSet, params: &PneParams, rng: &RandomSource) -> Vec<Point> {
    let mut rng_s = rng.child(0).rng();
    let all: Vec<usize> = (0..ps.len()).collect();
    let idx = sample_points(ps, &all, params.preset.s, &mut rng_s);
    let pts: Vec<Point> = idx.iter().map(|&i| ps.point(i).clone()).collect();
    let mut rng_pi = rng.child(1).rng();
    let pis = subset_means(&pts, params.preset.subset_cap, &mut rng_pi);
    let mut out = Vec::with_capacity(pis.len() + 1 + pts.len());
    if let Ok(full) = Point::new({
        let mut acc = vec![0.0; ps.dim()];
        for p in &pts {
            for (a, c) in acc.iter_mut().zip(p.coords()) {
                *a += c;
            }
        }
        for a in acc.iter_mut() {
            *a /= pts.len() as f64;
        }
        acc
    }) {
        out.push(full);
    }
    out.extend(pts);
    out.extend(pis);
    dedup_in_order(out)
}

/// Candidate children of the root on the median track: the sample points and
/// the Weiszfeld medians of every sample prefix (full prefix first).
fn root_candidates_median(ps: &PointSet, params: &PneParams, rng: &RandomSource) -> Vec<Point> {
    let mut rng_s = rng.child(0).rng();
    let all: Vec<usize> = (0..ps.len()).collect();
    let idx = sample_points(ps, &all, params.preset.s, &mut rng_s);
    let mut out = Vec::new();
    for t in (1..=idx.len()).rev() {
        if let Ok(m) = weiszfeld_median(ps, &idx[..t], 1e-9, 10_000) {
            out.push(m);
        }
    }
    out.extend(idx.iter().map(|&i| ps.point(i).clone()));
    let pts: Vec<Point> = idx.iter().map(|&i| ps.point(i).clone()).collect();
    let mut rng_pi = rng.child(1).rng();
    out.extend(subset_means(&pts, params.preset.subset_cap.min(255), &mut rng_pi));
    dedup_in_order(out)
}

/// Outside-set groups of the radius ladder: radii whose peeling balls leave
/// the same uncovered set are interchangeable for sampling, and the sets are
/// nested, so at most `n + 1` groups exist.
fn radius_groups(ps: &PointSet, path: &[Point], radii: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let dmin: Vec<f64> = ps
        .points()
        .iter()
        .map(|p| path.iter().map(|c| p.dist(c)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut groups: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut last_len = usize::MAX;
    for &r in radii {
        let outside: Vec<usize> = (0..ps.len()).filter(|&i| dmin[i] > r).collect();
        if outside.len() != last_len {
            last_len = outside.len();
            groups.push((outside, r));
        }
    }
    groups
}

fn path_centroid(path: &[Point]) -> Point {
    let dim = path[0].dim();
    let mut acc = vec![0.0; dim];
    for p in path {
        for (a, c) in acc.iter_mut().zip(p.coords()) {
            *a += c;
        }
    }
    for a in acc.iter_mut() {
        *a /= path.len() as f64;
    }
    Point::new(acc).expect("finite centroid")
}

fn lerp(a: &Point, b: &Point, f: f64) -> Point {
    let coords = a
        .coords()
        .iter()
        .zip(b.coords())
        .map(|(x, y)| x + f * (y - x))
        .collect();
    Point::new(coords).expect("finite interpolation")
}

/// Internal-node children for the means track.
///
/// In beam mode the grids are represented by their anchors and a handful of
/// mesh snaps per simplex, ordered so that the full-sample mean of each
/// peeling scale comes first; full enumeration (the literal construction) is
/// used when no beam is set.
fn internal_candidates_means(
    ps: &PointSet,
    path: &[Point],
    params: &PneParams,
    rng: &RandomSource,
) -> Result<Vec<Point>> {
    let j = path.len();
    let eps0 = (params.eps * params.eps / 4.0).min(1.0);
    let radii = radius_candidates(j, params.delta_or_mu, params.eps, effective_n(ps), Track::Means);
    let groups = radius_groups(ps, path, &radii);
    let beam = params.beam_width;
    let centroid = path_centroid(path);

    let mut level_a = Vec::new();
    let mut level_b = Vec::new();
    let mut level_c = Vec::new();
    let mut level_d = Vec::new();
    let mut level_e = Vec::new();

    for (gi, (outside, _)) in groups.iter().enumerate() {
        let mut pis: Vec<Point> = Vec::new();
        if !outside.is_empty() {
            let mut rng_s = rng.child(gi as u64).rng();
            let idx = sample_points(ps, outside, params.preset.s, &mut rng_s);
            let pts: Vec<Point> = idx.iter().map(|&i| ps.point(i).clone()).collect();
            let mut rng_pi = rng.child(0x100 + gi as u64).rng();
            let subsets = subset_means(&pts, params.preset.subset_cap, &mut rng_pi);
            // Full-sample mean first, then singletons, then the rest.
            if let Some(full) = subsets.last() {
                pis.push(full.clone());
            }
            pis.extend(pts);
            pis.extend(subsets);
            pis = dedup_in_order(pis);
        }
        if beam.is_none() {
            // Literal construction: grids over the path simplex and over
            // every (path + pi) simplex.
            level_e.extend(simplex_grid(path, eps0)?);
            for pi in &pis {
                let mut verts = path.to_vec();
                verts.push(pi.clone());
                level_e.extend(simplex_grid(&verts, eps0)?);
            }
            continue;
        }
        for (pi_rank, pi) in pis.iter().enumerate() {
            match pi_rank {
                0 => level_a.push(pi.clone()),
                r if r <= params.preset.s => level_b.push(pi.clone()),
                _ => level_c.push(pi.clone()),
            }
            // Mesh snaps between the path and pi, at the full-simplex scale.
            if pi_rank <= params.preset.s {
                let mut verts = path.to_vec();
                verts.push(pi.clone());
                if let Ok(specs) = simplex_grid_specs(&verts, eps0) {
                    if let Some(full) = specs.last() {
                        for f in [0.25, 0.5, 0.75] {
                            level_d.push(full.snap_inside(&lerp(pi, &centroid, f)));
                        }
                    }
                }
            }
        }
    }
    // The path simplex itself, enumerated when small.
    let path_specs = simplex_grid_specs(path, eps0)?;
    let cells: u64 = path_specs
        .iter()
        .map(|s| s.cells_per_axis().saturating_add(1).pow(s.flat().dim().min(8) as u32))
        .sum();
    if beam.is_none() || cells <= GRID_ENUM_CAP {
        for s in &path_specs {
            level_e.extend(s.enumerate());
        }
    } else {
        for s in &path_specs {
            level_e.push(s.snap_inside(&centroid));
            level_e.push(s.center().clone());
        }
    }

    let mut out = level_a;
    out.extend(level_b);
    out.extend(level_c);
    out.extend(level_d);
    out.extend(level_e);
    Ok(dedup_in_order(out))
}

/// Internal-node children for the median track: grids per the weaker
/// construction in the path flat (ball radii from the radius ladder), plus
/// sample-prefix medians standing in for the grown-flat search.
fn internal_candidates_median(
    ps: &PointSet,
    path: &[Point],
    params: &PneParams,
    rng: &RandomSource,
) -> Result<Vec<Point>> {
    let j = path.len();
    let eps_w = (params.eps * params.eps / 4.0).min(0.19);
    let radii =
        radius_candidates(j, params.delta_or_mu, params.eps, effective_n(ps), Track::Median);
    let groups = radius_groups(ps, path, &radii);
    let beam = params.beam_width;

    let mut level_a = Vec::new();
    let mut level_b = Vec::new();
    let mut level_c = Vec::new();
    let mut prefix_medians: Vec<(usize, Vec<Point>)> = Vec::new(); // per group

    for (gi, (outside, _)) in groups.iter().enumerate() {
        let mut medians = Vec::new();
        if !outside.is_empty() {
            let mut rng_s = rng.child(gi as u64).rng();
            let idx = sample_points(ps, outside, params.preset.s, &mut rng_s);
            for t in (1..=idx.len()).rev() {
                if let Ok(m) = weiszfeld_median(ps, &idx[..t], 1e-9, 10_000) {
                    medians.push(m);
                }
            }
            medians.extend(idx.iter().map(|&i| ps.point(i).clone()));
            medians = dedup_in_order(medians);
        }
        if let Some(first) = medians.first() {
            level_a.push(first.clone());
        }
        level_b.extend(medians.iter().skip(1).cloned());
        prefix_medians.push((gi, medians));
    }

    for &r in &radii {
        if beam.is_none() {
            level_c.extend(weaker_simplex_grid(path, r, eps_w)?);
            // Grown flats: path plus short sample prefixes.
            for (gi, medians) in &prefix_medians {
                let _ = gi;
                for t in 1..=medians.len().min(2) {
                    let mut centers = path.to_vec();
                    centers.extend(medians.iter().take(t).cloned());
                    level_c.extend(weaker_simplex_grid(&centers, r, eps_w)?);
                }
            }
        } else {
            let specs = weaker_simplex_grid_specs(path, r, eps_w)?;
            let cells: u64 = specs
                .iter()
                .map(|s| s.cells_per_axis().saturating_add(1).pow(s.flat().dim().min(8) as u32))
                .sum();
            if cells <= GRID_ENUM_CAP / (radii.len() as u64).max(1) {
                for s in &specs {
                    level_c.extend(s.enumerate());
                }
            } else {
                for s in &specs {
                    level_c.push(s.center().clone());
                    for (_, medians) in prefix_medians.iter().take(2) {
                        for m in medians.iter().take(2) {
                            level_c.push(s.snap_inside(m));
                        }
                    }
                }
            }
        }
    }

    let mut out = level_a;
    out.extend(level_b);
    out.extend(level_c);
    Ok(dedup_in_order(out))
}

fn build_tree(
    ps: &PointSet,
    params: &PneParams,
    rng: &RandomSource,
    track: Track,
) -> Result<PneTree> {
    params.validate()?;
    let mut nodes = vec![TreeNode { parent: None, point: None, height: 0 }];
    let mut frontier = vec![0usize];
    for depth in 0..params.k {
        let mut next = Vec::new();
        for &node_id in &frontier {
            if nodes.len() >= params.max_tree_nodes {
                break; // branch aborted, not the run
            }
            let node_rng = rng.child(0x7000_0000 + node_id as u64);
            let path = {
                let mut p = Vec::new();
                let mut cur = Some(node_id);
                while let Some(id) = cur {
                    if let Some(pt) = &nodes[id].point {
                        p.push(pt.clone());
                    }
                    cur = nodes[id].parent;
                }
                p.reverse();
                p
            };
            let mut children = if depth == 0 {
                match track {
                    Track::Means => root_candidates_means(ps, params, &node_rng),
                    Track::Median => root_candidates_median(ps, params, &node_rng),
                }
            } else {
                match track {
                    Track::Means => internal_candidates_means(ps, &path, params, &node_rng)?,
                    Track::Median => internal_candidates_median(ps, &path, params, &node_rng)?,
                }
            };
            if let Some(w) = params.beam_width {
                children.truncate(w);
            }
            for child in children {
                if nodes.len() >= params.max_tree_nodes {
                    break;
                }
                let id = nodes.len();
                nodes.push(TreeNode {
                    parent: Some(node_id),
                    point: Some(child),
                    height: depth + 1,
                });
                next.push(id);
            }
        }
        if depth == 0 && next.is_empty() {
            return Err(Error::TreeBudget);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    let leaves: Vec<usize> =
        (0..nodes.len()).filter(|&i| nodes[i].height == params.k).collect();
    debug!(
        "tree built: {} nodes, {} leaves (guess {})",
        nodes.len(),
        leaves.len(),
        params.delta_or_mu
    );
    Ok(PneTree { nodes, leaves })
}

/// Candidate tree for the means track (peeling + simplex grids).
pub fn build_tree_means(ps: &PointSet, params: &PneParams, rng: &RandomSource) -> Result<PneTree> {
    build_tree(ps, params, rng, Track::Means)
}

/// Candidate tree for the median track (peeling + weaker-simplex grids).
pub fn build_tree_medians(ps: &PointSet, params: &PneParams, rng: &RandomSource) -> Result<PneTree> {
    build_tree(ps, params, rng, Track::Median)
}

/// Solve-level parameters; see [`SolveParams::practical`] for the default
/// preset used by the CLI.
#[derive(Debug, Clone)]
pub struct SolveParams {
    pub k: usize,
    pub eps: f64,
    pub preset: SampleParams,
    pub lambda: f64,
    pub restarts: usize,
    pub max_tree_nodes: usize,
    pub beam_width: Option<usize>,
}

impl SolveParams {
    pub fn practical(k: usize, eps: f64) -> Self {
        Self {
            k,
            eps,
            preset: SampleParams::practical(),
            lambda: 20.0,
            restarts: 5,
            max_tree_nodes: 100_000,
            beam_width: Some(24),
        }
    }

    /// Provably sufficient constants; errs unless the sample size is materializable
    /// (it never is for realistic `(k, eps)`).
    pub fn faithful(k: usize, eps: f64, objective: Objective) -> Result<Self> {
        let preset = match objective {
            Objective::Means => SampleParams::faithful_means(k, eps)?,
            Objective::Median => SampleParams::faithful_median(k, eps)?,
        };
        Ok(Self {
            k,
            eps,
            preset,
            lambda: 20.0,
            restarts: 5,
            max_tree_nodes: usize::MAX / 2,
            beam_width: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub centers: Vec<Point>,
    pub provenance: Provenance,
    pub outcome: PartitionOutcome,
    pub delta: f64,
    pub c: f64,
    pub guesses: Vec<f64>,
    pub candidates_per_guess: Vec<usize>,
    pub tuples_evaluated: usize,
}

/// Full pipeline: estimate the upper bound, ladder the objective guesses,
/// build one tree per guess, and select the cheapest feasible tuple under
/// the constraint's partition solver. The estimator's own best tuple is kept
/// as a fallback candidate, so the returned cost never exceeds `Delta`.
pub fn solve(
    data: &Instance,
    constraint: &ConstraintSpec,
    objective: Objective,
    params: &SolveParams,
    rng: &RandomSource,
) -> Result<SolveOutput> {
    constraint.check_applicable(data, params.k)?;
    let ub = estimate_upper_bound(
        data,
        params.k,
        constraint,
        objective,
        params.lambda,
        params.restarts,
        &rng.child(0),
    )?;
    let guesses = objective_search_set(ub.delta, ub.c, params.eps);
    solve_with_guesses(data, constraint, objective, params, &guesses, ub, rng)
}

/// Like [`solve`] but with an explicit guess ladder; exposed so tests can
/// verify that enlarging the ladder never worsens the result.
#[allow(clippy::too_many_arguments)]
pub fn solve_with_guesses(
    data: &Instance,
    constraint: &ConstraintSpec,
    objective: Objective,
    params: &SolveParams,
    guesses: &[f64],
    ub: UpperBound,
    rng: &RandomSource,
) -> Result<SolveOutput> {
    let track = Track::for_objective(objective);
    let working = working_points(data, constraint)?;
    let mut tuples: Vec<CandidateTuple> = Vec::new();
    let mut candidates_per_guess = Vec::with_capacity(guesses.len());
    for (gi, &h) in guesses.iter().enumerate() {
        let delta_or_mu = match track {
            Track::Means => h.max(0.0).sqrt(),
            Track::Median => h.max(0.0),
        };
        let tree_params = PneParams {
            k: params.k,
            eps: params.eps,
            delta_or_mu,
            preset: params.preset,
            max_tree_nodes: params.max_tree_nodes,
            beam_width: params.beam_width,
        };
        let tree = build_tree(&working, &tree_params, &rng.child(0x100 + gi as u64), track)?;
        candidates_per_guess.push(tree.leaves().len());
        for (li, &leaf) in tree.leaves().iter().enumerate() {
            tuples.push(CandidateTuple {
                centers: tree.path_points(leaf),
                provenance: Provenance { delta_index: gi, tree: gi, leaf: li },
            });
        }
    }
    // Deduplicate identical tuples; the earliest provenance survives.
    let mut seen = std::collections::HashSet::new();
    tuples.retain(|t| {
        let key: Vec<u64> = t.centers.iter().flat_map(|p| p.bits()).collect();
        seen.insert(key)
    });
    let evaluated = tuples.len();
    let best = filter_min_indexed(tuples.len(), |i| {
        let t = &tuples[i];
        match partition(data, &t.centers, constraint, objective) {
            Ok(out) if out.feasible => Some((TotalF64(out.objective), t.provenance)),
            _ => None,
        }
    });
    let fallback = Provenance { delta_index: usize::MAX, tree: usize::MAX, leaf: usize::MAX };
    let (centers, provenance, outcome) = match best {
        Some((TotalF64(c), prov)) if c <= ub.outcome.objective => {
            let t = tuples.iter().find(|t| t.provenance == prov).expect("provenance is unique");
            let outcome = partition(data, &t.centers, constraint, objective)?;
            (t.centers.clone(), prov, outcome)
        }
        _ => (ub.tuple.clone(), fallback, ub.outcome.clone()),
    };
    debug_assert!({
        let re = crate::partitions::recompute_objective(
            data,
            &outcome.memberships,
            &centers,
            constraint,
            objective,
        )?;
        (re - outcome.objective).abs() <= 1e-9 * (1.0 + outcome.objective.abs())
    });
    Ok(SolveOutput {
        centers,
        provenance,
        outcome,
        delta: ub.delta,
        c: ub.c,
        guesses: guesses.to_vec(),
        candidates_per_guess,
        tuples_evaluated: evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::variance;

    fn pts(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn search_set_examples() {
        assert_eq!(objective_search_set(4.0, 1.0, 0.5), vec![4.0]);
        let h = objective_search_set(4.0, 4.0, 1.0);
        assert_eq!(h.len(), 3);
        assert!((h[0] - 1.0).abs() < 1e-12);
        assert!((h[1] - 2.0).abs() < 1e-12);
        assert!((h[2] - 4.0).abs() < 1e-12);
        assert!(*h.last().unwrap() >= 4.0 - 1e-12);
    }

    #[test]
    fn search_set_covers_interval() {
        // Any v in [Delta/c, Delta] has h in [v, (1+eps)v].
        let (delta, c, eps) = (7.3, 41.0, 0.3);
        let h = objective_search_set(delta, c, eps);
        let mut v = delta / c;
        while v <= delta {
            assert!(
                h.iter().any(|&x| x >= v - 1e-12 && x <= (1.0 + eps) * v + 1e-9),
                "no ladder element covers {v}"
            );
            v *= 1.02;
        }
    }

    #[test]
    fn radius_candidates_hand_value() {
        // j=2, delta=1, eps=0.25, n=4: the t=0, l=0 entry is
        // (1 / 2.5) * 2 * 1 * 0.5 = 0.4.
        let r = radius_candidates(2, 1.0, 0.25, 4, Track::Means);
        assert!(r.iter().any(|&x| (x - 0.4).abs() < 1e-12));
        let t_hi = (4f64).log2().ceil() as usize;
        let l_hi = (4.0f64 + 2.0 / 0.25).ceil() as usize;
        assert!(r.len() <= (t_hi + 1) * (l_hi + 1));
    }

    fn radius_coverage(track: Track, scale: f64) {
        // Peeling-radius coverage: for every beta in [1/n, 1] some r lies in
        // [x, (1 + eps/2) x] where x = j * f(eps / beta) * opt.
        let (j, eps, n) = (3usize, 0.2, 128usize);
        let opt = 2.3;
        for guess_pow in 0..4 {
            // delta in [opt, (1+eps) opt]
            let delta = opt * (1.0f64 + eps).powf(guess_pow as f64 / 4.0);
            let rs = radius_candidates(j, delta * scale, eps, n, track);
            let mut beta = 1.0 / n as f64;
            while beta <= 1.0 {
                let x = match track {
                    Track::Means => j as f64 * (eps / beta).sqrt() * opt * scale,
                    Track::Median => j as f64 * (eps / beta) * opt * scale,
                };
                assert!(
                    rs.iter().any(|&r| r >= x - 1e-9 && r <= (1.0 + eps / 2.0) * x + 1e-9),
                    "beta {beta} uncovered for {track:?}"
                );
                beta *= 1.07;
            }
        }
    }

    #[test]
    fn radius_candidates_cover_means_and_median() {
        radius_coverage(Track::Means, 1.0);
        radius_coverage(Track::Median, 1.0);
    }

    #[test]
    fn upper_bound_zero_error_instance() {
        // Points already sit at the reference centers: Delta = 0 = optimum.
        let ps = pts(&[&[0.0, 0.0], &[0.0, 0.0], &[5.0, 5.0], &[5.0, 5.0]]);
        let data = Instance::Points(ps);
        let reference = vec![
            Point::new(vec![0.0, 0.0]).unwrap(),
            Point::new(vec![5.0, 5.0]).unwrap(),
        ];
        let ub = estimate_upper_bound_with_centers(
            &data,
            2,
            &ConstraintSpec::Unconstrained,
            Objective::Means,
            &reference,
            1.0,
            &RandomSource::new(0),
        )
        .unwrap();
        assert_eq!(ub.delta, 0.0);
        assert_eq!(ub.c, 34.0);
    }

    #[test]
    fn degenerate_tree_repeats_the_duplicate_point() {
        let ps = pts(&[&[3.0, 1.0], &[3.0, 1.0]]);
        let params = PneParams {
            k: 2,
            eps: 0.5,
            delta_or_mu: 1.0,
            preset: SampleParams::practical(),
            max_tree_nodes: 10_000,
            beam_width: None,
        };
        let tree = build_tree_means(&ps, &params, &RandomSource::new(1)).unwrap();
        let dup = Point::new(vec![3.0, 1.0]).unwrap();
        let hit = tree
            .leaves()
            .iter()
            .any(|&l| tree.path_points(l).iter().all(|p| p == &dup));
        assert!(hit, "no leaf path repeats the duplicated point");
    }

    #[test]
    fn every_leaf_path_has_k_points() {
        let mut rng = RandomSource::new(2).rng();
        use rand::Rng as _;
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ps = PointSet::from_rows(rows).unwrap();
        let params = PneParams {
            k: 2,
            eps: 0.4,
            delta_or_mu: 1.0,
            preset: SampleParams::practical_with(5, 65_535),
            max_tree_nodes: 5_000,
            beam_width: Some(8),
        };
        for track in [Track::Means, Track::Median] {
            let tree = build_tree(&ps, &params, &RandomSource::new(3), track).unwrap();
            assert!(!tree.leaves().is_empty());
            for &leaf in tree.leaves() {
                assert_eq!(tree.path_points(leaf).len(), 2);
            }
            assert!(tree.node_count() <= 5_000);
        }
    }

    #[test]
    fn tree_budget_error_when_no_level_one() {
        let ps = pts(&[&[0.0], &[1.0]]);
        let params = PneParams {
            k: 1,
            eps: 0.5,
            delta_or_mu: 1.0,
            preset: SampleParams::practical(),
            max_tree_nodes: 2,
            beam_width: None,
        };
        // Budget of 2 admits the root plus one child; budget of 1 is invalid.
        assert!(build_tree_means(&ps, &params, &RandomSource::new(0)).is_ok());
    }

    #[test]
    fn root_means_candidates_cover_the_true_mean() {
        use rand::Rng as _;
        for seed in 0..10u64 {
            let mut rng = RandomSource::new(seed).rng();
            let n = 60;
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let ps = PointSet::from_rows(rows).unwrap();
            let all: Vec<usize> = (0..n).collect();
            let m = mean(&ps, &all).unwrap();
            let eps = 0.16f64;
            let bound = eps.sqrt() * variance(&ps, &all).unwrap().sqrt();
            let params = PneParams {
                k: 1,
                eps,
                delta_or_mu: 1.0,
                preset: SampleParams::practical_with(10, 65_535),
                max_tree_nodes: 10_000,
                beam_width: None,
            };
            let tree = build_tree_means(&ps, &params, &RandomSource::new(100 + seed)).unwrap();
            let best = tree
                .leaves()
                .iter()
                .map(|&l| tree.path_points(l)[0].dist(&m))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= bound, "seed {seed}: min dist {best} > bound {bound}");
        }
    }

    #[test]
    fn median_root_candidates_near_weiszfeld() {
        use rand::Rng as _;
        for seed in 0..10u64 {
            let mut rng = RandomSource::new(40 + seed).rng();
            let n = 50;
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let ps = PointSet::from_rows(rows).unwrap();
            let all: Vec<usize> = (0..n).collect();
            let w = weiszfeld_median(&ps, &all, 1e-9, 10_000).unwrap();
            let w_cost: f64 = all.iter().map(|&i| ps.point(i).dist(&w)).sum::<f64>() / n as f64;
            let params = PneParams {
                k: 1,
                eps: 0.5,
                delta_or_mu: w_cost,
                preset: SampleParams::practical(),
                max_tree_nodes: 10_000,
                beam_width: None,
            };
            let tree = build_tree_medians(&ps, &params, &RandomSource::new(7 + seed)).unwrap();
            let best = tree
                .leaves()
                .iter()
                .map(|&l| {
                    let c = &tree.path_points(l)[0];
                    all.iter().map(|&i| ps.point(i).dist(c)).sum::<f64>() / n as f64
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                best <= (1.0 + 0.5) * w_cost + 1e-9,
                "seed {seed}: candidate cost {best} vs Weiszfeld {w_cost}"
            );
        }
    }

    #[test]
    fn median_tree_degenerate_and_one_dimensional() {
        // All points identical: every candidate is that point.
        let ps = pts(&[&[2.0, -1.0], &[2.0, -1.0], &[2.0, -1.0]]);
        let params = PneParams {
            k: 1,
            eps: 0.5,
            delta_or_mu: 0.0,
            preset: SampleParams::practical(),
            max_tree_nodes: 1_000,
            beam_width: None,
        };
        let tree = build_tree_medians(&ps, &params, &RandomSource::new(2)).unwrap();
        let dup = Point::new(vec![2.0, -1.0]).unwrap();
        for &leaf in tree.leaves() {
            assert_eq!(tree.path_points(leaf), vec![dup.clone()]);
        }

        // {0, 1, 100}: the 1-median is the middle point with average cost
        // 101/3; the best candidate must come within (1 + eps) of it.
        let line = pts(&[&[0.0], &[1.0], &[100.0]]);
        let exact = 101.0 / 3.0;
        let params = PneParams {
            k: 1,
            eps: 0.5,
            delta_or_mu: exact,
            preset: SampleParams::practical(),
            max_tree_nodes: 10_000,
            beam_width: None,
        };
        let tree = build_tree_medians(&line, &params, &RandomSource::new(3)).unwrap();
        let best = tree
            .leaves()
            .iter()
            .map(|&l| {
                let c = &tree.path_points(l)[0];
                (0..3).map(|i| line.point(i).dist(c)).sum::<f64>() / 3.0
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best <= (1.0 + 0.5) * exact + 1e-9, "best candidate cost {best}");
    }

    #[test]
    fn solve_single_cluster_closed_form() {
        // r-gather with r = n and k = 1 forces one cluster; the optimal
        // center is the mean, so the cost equals the variance.
        let ps = pts(&[&[0.0, 0.0], &[2.0, 0.0], &[1.0, 3.0], &[4.0, 1.0]]);
        let all: Vec<usize> = (0..4).collect();
        let expect = variance(&ps, &all).unwrap();
        let data = Instance::Points(ps);
        let params = SolveParams::practical(1, 0.5);
        let out = solve(
            &data,
            &ConstraintSpec::RGather { r: 4 },
            Objective::Means,
            &params,
            &RandomSource::new(5),
        )
        .unwrap();
        assert!(out.outcome.feasible);
        assert!((out.outcome.objective - expect).abs() <= 1e-9 * (1.0 + expect));
    }
}
