//! Points, cost functions, affine flats, and the grid constructions that
//! enclose unknown mean/median points.
//!
//! The two central constructions are [`simplex_grid`] (means: a uniform mesh
//! inside the bounding ball of a simplex and of each of its degenerate
//! sub-simplices) and [`weaker_simplex_grid`] (medians: meshes inside a family
//! of balls in the flat spanned by the part medians). Both are deterministic
//! and dimension-independent: the mesh lives in the local orthonormal basis of
//! the affine span, so its size depends on the number of vertices, never on
//! the ambient dimension.

use crate::error::{Error, Result};

/// Relative rank tolerance for Gram-Schmidt in [`affine_span`].
const RANK_TOL: f64 = 1e-9;

/// Multiplicative slack for the "inside the ball" membership test.
const BALL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Means,
    Median,
}

/// A point in `R^d`. All coordinates are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("point must have d >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Malformed("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    /// Origin of `R^d`.
    pub fn zeros(dim: usize) -> Self {
        Self { coords: vec![0.0; dim] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        dist_sq(&self.coords, &other.coords)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// Bit pattern of the coordinates, used for exact deduplication.
    pub fn bits(&self) -> Vec<u64> {
        self.coords.iter().map(|c| c.to_bits()).collect()
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A finite set of points sharing one dimension, with optional per-point
/// weights, discrete colors, and prior cluster labels.
#[derive(Debug, Clone)]
pub struct PointSet {
    dim: usize,
    points: Vec<Point>,
    weights: Option<Vec<f64>>,
    colors: Option<Vec<u32>>,
    prior_labels: Option<Vec<usize>>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySubset)?;
        let dim = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
        }
        Ok(Self { dim, points, weights: None, colors: None, prior_labels: None })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Point::new).collect::<Result<_>>()?)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.points.len() {
            return Err(Error::Malformed("weights length mismatch".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Malformed("weights must be finite and >= 0".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<u32>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::Malformed("colors length mismatch".into()));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn with_prior_labels(mut self, prior: Vec<usize>) -> Result<Self> {
        if prior.len() != self.points.len() {
            return Err(Error::Malformed("prior labels length mismatch".into()));
        }
        self.prior_labels = Some(prior);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i)).sum()
    }

    pub fn colors(&self) -> Option<&[u32]> {
        self.colors.as_deref()
    }

    pub fn prior_labels(&self) -> Option<&[usize]> {
        self.prior_labels.as_deref()
    }

    /// Scale every coordinate by `gamma`, keeping weights/colors/priors.
    pub fn scaled(&self, gamma: f64) -> PointSet {
        let points = self
            .points
            .iter()
            .map(|p| Point { coords: p.coords.iter().map(|c| c * gamma).collect() })
            .collect();
        PointSet {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
            colors: self.colors.clone(),
            prior_labels: self.prior_labels.clone(),
        }
    }
}

/// Weighted arithmetic mean of `subset`.
pub fn mean(ps: &PointSet, subset: &[usize]) -> Result<Point> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut acc = vec![0.0; ps.dim()];
    let mut total = 0.0;
    for &i in subset {
        let w = ps.weight(i);
        total += w;
        for (a, c) in acc.iter_mut().zip(ps.point(i).coords()) {
            *a += w * c;
        }
    }
    if total <= 0.0 {
        return Err(Error::InvalidParameter("subset has zero total weight".into()));
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    Point::new(acc)
}

/// Average (weighted) squared distance or distance from each point to its
/// assigned center.
pub fn cost(
    ps: &PointSet,
    assignment: &[usize],
    centers: &[Point],
    objective: Objective,
) -> Result<f64> {
    if assignment.len() != ps.len() {
        return Err(Error::Malformed("assignment length mismatch".into()));
    }
    let mut sum = 0.0;
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        let c = centers.get(j).ok_or_else(|| Error::Malformed(format!("cluster id {j} out of range")))?;
        let w = ps.weight(i);
        let d2 = ps.point(i).dist_sq(c);
        sum += w * match objective {
            Objective::Means => d2,
            Objective::Median => d2.sqrt(),
        };
        total += w;
    }
    Ok(sum / total)
}

/// Average (weighted) squared distance from the subset to its own mean.
pub fn variance(ps: &PointSet, subset: &[usize]) -> Result<f64> {
    let m = mean(ps, subset)?;
    let mut sum = 0.0;
    let mut total = 0.0;
    for &i in subset {
        let w = ps.weight(i);
        sum += w * ps.point(i).dist_sq(&m);
        total += w;
    }
    Ok(sum / total)
}

/// Test-support check of the mean-shift bound: returns
/// `(||mean(Q1) - mean(Q)||, sqrt((1 - a)/a) * sqrt(variance(Q)))` where `a`
/// is the weight fraction of `Q1` in `Q`, and asserts `lhs <= rhs + 1e-9`.
pub fn mean_shift_bound_check(ps: &PointSet, subset: &[usize]) -> Result<(f64, f64)> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let all: Vec<usize> = (0..ps.len()).collect();
    let o = mean(ps, &all)?;
    let o1 = mean(ps, subset)?;
    let alpha = subset.iter().map(|&i| ps.weight(i)).sum::<f64>() / ps.total_weight();
    let lhs = o1.dist(&o);
    let rhs = (((1.0 - alpha).max(0.0)) / alpha).sqrt() * variance(ps, &all)?.sqrt();
    assert!(lhs <= rhs + 1e-9, "mean-shift bound violated: {lhs} > {rhs}");
    Ok((lhs, rhs))
}

/// An affine flat: an origin plus an orthonormal basis of directions.
#[derive(Debug, Clone)]
pub struct Flat {
    origin: Point,
    basis: Vec<Vec<f64>>,
}

impl Flat {
    pub fn origin(&self) -> &Point {
        &self.origin
    }

    /// Number of basis directions (the flat's dimension).
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Coefficients of the orthogonal projection of `p` in the basis.
    pub fn to_local(&self, p: &Point) -> Vec<f64> {
        let diff: Vec<f64> = p
            .coords()
            .iter()
            .zip(self.origin.coords())
            .map(|(a, b)| a - b)
            .collect();
        self.basis.iter().map(|b| dot(&diff, b)).collect()
    }

    pub fn from_local(&self, local: &[f64]) -> Point {
        let mut coords = self.origin.coords().to_vec();
        for (coef, b) in local.iter().zip(&self.basis) {
            for (c, bv) in coords.iter_mut().zip(b) {
                *c += coef * bv;
            }
        }
        Point { coords }
    }

    /// Same span, re-anchored at `origin` (which must lie in the flat).
    fn rebased(&self, origin: Point) -> Flat {
        Flat { origin, basis: self.basis.clone() }
    }
}

/// Orthogonal projection of `p` onto `flat`.
pub fn project(flat: &Flat, p: &Point) -> Point {
    flat.from_local(&flat.to_local(p))
}

/// Gram-Schmidt span of `points`, dropping directions whose residual is below
/// `1e-9` relative to the largest difference norm. Coincident points yield a
/// lower-dimensional flat.
pub fn affine_span(points: &[Point]) -> Result<Flat> {
    let origin = points.first().ok_or(Error::EmptySubset)?.clone();
    let mut scale: f64 = 0.0;
    let diffs: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| {
            let d: Vec<f64> = p
                .coords()
                .iter()
                .zip(origin.coords())
                .map(|(a, b)| a - b)
                .collect();
            scale = scale.max(norm(&d));
            d
        })
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut d in diffs {
        for b in &basis {
            let c = dot(&d, b);
            for (dv, bv) in d.iter_mut().zip(b) {
                *dv -= c * bv;
            }
        }
        let n = norm(&d);
        if n > RANK_TOL * scale.max(1e-300) {
            for dv in d.iter_mut() {
                *dv /= n;
            }
            basis.push(d);
        }
    }
    Ok(Flat { origin, basis })
}

/// A uniform mesh inside a ball, restricted to an affine flat. The mesh is
/// axis-aligned in the flat's basis coordinates and anchored at the ball
/// center, so the center itself is always a mesh point.
#[derive(Debug, Clone)]
pub struct GridSpec {
    center: Point,
    radius: f64,
    spacing: f64,
    flat: Flat,
}

impl GridSpec {
    pub fn new(center: Point, radius: f64, spacing: f64, flat: Flat) -> Result<Self> {
        if radius < 0.0 || !radius.is_finite() {
            return Err(Error::InvalidParameter("grid radius must be >= 0".into()));
        }
        if radius > 0.0 && (spacing <= 0.0 || spacing > 2.0 * radius) {
            return Err(Error::InvalidParameter(
                "grid spacing must be in (0, 2*radius]".into(),
            ));
        }
        Ok(Self { center, radius, spacing, flat })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn flat(&self) -> &Flat {
        &self.flat
    }

    /// All mesh points with `||p - center|| <= radius * (1 + 1e-12)`.
    pub fn enumerate(&self) -> Vec<Point> {
        let dim = self.flat.dim();
        if self.radius == 0.0 || dim == 0 {
            return vec![self.center.clone()];
        }
        let limit = self.radius * (1.0 + BALL_SLACK);
        let m = (limit / self.spacing).floor() as i64;
        let mut out = Vec::new();
        let mut idx = vec![-m; dim];
        'outer: loop {
            let local: Vec<f64> = idx.iter().map(|&i| i as f64 * self.spacing).collect();
            if dot(&local, &local).sqrt() <= limit {
                out.push(self.flat.from_local(&local));
            }
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] <= m {
                    continue 'outer;
                }
                idx[d] = -m;
            }
            break;
        }
        out
    }

    /// The mesh point obtained by clamping `p` into the ball and rounding each
    /// local coordinate toward the anchor. The result is always a member of
    /// [`GridSpec::enumerate`], and for `p` inside the ball it is within
    /// `spacing * sqrt(dim)` of the projection of `p`.
    pub fn snap_inside(&self, p: &Point) -> Point {
        let dim = self.flat.dim();
        if self.radius == 0.0 || dim == 0 {
            return self.center.clone();
        }
        let mut local = self.flat.to_local(p);
        let n = dot(&local, &local).sqrt();
        if n > self.radius {
            let f = self.radius / n;
            for v in local.iter_mut() {
                *v *= f;
            }
        }
        for v in local.iter_mut() {
            *v = (*v / self.spacing).trunc() * self.spacing;
        }
        self.flat.from_local(&local)
    }

    /// Number of lattice cells along one axis; `enumerate` visits at most
    /// `(2*cells_per_axis + 1)^dim` candidates.
    pub fn cells_per_axis(&self) -> u64 {
        if self.radius == 0.0 || self.flat.dim() == 0 {
            0
        } else {
            (self.radius * (1.0 + BALL_SLACK) / self.spacing).floor() as u64
        }
    }
}

fn dedup_points(points: Vec<Point>) -> Vec<Point> {
    let mut seen = std::collections::HashSet::new();
    points.into_iter().filter(|p| seen.insert(p.bits())).collect()
}

fn max_pairwise(vertices: &[&Point]) -> f64 {
    let mut r: f64 = 0.0;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            r = r.max(a.dist(b));
        }
    }
    r
}

/// Grid specs for a simplex and all of its nonempty sub-simplices.
///
/// For each nonempty vertex subset `S` the mesh lives in the span of `S`,
/// inside the ball anchored at the first vertex of `S` with radius equal to
/// the largest pairwise vertex distance in `S`, with spacing
/// `eps_S * r / (4 * |S|)`. The full vertex set uses `eps_S = eps`; proper
/// subsets use `eps_S = eps / 16`, which is the reduction step that stands in
/// for guessing the set of negligible parts.
pub fn simplex_grid_specs(vertices: &[Point], eps: f64) -> Result<Vec<GridSpec>> {
    if vertices.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter("eps must be in (0, 1]".into()));
    }
    let j = vertices.len();
    let mut specs = Vec::new();
    for mask in 1u64..(1u64 << j) {
        let sub: Vec<&Point> = (0..j).filter(|l| mask >> l & 1 == 1).map(|l| &vertices[l]).collect();
        let js = sub.len();
        let eps_s = if js == j { eps } else { eps / 16.0 };
        let anchor = sub[0].clone();
        let radius = max_pairwise(&sub);
        let owned: Vec<Point> = sub.iter().map(|p| (*p).clone()).collect();
        let flat = affine_span(&owned)?;
        let spacing = if radius > 0.0 { eps_s * radius / (4.0 * js as f64) } else { 1.0 };
        specs.push(GridSpec::new(anchor.clone(), radius, spacing, flat.rebased(anchor))?);
    }
    Ok(specs)
}

/// Enumerated, deduplicated grid points of [`simplex_grid_specs`].
pub fn simplex_grid(vertices: &[Point], eps: f64) -> Result<Vec<Point>> {
    let specs = simplex_grid_specs(vertices, eps)?;
    let mut out = Vec::new();
    for s in &specs {
        out.extend(s.enumerate());
    }
    Ok(dedup_points(out))
}

/// Ball radius factor `1 + (1 + 2*eps) / sqrt(3 - 12*eps)` of the weaker
/// (median) construction; real only for `eps < 1/5`.
pub fn weaker_radius_factor(eps: f64) -> f64 {
    1.0 + (1.0 + 2.0 * eps) / (3.0 - 12.0 * eps).sqrt()
}

/// Grid specs of the weaker (median) construction: in the flat spanned by
/// `centers`, one type-1 ball per center with radius `factor * L` and spacing
/// `(eps / sqrt(j)) * L`, and one type-2 ball per ordered center pair with
/// radius `factor * (||o_l - o_l'|| + L)` and spacing
/// `(1 - eps) * eps / (6 j sqrt(j)) * (||o_l - o_l'|| + L)`.
pub fn weaker_simplex_grid_specs(centers: &[Point], l_bound: f64, eps: f64) -> Result<Vec<GridSpec>> {
    if centers.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !(eps > 0.0 && eps < 0.2) {
        return Err(Error::InvalidParameter("eps must be in (0, 1/5)".into()));
    }
    if l_bound < 0.0 || !l_bound.is_finite() {
        return Err(Error::InvalidParameter("L must be finite and >= 0".into()));
    }
    let j = centers.len() as f64;
    let factor = weaker_radius_factor(eps);
    let flat = affine_span(centers)?;
    let mut specs = Vec::new();
    for c in centers {
        let radius = factor * l_bound;
        let spacing = if radius > 0.0 { (eps / j.sqrt()) * l_bound } else { 1.0 };
        specs.push(GridSpec::new(c.clone(), radius, spacing, flat.rebased(c.clone()))?);
    }
    for (l, c) in centers.iter().enumerate() {
        for (l2, c2) in centers.iter().enumerate() {
            if l == l2 {
                continue;
            }
            let base = c.dist(c2) + l_bound;
            let radius = factor * base;
            let spacing = if radius > 0.0 {
                (1.0 - eps) * eps / (6.0 * j * j.sqrt()) * base
            } else {
                1.0
            };
            specs.push(GridSpec::new(c.clone(), radius, spacing, flat.rebased(c.clone()))?);
        }
    }
    Ok(specs)
}

/// Enumerated, deduplicated grid points of [`weaker_simplex_grid_specs`].
pub fn weaker_simplex_grid(centers: &[Point], l_bound: f64, eps: f64) -> Result<Vec<Point>> {
    let specs = weaker_simplex_grid_specs(centers, l_bound, eps)?;
    let mut out = Vec::new();
    for s in &specs {
        out.extend(s.enumerate());
    }
    Ok(dedup_points(out))
}
