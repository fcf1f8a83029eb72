//! Shared instance generators for the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use cckit::geometry::{Point, PointSet};
use cckit::partitions::{UncertainNode, UncertainSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> PointSet {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect()).collect();
    PointSet::from_rows(rows).expect("nonempty")
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0f64 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `k` Gaussian blobs of `n` total points; returns the set and the true
/// blob centers (blob of point `i` is `i % k`).
pub fn blobs(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    k: usize,
    sep: f64,
    spread: f64,
) -> (PointSet, Vec<Point>) {
    let centers: Vec<Point> = (0..k)
        .map(|j| {
            Point::new((0..d).map(|_| rng.random_range(-1.0..1.0) * sep + j as f64 * sep).collect())
                .unwrap()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = &centers[i % k];
            (0..d).map(|t| c.coords()[t] + spread * gaussian(rng)).collect()
        })
        .collect();
    (PointSet::from_rows(rows).unwrap(), centers)
}

pub fn random_centers(rng: &mut ChaCha8Rng, k: usize, d: usize, lo: f64, hi: f64) -> Vec<Point> {
    (0..k)
        .map(|_| Point::new((0..d).map(|_| rng.random_range(lo..hi)).collect()).unwrap())
        .collect()
}

/// Random uncertain nodes with up to `max_real` realizations each.
pub fn random_nodes(rng: &mut ChaCha8Rng, n: usize, d: usize, max_real: usize) -> UncertainSet {
    let nodes = (0..n)
        .map(|_| {
            let h = rng.random_range(1..=max_real);
            let mut probs: Vec<f64> = (0..h).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = probs.iter().sum::<f64>() * rng.random_range(1.0..1.3);
            for p in probs.iter_mut() {
                *p /= total;
            }
            UncertainNode {
                realizations: probs
                    .into_iter()
                    .map(|t| {
                        let coords = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                        (Point::new(coords).unwrap(), t)
                    })
                    .collect(),
            }
        })
        .collect();
    UncertainSet::new(nodes).unwrap()
}

/// Relative gap |a - b| / (1 + max(|a|, |b|)).
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}
