//! Seeded sampling, subset-mean enumeration, the Weiszfeld 1-median oracle,
//! and a Monte Carlo checker for the sample-mean concentration bound.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{mean, variance, Point, PointSet};

/// A reproducible stream of randomness: identical `(seed, stream)` pairs
/// yield identical draws, and child streams are derived deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Deterministically derived child stream.
    pub fn child(&self, salt: u64) -> Self {
        Self { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(salt)) }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Faithful,
    Practical,
}

/// Sample-size parameters for candidate generation.
#[derive(Debug, Clone, Copy)]
pub struct SampleParams {
    pub s: usize,
    pub subset_cap: usize,
    pub preset: Preset,
}

impl SampleParams {
    pub fn practical() -> Self {
        Self { s: 8, subset_cap: 65_535, preset: Preset::Practical }
    }

    pub fn practical_with(s: usize, subset_cap: usize) -> Self {
        Self { s, subset_cap, preset: Preset::Practical }
    }

    /// The provably sufficient means-track sample size. Refuses when `2^s` exceeds
    /// the subset cap, which it does for every realistic `(k, eps)`.
    pub fn faithful_means(k: usize, eps: f64) -> Result<Self> {
        Self::faithful_from(faithful_sample_size_means(k, eps))
    }

    /// The provably sufficient median-track sample size, with the same refusal rule.
    pub fn faithful_median(k: usize, eps: f64) -> Result<Self> {
        Self::faithful_from(faithful_sample_size_median(k, eps))
    }

    fn faithful_from(s: f64) -> Result<Self> {
        let cap = 65_535usize;
        if !s.is_finite() || s > 62.0 || 2f64.powf(s) > cap as f64 {
            return Err(Error::FaithfulInfeasible { s });
        }
        Ok(Self { s: s.ceil().max(1.0) as usize, subset_cap: cap, preset: Preset::Faithful })
    }
}

/// `s = (8 k^3 / eps^9) * ln(k^2 / eps^6)`.
pub fn faithful_sample_size_means(k: usize, eps: f64) -> f64 {
    let k = k as f64;
    8.0 * k.powi(3) / eps.powi(9) * (k * k / eps.powi(6)).ln()
}

/// `s = (k^3 / eps^11) * ln(k^2 / eps^6)`.
pub fn faithful_sample_size_median(k: usize, eps: f64) -> f64 {
    let k = k as f64;
    k.powi(3) / eps.powi(11) * (k * k / eps.powi(6)).ln()
}

/// Uniform sample of indices from `0..universe`, with replacement.
pub fn sample_uniform(universe: usize, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if universe == 0 {
        return Err(Error::EmptySubset);
    }
    if size == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok((0..size).map(|_| rng.random_range(0..universe)).collect())
}

/// Weighted sample of indices (with replacement), probability proportional
/// to `weights`.
pub fn sample_weighted(weights: &[f64], size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::EmptySubset);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("weights sum to zero".into()));
    }
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let mut u = rng.random_range(0.0..total);
        let mut pick = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = i;
                break;
            }
        }
        out.push(pick);
    }
    Ok(out)
}

/// Means of subsets of `sample`: all `2^s - 1` nonempty subsets when that
/// count fits under `cap`, otherwise all singletons plus `cap - s` random
/// subsets. Duplicates are allowed.
pub fn subset_means(sample: &[Point], cap: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let s = sample.len();
    if s == 0 {
        return Vec::new();
    }
    let dim = sample[0].dim();
    let mean_of = |members: &[usize]| -> Point {
        let mut acc = vec![0.0; dim];
        for &i in members {
            for (a, c) in acc.iter_mut().zip(sample[i].coords()) {
                *a += c;
            }
        }
        let n = members.len() as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
        Point::new(acc).expect("finite mean")
    };
    if s < 63 && (1u64 << s) - 1 <= cap as u64 {
        (1u64..(1u64 << s))
            .map(|mask| {
                let members: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
                mean_of(&members)
            })
            .collect()
    } else {
        let mut out: Vec<Point> = sample.to_vec();
        while out.len() < cap {
            let members: Vec<usize> = (0..s).filter(|_| rng.random_bool(0.5)).collect();
            if members.is_empty() {
                continue;
            }
            out.push(mean_of(&members));
        }
        out
    }
}

/// Geometric median of `subset` by Weiszfeld iteration from the weighted
/// mean, with the subgradient test at anchor points. The step tolerance is
/// relative to the subset's spread, and the best iterate seen is returned.
pub fn weiszfeld_median(
    ps: &PointSet,
    subset: &[usize],
    tol: f64,
    max_iter: usize,
) -> Result<Point> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be > 0".into()));
    }
    let dim = ps.dim();
    let start = mean(ps, subset)?;
    let scale = subset
        .iter()
        .map(|&i| ps.point(i).dist(&start))
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Ok(start); // all points coincide
    }
    let tol_eff = tol * scale;
    let obj = |y: &Point| -> f64 {
        subset.iter().map(|&i| ps.weight(i) * ps.point(i).dist(y)).sum()
    };
    let mut y = start;
    let mut best = y.clone();
    let mut best_obj = obj(&y);
    for _ in 0..max_iter {
        // Split the subset into points at y (anchors) and the rest.
        let mut anchor_w = 0.0;
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        let mut grad = vec![0.0; dim];
        for &i in subset {
            let p = ps.point(i);
            let w = ps.weight(i);
            let d = p.dist(&y);
            if d <= tol_eff * 1e-3 {
                anchor_w += w;
                continue;
            }
            den += w / d;
            for (k, c) in p.coords().iter().enumerate() {
                num[k] += w * c / d;
                grad[k] += w * (c - y.coords()[k]) / d;
            }
        }
        let r = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if anchor_w > 0.0 && r <= anchor_w {
            // y sits at a data point that is optimal.
            return Ok(y);
        }
        if den == 0.0 {
            break;
        }
        let t: Vec<f64> = num.iter().map(|n| n / den).collect();
        let next = if anchor_w > 0.0 {
            // Vardi-Zhang step away from a non-optimal anchor.
            let lam = (1.0 - anchor_w / r).max(0.0);
            let coords: Vec<f64> = t
                .iter()
                .zip(y.coords())
                .map(|(tv, yv)| lam * tv + (1.0 - lam) * yv)
                .collect();
            Point::new(coords)?
        } else {
            Point::new(t)?
        };
        let next_obj = obj(&next);
        debug_assert!(
            next_obj <= best_obj + 1e-9 * (1.0 + best_obj),
            "Weiszfeld objective increased"
        );
        if next_obj < best_obj {
            best_obj = next_obj;
            best = next.clone();
        }
        let step = next.dist(&y);
        y = next;
        if step < tol_eff {
            break;
        }
    }
    Ok(best)
}

/// Monte Carlo check of the sample-mean bound: fraction of `trials` in which
/// a random size-`t` subset `T` of `S` violates
/// `||m(T) - m(S)||^2 < variance(S) / (eta * t)`.
pub fn inaba_check(
    ps: &PointSet,
    t: usize,
    eta: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = ps.len();
    if t == 0 || t > n {
        return Err(Error::InvalidParameter("t must be in 1..=n".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter("eta must be in (0, 1]".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let m_s = mean(ps, &all)?;
    let bound = variance(ps, &all)? / (eta * t as f64);
    let mut violations = 0usize;
    for _ in 0..trials {
        let subset: Vec<usize> = index::sample(rng, n, t).into_vec();
        let m_t = mean(ps, &subset)?;
        let lhs = m_t.dist_sq(&m_s);
        if lhs >= bound && !(lhs == 0.0 && bound == 0.0) {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}
