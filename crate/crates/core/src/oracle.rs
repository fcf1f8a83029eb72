//! Brute-force exact solvers for desk-scale verification. The only virtue
//! here is obviousness: enumerate everything, filter by the independent
//! validator, fit centers per cluster, keep the minimum.

use crate::error::{Error, Result};
use crate::geometry::{cost, mean, Objective, Point, PointSet};
use crate::partitions::{
    probabilistic_median_cost, semi_supervised_cost, uncertain_means_cost, validate_assignment,
    ConstraintSpec, FaultTolerance, Instance,
};
use crate::sampling::weiszfeld_median;

const OPTIMUM_MAX_N: usize = 12;
const PARTITION_MAX_N: usize = 10;
const ENUM_CAP: u128 = 4_000_000;

/// An exact optimum with a witness that reproduces it.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub cost: f64,
    pub memberships: Vec<Vec<usize>>,
    pub centers: Vec<Point>,
}

fn check_size(n: usize, k: usize, max_n: usize) -> Result<()> {
    if n > max_n {
        return Err(Error::TooLarge(format!("n = {n} exceeds oracle limit {max_n}")));
    }
    let combos = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if combos > ENUM_CAP {
        return Err(Error::TooLarge(format!("k^n = {combos} labelings")));
    }
    Ok(())
}

fn for_each_labeling(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut labels = vec![0usize; n];
    loop {
        f(&labels);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn fit_centers(ps: &PointSet, labels: &[usize], k: usize, objective: Objective) -> Result<Vec<Point>> {
    let mut centers = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<usize> = (0..ps.len()).filter(|&i| labels[i] == j).collect();
        if members.is_empty() {
            centers.push(ps.point(0).clone()); // unused center, cost-neutral
            continue;
        }
        centers.push(match objective {
            Objective::Means => mean(ps, &members)?,
            Objective::Median => weiszfeld_median(ps, &members, 1e-10, 10_000)?,
        });
    }
    Ok(centers)
}

/// All ways to choose per-point center subsets of the given sizes.
fn for_each_subset_structure(n: usize, k: usize, sizes: &[usize], mut f: impl FnMut(&[Vec<usize>])) {
    fn subsets(k: usize, size: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, k: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == size {
                out.push(cur.clone());
                return;
            }
            for j in start..k {
                cur.push(j);
                rec(j + 1, k, size, cur, out);
                cur.pop();
            }
        }
        rec(0, k, size, &mut cur, &mut out);
        out
    }
    let choices: Vec<Vec<Vec<usize>>> = sizes.iter().map(|&s| subsets(k, s)).collect();
    let mut idx = vec![0usize; n];
    loop {
        let structure: Vec<Vec<usize>> = (0..n).map(|i| choices[i][idx[i]].clone()).collect();
        f(&structure);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            idx[i] += 1;
            if idx[i] < choices[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustive constrained optimum with free centers.
pub fn brute_force_optimum(
    data: &Instance,
    k: usize,
    constraint: &ConstraintSpec,
    objective: Objective,
) -> Result<OracleResult> {
    constraint.check_applicable(data, k)?;
    let n = data.len();
    check_size(n, k, OPTIMUM_MAX_N)?;
    let mut best: Option<OracleResult> = None;
    match constraint {
        ConstraintSpec::FaultTolerant { l } => {
            let ps = data.as_points()?;
            let sizes = match l {
                FaultTolerance::Uniform(v) => vec![*v; n],
                FaultTolerance::PerPoint(vs) => vs.clone(),
            };
            let mut res: Result<()> = Ok(());
            for_each_subset_structure(n, k, &sizes, |structure| {
                if res.is_err() {
                    return;
                }
                // Optimal center for a fixed structure is the per-cluster fit
                // over the points it serves.
                let mut centers = Vec::with_capacity(k);
                for j in 0..k {
                    let members: Vec<usize> =
                        (0..n).filter(|&i| structure[i].contains(&j)).collect();
                    if members.is_empty() {
                        centers.push(ps.point(0).clone());
                        continue;
                    }
                    let c = match objective {
                        Objective::Means => mean(ps, &members),
                        Objective::Median => weiszfeld_median(ps, &members, 1e-10, 10_000),
                    };
                    match c {
                        Ok(c) => centers.push(c),
                        Err(e) => {
                            res = Err(e);
                            return;
                        }
                    }
                }
                let c = crate::partitions::fault_tolerant_cost(ps, structure, &centers, objective)
                    .expect("structure is well formed");
                if best.as_ref().is_none_or(|b| c < b.cost) {
                    best = Some(OracleResult {
                        cost: c,
                        memberships: structure.to_vec(),
                        centers,
                    });
                }
            });
            res?;
        }
        ConstraintSpec::ProbabilisticMedian | ConstraintSpec::UncertainMeans => {
            let nodes = data.as_uncertain()?;
            let mut res: Result<()> = Ok(());
            for_each_labeling(n, k, |labels| {
                if res.is_err() {
                    return;
                }
                // Flatten each cluster's realizations into a weighted set.
                let mut centers = Vec::with_capacity(k);
                for j in 0..k {
                    let mut pts = Vec::new();
                    let mut ws = Vec::new();
                    for (i, node) in nodes.nodes().iter().enumerate() {
                        if labels[i] != j {
                            continue;
                        }
                        for (p, t) in &node.realizations {
                            if *t > 0.0 {
                                pts.push(p.clone());
                                ws.push(*t);
                            }
                        }
                    }
                    if pts.is_empty() {
                        centers.push(nodes.node(0).realizations[0].0.clone());
                        continue;
                    }
                    let cluster = PointSet::new(pts).and_then(|s| s.with_weights(ws));
                    let c = cluster.and_then(|s| {
                        let all: Vec<usize> = (0..s.len()).collect();
                        match constraint {
                            ConstraintSpec::ProbabilisticMedian => {
                                weiszfeld_median(&s, &all, 1e-10, 10_000)
                            }
                            _ => mean(&s, &all),
                        }
                    });
                    match c {
                        Ok(c) => centers.push(c),
                        Err(e) => {
                            res = Err(e);
                            return;
                        }
                    }
                }
                let c = match constraint {
                    ConstraintSpec::ProbabilisticMedian => {
                        probabilistic_median_cost(nodes, labels, &centers)
                    }
                    _ => uncertain_means_cost(nodes, labels, &centers),
                }
                .expect("labels are well formed");
                if best.as_ref().is_none_or(|b| c < b.cost) {
                    best = Some(OracleResult {
                        cost: c,
                        memberships: labels.iter().map(|&l| vec![l]).collect(),
                        centers,
                    });
                }
            });
            res?;
        }
        _ => {
            let ps = data.as_points()?;
            let mut res: Result<()> = Ok(());
            for_each_labeling(n, k, |labels| {
                if res.is_err() {
                    return;
                }
                let memberships: Vec<Vec<usize>> = labels.iter().map(|&l| vec![l]).collect();
                if validate_assignment(data, constraint, &memberships, k).is_err() {
                    return;
                }
                let centers = match fit_centers(ps, labels, k, objective) {
                    Ok(c) => c,
                    Err(e) => {
                        res = Err(e);
                        return;
                    }
                };
                let c = match constraint {
                    ConstraintSpec::SemiSupervised { alpha, e1, e2 } => {
                        semi_supervised_cost(ps, labels, &centers, *alpha, *e1, *e2)
                    }
                    _ => cost(ps, labels, &centers, objective),
                }
                .expect("labels are well formed");
                if best.as_ref().is_none_or(|b| c < b.cost) {
                    best = Some(OracleResult { cost: c, memberships, centers });
                }
            });
            res?;
        }
    }
    best.ok_or(Error::AllTuplesInfeasible)
}

/// Exhaustive constrained partition with fixed centers.
pub fn brute_force_partition(
    data: &Instance,
    centers: &[Point],
    constraint: &ConstraintSpec,
    objective: Objective,
) -> Result<OracleResult> {
    let k = centers.len();
    constraint.check_applicable(data, k)?;
    let n = data.len();
    check_size(n, k, PARTITION_MAX_N)?;
    let mut best: Option<OracleResult> = None;
    match constraint {
        ConstraintSpec::FaultTolerant { l } => {
            let ps = data.as_points()?;
            let sizes = match l {
                FaultTolerance::Uniform(v) => vec![*v; n],
                FaultTolerance::PerPoint(vs) => vs.clone(),
            };
            for_each_subset_structure(n, k, &sizes, |structure| {
                let c = crate::partitions::fault_tolerant_cost(ps, structure, centers, objective)
                    .expect("structure is well formed");
                if best.as_ref().is_none_or(|b| c < b.cost) {
                    best = Some(OracleResult {
                        cost: c,
                        memberships: structure.to_vec(),
                        centers: centers.to_vec(),
                    });
                }
            });
        }
        _ => {
            for_each_labeling(n, k, |labels| {
                let memberships: Vec<Vec<usize>> = labels.iter().map(|&l| vec![l]).collect();
                if validate_assignment(data, constraint, &memberships, k).is_err() {
                    return;
                }
                let c = match constraint {
                    ConstraintSpec::SemiSupervised { alpha, e1, e2 } => semi_supervised_cost(
                        data.as_points().expect("validated"),
                        labels,
                        centers,
                        *alpha,
                        *e1,
                        *e2,
                    ),
                    ConstraintSpec::ProbabilisticMedian => {
                        probabilistic_median_cost(data.as_uncertain().expect("validated"), labels, centers)
                    }
                    ConstraintSpec::UncertainMeans => {
                        uncertain_means_cost(data.as_uncertain().expect("validated"), labels, centers)
                    }
                    _ => cost(data.as_points().expect("validated"), labels, centers, objective),
                }
                .expect("labels are well formed");
                if best.as_ref().is_none_or(|b| c < b.cost) {
                    best = Some(OracleResult { cost: c, memberships, centers: centers.to_vec() });
                }
            });
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Ok(OracleResult {
            cost: f64::INFINITY,
            memberships: Vec::new(),
            centers: centers.to_vec(),
        }),
    }
}
