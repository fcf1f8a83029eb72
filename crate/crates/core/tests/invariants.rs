//! Property and randomized invariants that cut across modules.

mod common;

use cckit::flow::{has_negative_residual_cycle, hungarian, min_cost_circulation, CostMatrix, FlowNetwork};
use cckit::geometry::{
    affine_span, cost, mean, mean_shift_bound_check, project, simplex_grid, variance, Objective,
    Point, PointSet,
};
use cckit::oracle::brute_force_partition;
use cckit::partitions::{
    partition, recompute_objective, validate_assignment, ConstraintSpec, Instance,
};
use cckit::pne::{
    estimate_upper_bound, objective_search_set, solve, solve_with_guesses, SolveParams,
};
use cckit::sampling::{subset_means, weiszfeld_median, RandomSource, SampleParams};
use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(move |d| {
        proptest::collection::vec(
            proptest::collection::vec(-50.0..50.0f64, d),
            1..=max_n,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_decomposition_identity(rows in arb_points(24, 6), probe in proptest::collection::vec(-50.0..50.0f64, 1..=6)) {
        let ps = PointSet::from_rows(rows).unwrap();
        let d = ps.dim();
        let probe: Vec<f64> = probe.into_iter().cycle().take(d).collect();
        let o_tilde = Point::new(probe).unwrap();
        let all: Vec<usize> = (0..ps.len()).collect();
        let o = mean(&ps, &all).unwrap();
        let lhs: f64 = (0..ps.len()).map(|i| ps.point(i).dist_sq(&o_tilde)).sum();
        let rhs: f64 = (0..ps.len()).map(|i| ps.point(i).dist_sq(&o)).sum::<f64>()
            + ps.len() as f64 * o.dist_sq(&o_tilde);
        prop_assert!(rel_gap(lhs, rhs) < 1e-6);
    }

    #[test]
    fn projection_is_idempotent_and_distance_minimizing(
        rows in arb_points(6, 5),
        probe in proptest::collection::vec(-50.0..50.0f64, 1..=5),
        coeffs in proptest::collection::vec(-2.0..2.0f64, 6),
    ) {
        let ps = PointSet::from_rows(rows).unwrap();
        let flat = affine_span(ps.points()).unwrap();
        let d = ps.dim();
        let p = Point::new(probe.into_iter().cycle().take(d).collect()).unwrap();
        let proj = project(&flat, &p);
        let again = project(&flat, &proj);
        prop_assert!(proj.dist(&again) < 1e-9);
        // No flat point (random local coordinates) beats the projection.
        let local: Vec<f64> = coeffs.into_iter().take(flat.dim()).collect();
        let q = flat.from_local(&local);
        prop_assert!(p.dist(&proj) <= p.dist(&q) + 1e-9);
    }

    #[test]
    fn simplex_grid_size_and_membership(rows in arb_points(4, 4), eps in 0.3..1.0f64) {
        let verts = PointSet::from_rows(rows).unwrap();
        let j = verts.len();
        let grid = simplex_grid(verts.points(), eps).unwrap();
        // Size bound with a fixed implementation constant.
        let bound = 4.0 * (8.0 * j as f64 / eps).powi(j as i32);
        prop_assert!((grid.len() as f64) <= bound, "grid {} > bound {}", grid.len(), bound);
        // Every point lies in the affine span and inside the bounding ball.
        let flat = affine_span(verts.points()).unwrap();
        let mut r: f64 = 0.0;
        for a in verts.points() {
            for b in verts.points() {
                r = r.max(a.dist(b));
            }
        }
        for g in &grid {
            prop_assert!(g.dist(&project(&flat, g)) < 1e-9);
            prop_assert!(verts.points().iter().any(|v| v.dist(g) <= r * (1.0 + 1e-9)));
        }
    }

    #[test]
    fn hungarian_matches_brute_force(rows in 1..=5usize, extra in 0..=2usize, seed in any::<u64>()) {
        let cols = rows + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..9.0)).collect();
        let m = CostMatrix::new(rows, cols, data).unwrap();
        let (assign, got) = hungarian(&m);
        // Brute force over all injections.
        fn rec(m: &CostMatrix, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == m.rows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..m.cols() {
                if used[c] {
                    continue;
                }
                used[c] = true;
                best = best.min(m.get(row, c) + rec(m, row + 1, used));
                used[c] = false;
            }
            best
        }
        let want = rec(&m, 0, &mut vec![false; cols]);
        prop_assert!((got - want).abs() < 1e-9);
        // The returned assignment reproduces the returned cost.
        let re: f64 = assign.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum();
        prop_assert!((re - got).abs() < 1e-12);
    }
}

#[test]
fn mean_shift_bound_holds_on_randomized_suite() {
    // 1000 random (Q, Q1) pairs; the check asserts the bound internally.
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=5);
        let ps = uniform_points(&mut rng, n, d, -10.0, 10.0);
        let m = rng.random_range(1..=n);
        let subset: Vec<usize> = (0..m).collect();
        let (lhs, rhs) = mean_shift_bound_check(&ps, &subset).unwrap();
        assert!(lhs <= rhs + 1e-9, "seed {seed}");
    }
}

#[test]
fn subset_means_recompute() {
    let mut rng = RandomSource::new(8).rng();
    let pts: Vec<Point> = (0..6)
        .map(|_| Point::new((0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap())
        .collect();
    let means = subset_means(&pts, 1 << 12, &mut rng);
    assert_eq!(means.len(), 63);
    // Spot-verify each mean against its generating mask.
    for (idx, m) in means.iter().enumerate() {
        let mask = idx as u64 + 1;
        let members: Vec<&Point> = (0..6).filter(|i| mask >> i & 1 == 1).map(|i| &pts[i]).collect();
        let mut acc = vec![0.0; 3];
        for p in &members {
            for (a, c) in acc.iter_mut().zip(p.coords()) {
                *a += c;
            }
        }
        for a in acc.iter_mut() {
            *a /= members.len() as f64;
        }
        assert!(m.dist(&Point::new(acc).unwrap()) < 1e-12);
    }
}

#[test]
fn circulation_beats_explicit_feasible_flows() {
    // Random r-gather style gadgets; compare against hand-built feasible
    // assignments.
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..=9);
        let k = rng.random_range(2..=3);
        let r = rng.random_range(1..=n / k);
        let costs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.random_range(0.0..50.0)).collect()).collect();
        let s = 0;
        let t = n + k + 1;
        let mut net = FlowNetwork::new(n + k + 2);
        net.source = Some(s);
        net.sink = Some(t);
        for i in 0..n {
            net.add_edge(s, 1 + i, 1, 1, 0.0);
            for j in 0..k {
                net.add_edge(1 + i, 1 + n + j, 0, 1, costs[i][j]);
            }
        }
        for j in 0..k {
            net.add_edge(1 + n + j, t, r as i64, n as i64, 0.0);
        }
        let sol = min_cost_circulation(&net).unwrap();
        assert!(sol.feasible);
        assert!(!has_negative_residual_cycle(&net, &sol));
        // Any valid assignment with cluster sizes >= r costs at least as much.
        for _ in 0..20 {
            let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
            for i in 0..n {
                let j = rng.random_range(0..n);
                labels.swap(i, j);
            }
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            if sizes.iter().any(|&sz| sz < r) {
                continue;
            }
            let explicit: f64 = labels.iter().enumerate().map(|(i, &j)| costs[i][j]).sum();
            assert!(sol.total_cost <= explicit + 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn weiszfeld_objective_never_increases() {
    // The iteration asserts monotonicity internally (debug builds); here we
    // check the endpoint beats the start for a spread of instances.
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=40);
        let d = rng.random_range(1..=4);
        let ps = uniform_points(&mut rng, n, d, -5.0, 5.0);
        let all: Vec<usize> = (0..n).collect();
        let start = mean(&ps, &all).unwrap();
        let med = weiszfeld_median(&ps, &all, 1e-9, 10_000).unwrap();
        let c = |y: &Point| all.iter().map(|&i| ps.point(i).dist(y)).sum::<f64>();
        assert!(c(&med) <= c(&start) + 1e-9);
    }
}

#[test]
fn partition_outcomes_recompute_and_validate() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..60 {
        let n = rng.random_range(4..=9);
        let k = rng.random_range(2..=3);
        let ps = uniform_points(&mut rng, n, 2, -4.0, 4.0);
        let colored = ps
            .clone()
            .with_colors((0..n).map(|i| (i % 3) as u32).collect())
            .unwrap();
        let centers = random_centers(&mut rng, k, 2, -4.0, 4.0);
        let cases: Vec<(Instance, ConstraintSpec)> = vec![
            (Instance::Points(ps.clone()), ConstraintSpec::Unconstrained),
            (Instance::Points(ps.clone()), ConstraintSpec::RGather { r: n / k }),
            (Instance::Points(ps.clone()), ConstraintSpec::RCapacity { r: n }),
            (Instance::Points(colored.clone()), ConstraintSpec::LDiversity { l: 2 }),
            (
                Instance::Points(ps.clone()),
                ConstraintSpec::FaultTolerant { l: cckit::partitions::FaultTolerance::Uniform(1.max(k - 1)) },
            ),
        ];
        for (data, spec) in cases {
            let out = partition(&data, &centers, &spec, Objective::Means).unwrap();
            if !out.feasible {
                continue;
            }
            validate_assignment(&data, &spec, &out.memberships, k).unwrap();
            let re = recompute_objective(&data, &out.memberships, &centers, &spec, Objective::Means)
                .unwrap();
            assert!(rel_gap(re, out.objective) < 1e-9);
        }
    }
}

#[test]
fn partition_solvers_match_oracle_smoke() {
    // A fast cross-section; the full 200-instance sweep lives in the
    // acceptance suite.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..25 {
        let n = rng.random_range(4..=8);
        let k = 2;
        let ps = uniform_points(&mut rng, n, 2, -4.0, 4.0);
        let centers = random_centers(&mut rng, k, 2, -4.0, 4.0);
        let data = Instance::Points(ps);
        for spec in [
            ConstraintSpec::Unconstrained,
            ConstraintSpec::RGather { r: n / k },
            ConstraintSpec::RCapacity { r: n.div_ceil(k) },
        ] {
            let got = partition(&data, &centers, &spec, Objective::Means).unwrap();
            let want = brute_force_partition(&data, &centers, &spec, Objective::Means).unwrap();
            if got.feasible {
                assert!(rel_gap(got.objective, want.cost) < 1e-9, "trial {trial} {spec:?}");
            } else {
                assert!(want.cost.is_infinite());
            }
        }
    }
}

#[test]
fn solve_cost_is_monotone_in_the_guess_ladder() {
    // Appending guesses to the ladder never worsens the selected tuple.
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let (ps, _) = blobs(&mut rng, 10, 2, 2, 3.0, 0.5);
        let data = Instance::Points(ps);
        let spec = ConstraintSpec::Unconstrained;
        let mut params = SolveParams::practical(2, 0.5);
        params.preset = SampleParams::practical_with(6, 65_535);
        params.beam_width = Some(10);
        let rng_src = RandomSource::new(seed);
        let ub = estimate_upper_bound(&data, 2, &spec, Objective::Means, params.lambda, params.restarts, &rng_src.child(0)).unwrap();
        let coarse = objective_search_set(ub.delta, ub.c, 1.0 - 1e-9);
        let mut fine = coarse.clone();
        for w in coarse.windows(2) {
            fine.push((w[0] + w[1]) / 2.0);
        }
        fine.sort_by(f64::total_cmp);
        let a = solve_with_guesses(&data, &spec, Objective::Means, &params, &coarse, ub.clone(), &rng_src).unwrap();
        let b = solve_with_guesses(&data, &spec, Objective::Means, &params, &fine, ub, &rng_src).unwrap();
        assert!(
            b.outcome.objective <= a.outcome.objective + 1e-12,
            "seed {seed}: {} > {}",
            b.outcome.objective,
            a.outcome.objective
        );
    }
}

#[test]
fn candidate_counts_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (ps, _) = blobs(&mut rng, 12, 2, 2, 3.0, 0.5);
    let data = Instance::Points(ps);
    let mut params = SolveParams::practical(2, 0.5);
    params.beam_width = Some(8);
    let out = solve(&data, &ConstraintSpec::Unconstrained, Objective::Means, &params, &RandomSource::new(4)).unwrap();
    assert_eq!(out.candidates_per_guess.len(), out.guesses.len());
    let total: usize = out.candidates_per_guess.iter().sum();
    // Dedup can only shrink the evaluated set.
    assert!(out.tuples_evaluated <= total);
    // Tree width bound: guesses * (children per node)^k.
    let bound = out.guesses.len() * 8usize.pow(2);
    assert!(total <= bound, "{total} > {bound}");
    // The selected outcome's objective survives independent recomputation.
    let re = recompute_objective(&data, &out.outcome.memberships, &out.centers, &ConstraintSpec::Unconstrained, Objective::Means).unwrap();
    assert!(rel_gap(re, out.outcome.objective) < 1e-9);
    assert_eq!(out.centers.len(), 2);
    // Unconstrained cost can also be checked by an exchange sweep: moving any
    // single point to another cluster cannot help.
    let labels: Vec<usize> = out.outcome.memberships.iter().map(|m| m[0]).collect();
    let ps = data.as_points().unwrap();
    for i in 0..ps.len() {
        for j in 0..2 {
            let mut alt = labels.clone();
            alt[i] = j;
            let alt_cost = cost(ps, &alt, &out.centers, Objective::Means).unwrap();
            assert!(out.outcome.objective <= alt_cost + 1e-9);
        }
    }
}

#[test]
fn well_separated_clusters_are_recovered_by_some_tuple() {
    // Two tight, well-separated clusters: some candidate tuple lands within
    // 0.1 of both true means in every coordinate.
    use cckit::pne::{build_tree_means, PneParams};
    let mut hits = 0usize;
    let seeds = 50u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let d = 5;
        let true_means: Vec<Point> = (0..2)
            .map(|j| Point::new(vec![j as f64; d]).unwrap())
            .collect();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = &true_means[i % 2];
                (0..d).map(|t| c.coords()[t] + 0.02 * gaussian(&mut rng)).collect()
            })
            .collect();
        let ps = PointSet::from_rows(rows).unwrap();
        let all: Vec<usize> = (0..40).collect();
        let params = PneParams {
            k: 2,
            eps: 0.5,
            delta_or_mu: variance(&ps, &all).unwrap().sqrt(),
            preset: SampleParams::practical(),
            max_tree_nodes: 100_000,
            beam_width: Some(24),
        };
        let tree = build_tree_means(&ps, &params, &RandomSource::new(seed)).unwrap();
        let close = |a: &Point, b: &Point| {
            a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= 0.1)
        };
        let found = tree.leaves().iter().any(|&leaf| {
            let tuple = tree.path_points(leaf);
            (close(&tuple[0], &true_means[0]) && close(&tuple[1], &true_means[1]))
                || (close(&tuple[0], &true_means[1]) && close(&tuple[1], &true_means[0]))
        });
        if found {
            hits += 1;
        }
    }
    assert!(hits * 10 >= seeds as usize * 9, "only {hits}/{seeds} seeds recovered the means");
}

#[test]
fn chromatic_with_distinct_colors_equals_unconstrained_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let (ps, _) = blobs(&mut rng, 10, 2, 2, 3.0, 0.5);
    let colored = ps.clone().with_colors((0..10).map(|i| i as u32).collect()).unwrap();
    let params = SolveParams::practical(2, 0.5);
    let rng_src = RandomSource::new(17);
    let plain = solve(
        &Instance::Points(ps),
        &ConstraintSpec::Unconstrained,
        Objective::Means,
        &params,
        &rng_src,
    )
    .unwrap();
    let chrom = solve(
        &Instance::Points(colored),
        &ConstraintSpec::Chromatic,
        Objective::Means,
        &params,
        &rng_src,
    )
    .unwrap();
    assert!(rel_gap(plain.outcome.objective, chrom.outcome.objective) < 1e-9);
    assert_eq!(plain.outcome.memberships, chrom.outcome.memberships);
}

#[test]
fn unconstrained_solve_tracks_the_oracle() {
    use cckit::oracle::brute_force_optimum;
    let mut within = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(6..=10);
        let sep = rng.random_range(1.0..4.0);
        let (ps, _) = blobs(&mut rng, n, 2, 2, sep, 0.7);
        let data = Instance::Points(ps);
        let params = SolveParams::practical(2, 0.5);
        let out = solve(&data, &ConstraintSpec::Unconstrained, Objective::Means, &params, &RandomSource::new(seed)).unwrap();
        let exact = brute_force_optimum(&data, 2, &ConstraintSpec::Unconstrained, Objective::Means).unwrap();
        if out.outcome.objective <= 1.5 * exact.cost + 1e-12 {
            within += 1;
        }
    }
    assert!(within >= 18, "only {within}/20 seeds within 1.5x of the oracle");
}

#[test]
fn variance_matches_direct_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ps = uniform_points(&mut rng, 30, 4, -2.0, 2.0);
    let all: Vec<usize> = (0..30).collect();
    let v = variance(&ps, &all).unwrap();
    let o = mean(&ps, &all).unwrap();
    let direct: f64 =
        (0..30).map(|i| ps.point(i).dist_sq(&o)).sum::<f64>() / 30.0;
    assert!(rel_gap(v, direct) < 1e-12);
}
