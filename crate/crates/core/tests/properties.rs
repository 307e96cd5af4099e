use std::sync::Arc;

use brenier::kantorovich::{solve_lp, verify_plan, CostKind};
use brenier::potential::gauge_normalize;
use brenier::solver::{admissible_heights, hessian, CellEstimator};
use brenier::{
    detect_singular_facets, exact_cell_stats_2d, legendre_dual, solve, BrenierPotential, ConvexPolygon,
    DiscreteTargetMeasure, Shape, SolverConfig, SourceDomain,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn target(seed: u64, n: usize) -> Arc<DiscreteTargetMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)])
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    let s: f64 = w.iter().sum();
    Arc::new(DiscreteTargetMeasure::new(pts, w.iter().map(|v| v / s).collect(), 1e-9).unwrap())
}

fn heights(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn domain(kind: u8, seed: u64) -> SourceDomain {
    match kind % 3 {
        0 => SourceDomain::square(-1.0, 1.0, seed),
        1 => SourceDomain::disk([0.2, -0.1], 0.9, seed),
        _ => SourceDomain::new(
            Shape::Polygon {
                polygon: ConvexPolygon::try_new(vec![[-1.0, -0.5], [1.2, -0.8], [0.9, 1.0], [-0.6, 0.9]]).unwrap(),
            },
            seed,
        )
        .unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samples_lie_inside_the_domain(kind in 0u8..3, seed in any::<u64>()) {
        let dom = domain(kind, seed);
        let xs = dom.sample(500);
        for x in xs.chunks_exact(2) {
            prop_assert!(dom.signed_distance(x) <= 1e-12);
        }
    }

    #[test]
    fn weights_are_normalized(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|k| vec![k as f64, rng.gen::<f64>()]).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s * (1.0 + 1e-8)).collect();
        let t = DiscreteTargetMeasure::new(pts, w, 1e-6).unwrap();
        prop_assert_eq!(t.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn cell_masses_sum_to_one(kind in 0u8..3, seed in any::<u64>(), n in 1usize..40) {
        let t = target(seed, n);
        let u = BrenierPotential::new(Arc::clone(&t), heights(seed, n, 0.5)).unwrap();
        let stats = exact_cell_stats_2d(&u, &domain(kind, 0)).unwrap();
        prop_assert!((stats.total_measure() - 1.0).abs() <= 1e-9);
        prop_assert!(stats.measures.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn gauge_shift_changes_nothing(kind in 0u8..3, seed in any::<u64>(), n in 2usize..30, c in -10.0f64..10.0) {
        let t = target(seed, n);
        let h = heights(seed, n, 0.5);
        let u = BrenierPotential::new(Arc::clone(&t), h.clone()).unwrap();
        let v = BrenierPotential::new(Arc::clone(&t), h.iter().map(|x| x + c).collect()).unwrap();
        let dom = domain(kind, seed);
        let xs = dom.sample(400);
        prop_assert_eq!(u.assign_batch(&xs), v.assign_batch(&xs));
        let (a, b) = (exact_cell_stats_2d(&u, &dom).unwrap(), exact_cell_stats_2d(&v, &dom).unwrap());
        for (p, q) in a.measures.iter().zip(&b.measures) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
        prop_assert_eq!(a.adjacency(), b.adjacency());
        for f in &a.facets {
            prop_assert!((f.measure.unwrap() - b.facet_measure(f.i, f.j)).abs() <= 1e-12);
        }
    }

    #[test]
    fn transport_map_is_monotone(seed in any::<u64>(), n in 1usize..40) {
        let t = target(seed, n);
        let u = BrenierPotential::new(Arc::clone(&t), heights(seed, n, 1.0)).unwrap();
        let xs = domain(0, seed).sample(2000);
        for pair in xs.chunks_exact(4) {
            let (a, b) = (&pair[..2], &pair[2..]);
            let (ta, tb) = (u.transport_map(a), u.transport_map(b));
            let s: f64 = (0..2).map(|k| (a[k] - b[k]) * (ta[k] - tb[k])).sum();
            prop_assert!(s >= -1e-12);
        }
    }

    #[test]
    fn dual_edges_match_adjacency(kind in 0u8..3, seed in any::<u64>(), n in 3usize..30) {
        let t = target(seed, n);
        let dom = domain(kind, 0);
        let u = BrenierPotential::new(Arc::clone(&t), admissible_heights(&dom, &t)).unwrap();
        let stats = exact_cell_stats_2d(&u, &dom).unwrap();
        prop_assume!(stats.min_measure() > 0.0);
        let dual = legendre_dual(&u).unwrap();
        let edges: Vec<(usize, usize)> = dual.restrict(&dom).unwrap().iter().map(|e| (e.i, e.j)).collect();
        prop_assert_eq!(edges, stats.adjacency());
    }

    #[test]
    fn hessian_is_symmetric_with_zero_row_sums(seed in any::<u64>(), n in 2usize..30) {
        let t = target(seed, n);
        let dom = domain(0, 0);
        let u = BrenierPotential::new(Arc::clone(&t), heights(seed, n, 0.3)).unwrap();
        let stats = exact_cell_stats_2d(&u, &dom).unwrap();
        let hess = hessian(&stats, &t).unwrap();
        for i in 0..n {
            prop_assert!(hess.row(i).sum().abs() <= 1e-12);
            prop_assert!(hess[(i, i)] >= 0.0);
            for j in 0..n {
                prop_assert_eq!(hess[(i, j)], hess[(j, i)]);
            }
        }
    }

    #[test]
    fn singular_facets_are_positive_adjacencies(seed in any::<u64>(), n in 3usize..30, theta in 0.05f64..3.0) {
        let t = target(seed, n);
        let dom = domain(1, 0);
        let u = BrenierPotential::new(Arc::clone(&t), heights(seed, n, 0.3)).unwrap();
        let stats = exact_cell_stats_2d(&u, &dom).unwrap();
        let g = detect_singular_facets(&stats, &t, theta).unwrap();
        for f in &g.facets {
            prop_assert!(stats.facet_measure(f.i, f.j) > 0.0);
            prop_assert!(f.gap > theta);
        }
        let mass: f64 = g.regions.iter().map(|r| r.mass).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_convex_on_the_admissible_set(seed in any::<u64>(), n in 2usize..20) {
        let t = target(seed, n);
        let dom = domain(0, 0);
        let est = CellEstimator::exact(&dom).unwrap();
        let base = admissible_heights(&dom, &t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h1: Vec<f64> = base.iter().map(|b| b + rng.gen_range(-0.05..0.05)).collect();
        let h2: Vec<f64> = base.iter().map(|b| b + rng.gen_range(-0.05..0.05)).collect();
        let e = |h: Vec<f64>| {
            let u = BrenierPotential::new(Arc::clone(&t), h).unwrap();
            let stats = est.stats(&u);
            (est.closed_form_energy(&u, &stats), stats.min_measure() > 0.0)
        };
        let (e1, ok1) = e(h1.clone());
        let (e2, ok2) = e(h2.clone());
        prop_assume!(ok1 && ok2);
        for s in [0.25, 0.5, 0.75] {
            let mid: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| s * a + (1.0 - s) * b).collect();
            let (em, _) = e(mid);
            prop_assert!(em <= s * e1 + (1.0 - s) * e2 + 1e-7);
        }
    }

    #[test]
    fn solution_is_unique_up_to_a_constant(seed in any::<u64>(), n in 2usize..25) {
        let t = target(seed, n);
        let dom = domain(0, 0);
        let cfg = SolverConfig::exact();
        let a = solve(&dom, Arc::clone(&t), &cfg, None).unwrap();
        let start = admissible_heights(&dom, &t);
        let b = solve(&dom, Arc::clone(&t), &cfg, Some(&start)).unwrap();
        let (ha, hb) = (gauge_normalize(&a.heights), gauge_normalize(&b.heights));
        for (x, y) in ha.iter().zip(&hb) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
        prop_assert!(a.final_residual() <= a.residual_history[0]);
    }

    #[test]
    fn lp_plans_are_feasible_and_tight(seed in any::<u64>(), m in 1usize..40, n in 1usize..15) {
        let t = target(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let xs: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = vec![1.0 / m as f64; m];
        for kind in [CostKind::Quadratic, CostKind::Euclidean] {
            let sol = solve_lp(&xs, &w, &t, kind).unwrap();
            let cost = brenier::kantorovich::cost_matrix(&xs, &t, kind).unwrap();
            let check = verify_plan(&sol.plan, &cost, &w, t.weights());
            prop_assert!(check.feasible);
            prop_assert!(check.min_entry >= 0.0);
            prop_assert!(check.max_row_error <= 1e-9 && check.max_col_error <= 1e-9);
            prop_assert!(sol.duals.max_violation(&cost) <= 1e-9);
            let dual = sol.duals.objective(&w, t.weights());
            prop_assert!((sol.cost - dual).abs() <= 1e-6 * (1.0 + sol.cost));
            prop_assert!(sol.plan.support(1e-15) < m + n);
        }
    }
}
