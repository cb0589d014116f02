use proptest::prelude::*;
use sgwarm_core::driver::{interpolation_cost, predict_nearest, savings};
use sgwarm_core::*;

fn weights(n: usize) -> impl Strategy<Value = AnisotropyWeights> {
    prop::collection::vec(1.0f64..2.5, n).prop_map(|v| AnisotropyWeights::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_is_a_partition_of_unity(
        (w, y) in (1usize..=3).prop_flat_map(|n| (weights(n), prop::collection::vec(-1.0f64..1.0, n))),
        level in 0usize..=3,
    ) {
        let grid = build_grid(level, &w).unwrap();
        let basis = SparseGridBasis::new(&grid, level).unwrap();
        let psi = basis.weights_at(&y).unwrap();
        prop_assert_eq!(psi.len(), grid.count(level));
        prop_assert!((psi.iter().sum::<f64>() - 1.0).abs() < 1e-11);
        let q: f64 = basis.quadrature_rule().weights.iter().sum();
        prop_assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_grids_keep_the_delta_property(w in (1usize..=3).prop_flat_map(weights), level in 0usize..=3) {
        let grid = build_grid(level, &w).unwrap();
        let basis = SparseGridBasis::new(&grid, level).unwrap();
        for (j, p) in grid.level_set(level).iter().enumerate() {
            let psi = basis.weights_at(&p.coords).unwrap();
            for (k, v) in psi.iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                prop_assert!((v - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nearest_prediction_is_a_closest_point(y in prop::collection::vec(-1.0f64..1.0, 2), prior in 1usize..=13) {
        let grid = build_grid(2, &AnisotropyWeights::isotropic(2)).unwrap();
        let pts = grid.points();
        let prior = prior.min(pts.len());
        let sols: Vec<Vec<f64>> = (0..prior).map(|j| vec![j as f64]).collect();
        let got = predict_nearest(pts, &sols, &y, 1)[0] as usize;
        let d = |j: usize| pts[j].coords.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        prop_assert!((0..prior).all(|j| d(got) <= d(j)));
        prop_assert!((0..got).all(|j| d(j) > d(got)));
    }

    #[test]
    fn interpolation_cost_matches_direct_sum(counts in prop::collection::vec(1usize..50, 1..6), m_h in 1u64..1000) {
        let mut m = vec![1usize];
        for c in &counts {
            let last = *m.last().unwrap();
            m.push(last + c);
        }
        let mut direct = 0u64;
        for w in 1..m.len() {
            for _ in m[w - 1]..m[w] {
                direct += m_h * (2 * m[w - 1] as u64 - 1);
            }
        }
        prop_assert_eq!(interpolation_cost(m_h, &m), direct);
    }

    #[test]
    fn savings_against_itself_vanish(k in 1u64..1_000_000, c in 1u64..1_000_000) {
        let t = Totals { iterations: k, c_iter: 5, solve_cost: c, interp_cost: 0, total_cost: c };
        let s = savings(&t, &t);
        prop_assert_eq!(s.iterations, 0.0);
        prop_assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn cg_reaches_the_tolerance_from_any_start(
        y in prop::collection::vec(-1.0f64..1.0, 4),
        x0 in prop::collection::vec(-5.0f64..5.0, 31),
    ) {
        let disc = Discretization::new(ProblemSpec::ex51(), Mesh::interval(32).unwrap()).unwrap();
        let sys = disc.assemble(&y).unwrap();
        let pc = Preconditioner::diagonal(&sys.matrix).unwrap();
        let (x, rep) = cg_solve(&sys.matrix, &sys.rhs, &x0, &pc, Stopping::AbsResidual(1e-9), 1000).unwrap();
        prop_assert!(rep.converged);
        let r: Vec<f64> = sys.matrix.matvec(&x).unwrap().iter().zip(&sys.rhs).map(|(a, b)| b - a).collect();
        prop_assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }
}
