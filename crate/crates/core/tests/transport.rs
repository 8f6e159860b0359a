//! Threshold transport: solver against the exhaustive oracle, coupling
//! optimality and discretization behavior.

use proptest::prelude::*;
use psd_core::transport::{
    build_x, comonotone_optimality_check, grid_search_oracle, lattice_size, solve_thresholds, transport_plan,
    welfare_objective, GoodsDistribution, LambdaGrid, SolveOptions, Thresholds, GRID_SEARCH_LIMIT, MARGINAL_TOL,
};
use psd_core::Exec;

fn goods(values: Vec<f64>, weights: Vec<f64>) -> GoodsDistribution {
    let total: f64 = weights.iter().sum();
    let mut masses: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - masses.iter().sum::<f64>();
    masses[0] += drift;
    GoodsDistribution::new(values, masses).unwrap()
}

fn goods_strategy() -> impl Strategy<Value = GoodsDistribution> {
    (1usize..=5)
        .prop_flat_map(|k| (prop::collection::vec(0.0..10.0f64, k), prop::collection::vec(0.1..1.0f64, k)))
        .prop_map(|(v, w)| goods(v, w))
}

fn grid_strategy() -> impl Strategy<Value = LambdaGrid> {
    (4usize..=30, 0.05..1.0f64, 1.5..6.0f64).prop_map(|(g, lo, hi)| LambdaGrid::uniform(lo, hi, g).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_matches_the_exhaustive_optimum(
        grid in grid_strategy(),
        n in 2usize..=4,
        qc in goods_strategy(),
        qd in goods_strategy(),
    ) {
        prop_assume!(lattice_size(grid.len(), n) <= GRID_SEARCH_LIMIT);
        let options = SolveOptions { fallback: false, ..SolveOptions::default() };
        let sol = solve_thresholds(&grid, n, &qc, &qd, options, Exec::Sequential).unwrap();
        let oracle = grid_search_oracle(&grid, n, &qc, &qd, Exec::Sequential).unwrap();
        let scale = oracle.objective.abs().max(1.0);
        prop_assert!(sol.objective >= oracle.objective - 1e-6 * scale,
            "solver {} vs oracle {}", sol.objective, oracle.objective);
        prop_assert!(sol.objective <= oracle.objective + 1e-9 * scale);
        // the solver cuts are within one grid step of some exhaustive optimum
        let at_oracle_cuts = welfare_objective(&oracle.thresholds, &grid, &qc, &qd).unwrap();
        prop_assert!((at_oracle_cuts - oracle.objective).abs() <= 1e-9 * scale);
        let near = sol.cuts.iter().zip(&oracle.cuts).all(|(a, b)| a.abs_diff(*b) <= 1);
        let tied = (sol.objective - oracle.objective).abs() <= 1e-9 * scale;
        prop_assert!(near || tied, "cuts {:?} vs {:?}", sol.cuts, oracle.cuts);
    }

    #[test]
    fn interior_optima_have_no_improving_step(
        grid in grid_strategy(),
        n in 2usize..=4,
        qc in goods_strategy(),
        qd in goods_strategy(),
    ) {
        let sol = solve_thresholds(&grid, n, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        prop_assert!(sol.max_residual() <= 1e-8, "residuals {:?}", sol.foc_residuals);
    }

    #[test]
    fn plans_conserve_every_marginal(
        grid in grid_strategy(),
        raw in prop::collection::vec(0.0..1.0f64, 0..5),
        qc in goods_strategy(),
        qd in goods_strategy(),
    ) {
        let lo = grid.lower();
        let hi = *grid.points().last().unwrap();
        let mut t: Vec<f64> = raw.iter().map(|u| lo + u * (hi - lo)).collect();
        t.sort_by(f64::total_cmp);
        let plan = transport_plan(&Thresholds::new(t).unwrap(), &grid, &qc, &qd).unwrap();
        prop_assert!(plan.marginal_error(&grid, &qc, &qd) <= MARGINAL_TOL);
    }

    #[test]
    fn another_signal_never_lowers_the_optimum(
        grid in grid_strategy(),
        n in 1usize..=3,
        qc in goods_strategy(),
        qd in goods_strategy(),
    ) {
        let a = solve_thresholds(&grid, n, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        let b = solve_thresholds(&grid, n + 1, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        prop_assert!(b.objective >= a.objective - 1e-9 * a.objective.abs().max(1.0));
    }

    #[test]
    fn comonotone_coupling_beats_alternatives(
        grid in (3usize..=7, 0.1..1.0f64, 2.0..5.0f64).prop_map(|(g, lo, hi)| LambdaGrid::uniform(lo, hi, g).unwrap()),
        raw in prop::collection::vec(0.0..1.0f64, 1..4),
        values in prop::collection::vec(0.0..10.0f64, 1..=4),
    ) {
        let lo = grid.lower();
        let hi = *grid.points().last().unwrap();
        let mut t: Vec<f64> = raw.iter().map(|u| lo + u * (hi - lo)).collect();
        t.sort_by(f64::total_cmp);
        let n = t.len() + 1;
        let x = build_x(&Thresholds::new(t).unwrap(), &grid, n).unwrap();
        let k = values.len();
        let qc = goods(values, vec![1.0; k]);
        let v = comonotone_optimality_check(&x, &grid, &qc).unwrap();
        prop_assert!(v.is_optimal, "{v:?}");
        prop_assert!(v.comonotone >= v.best_alternative - 1e-12);
    }
}

#[test]
fn coarse_transport_figure_masses() {
    let grid = LambdaGrid::uniform(0.0, 1.0, 6).unwrap();
    let x = build_x(&Thresholds::new(vec![0.5, 2.0 / 3.0]).unwrap(), &grid, 3).unwrap();
    let masses: Vec<f64> = (0..3).map(|s| x.iter().map(|r| r[s]).sum()).collect();
    let want = [0.5, 1.0 / 6.0, 1.0 / 3.0];
    for s in 0..3 {
        assert!((masses[s] - want[s]).abs() <= 4.0 * f64::EPSILON, "{masses:?}");
    }
}

#[test]
fn anti_monotone_coupling_is_strictly_worse() {
    let grid = LambdaGrid::uniform(0.2, 3.0, 6).unwrap();
    let x = build_x(&Thresholds::new(vec![1.0, 2.0]).unwrap(), &grid, 3).unwrap();
    let qc = goods(vec![5.0, 2.0, 1.0], vec![1.0, 1.0, 1.0]);
    let v = comonotone_optimality_check(&x, &grid, &qc).unwrap();
    assert!(v.anti_monotone < v.comonotone - 1e-9);
}

/// `|O(2g) - O(g)| / |O(g) - O(g/2)|` over successive doublings of a uniform
/// grid on a continuous lambda law.
#[test]
fn optimum_converges_under_grid_refinement() {
    let qc = goods(vec![9.0, 6.0, 4.0, 1.0], vec![1.0, 2.0, 3.0, 2.0]);
    let qd = goods(vec![8.0, 5.0, 3.0, 0.5], vec![2.0, 2.0, 1.0, 3.0]);
    let optimum = |g: usize| {
        let grid = LambdaGrid::uniform(0.25, 4.0, g).unwrap();
        let options = SolveOptions { fallback: false, ..SolveOptions::default() };
        solve_thresholds(&grid, 3, &qc, &qd, options, Exec::Parallel).unwrap().objective
    };
    let values: Vec<f64> = [64, 128, 256, 512, 1024].iter().map(|&g| optimum(g)).collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|d| d[1] / d[0]).collect();
    assert_eq!(ratios.len(), 3);
    for r in &ratios {
        assert!(*r <= 0.6, "objectives {values:?}, ratios {ratios:?}");
    }
}
