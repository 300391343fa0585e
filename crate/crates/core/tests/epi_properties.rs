use epiplan::epi::{
    build_grid, build_transition, intervention_actions, noise_quadrature, tsir_step, EpiState,
    TsirParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn measles() -> TsirParams {
    TsirParams::seasonal_cosine(2.5e-5, 0.25, 0.97, 1500.0, 0.3, 1_000_000.0).unwrap()
}

/// Binned one-step law of a cell against direct Monte Carlo draws of the
/// noise from its representative point.
#[test]
fn transition_rows_match_monte_carlo() {
    let p = measles();
    let grid = build_grid(&p, 20, 20).unwrap();
    let tm =
        build_transition(&grid, &p, &intervention_actions(&[0.0, 0.4]).unwrap(), 1000).unwrap();
    let std_normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 100_000;
    for (a, mu) in [(0, 0.0), (1, 0.4)] {
        for state in [
            EpiState::new(40_000.0, 300.0, 3).unwrap(),
            EpiState::new(70_000.0, 5_000.0, 20).unwrap(),
        ] {
            let cell = grid.cell_of(&state);
            let src = grid.representative(cell);
            let mut counts = vec![0.0; grid.n_cells()];
            for _ in 0..draws {
                let u: f64 = rng.random_range(1e-12..1.0);
                let eps = (p.noise_sd * std_normal.inverse_cdf(u)).exp();
                let next = tsir_step(&src, mu, &p, eps).unwrap();
                counts[grid.cell_of(&next)] += 1.0 / draws as f64;
            }
            let m = tm.matrix(a).unwrap();
            let l1: f64 = (0..grid.n_cells())
                .map(|c| (m.get(cell, c) - counts[c]).abs())
                .sum();
            assert!(l1 <= 0.02, "action {a} cell {cell}: L1 {l1}");
        }
    }
}

/// Expected next incidence under the grid model against the direct
/// quadrature expectation from the exact state, as the grid is refined.
#[test]
fn refinement_reduces_expected_incidence_error() {
    let p = measles();
    let state = EpiState::new(43_210.0, 777.0, 5).unwrap();
    let n_quad = 64;
    let direct: f64 = noise_quadrature(p.noise_sd, n_quad)
        .iter()
        .map(|&e| tsir_step(&state, 0.0, &p, e).unwrap().i)
        .sum::<f64>()
        / n_quad as f64;
    let mut errors = Vec::new();
    for bins in [10, 20, 40, 80] {
        let grid = build_grid(&p, bins, bins).unwrap();
        let tm =
            build_transition(&grid, &p, &intervention_actions(&[0.0]).unwrap(), n_quad).unwrap();
        let inc = grid.incidence();
        let (cols, probs) = tm.matrix(0).unwrap().row(grid.cell_of(&state));
        let expected: f64 = cols.iter().zip(probs).map(|(&c, &q)| q * inc[c]).sum();
        errors.push((expected - direct).abs() / direct);
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "errors not decreasing: {errors:?}");
    }
}
