use proptest::prelude::*;

use critbubble::variational::{
    assemble, eigen_lambda1_div, minimize_s_lambda, q_lambda, reconstruct_solution, DiscreteFunction,
    MinimizeOptions,
};
use critbubble::weights::{Domain, RadialGrid, Weight};

fn setup(n: usize, elements: usize) -> (Weight, Domain, RadialGrid) {
    let w = Weight::power(1.0, 1.0, 2.0).unwrap();
    let d = Domain::ball(n, 1.0).unwrap();
    let g = RadialGrid::geometric(n, 0.0, 1.0, elements, 0.95).unwrap();
    (w, d, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quotient_is_scale_invariant(
        values in prop::collection::vec(0.05f64..1.0, 32),
        c in prop_oneof![-8.0f64..-0.125, 0.125f64..8.0],
        lambda in 0.0f64..10.0,
    ) {
        let (w, d, g) = setup(4, 32);
        let forms = assemble(&w, &d, &g).unwrap();
        let u = DiscreteFunction::from_free(g.clone(), &values);
        let a = q_lambda(&u, &forms, lambda).unwrap();
        let b = q_lambda(&u.scaled(c), &forms, lambda).unwrap();
        prop_assert!(((a - b) / a).abs() < 1e-13, "{} vs {}", a, b);
    }
}

#[test]
fn minimizer_never_above_initial_quotient() {
    for (n, lambda) in [(3, 0.0), (4, 5.0), (5, 15.0)] {
        let (w, d, g) = setup(n, 128);
        let rep = minimize_s_lambda(&w, &d, &g, lambda, &MinimizeOptions::default()).unwrap();
        assert!(rep.s_lambda_estimate <= rep.initial_quotient, "n={n}");
    }
}

#[test]
fn eigenfunction_quotient_and_sign() {
    for n in [3, 5] {
        let (w, d, g) = setup(n, 256);
        let rep = eigen_lambda1_div(&w, &d, &g).unwrap();
        let forms = assemble(&w, &d, &g).unwrap();
        let u = rep.eigenfunction.free_values().to_vec();
        let rq = forms.stiffness.form(&u) / forms.mass.form(&u);
        assert!(((rq - rep.lambda1_div) / rep.lambda1_div).abs() < 1e-9);
        let (lo, hi) = rep.eigenfunction.free_range();
        assert!(rep.eigenfunction.values[lo..hi].iter().all(|&v| v > 0.0));
    }
}

#[test]
fn refinement_does_not_increase_s_lambda() {
    let (w, d, g) = setup(5, 64);
    let opts = MinimizeOptions { refine: false, ..MinimizeOptions::default() };
    let mut grid = g;
    let mut prev = f64::INFINITY;
    for _ in 0..3 {
        let s = minimize_s_lambda(&w, &d, &grid, 19.0, &opts).unwrap().s_lambda_estimate;
        assert!(s <= prev * (1.0 + 1e-10), "{s} > {prev}");
        prev = s;
        grid = grid.refine().unwrap();
    }
}

#[test]
fn reconstruction_satisfies_weak_form() {
    let (w, d, g) = setup(5, 256);
    let lambda = 19.0;
    let rep = minimize_s_lambda(&w, &d, &g, lambda, &MinimizeOptions::default()).unwrap();
    let rec = reconstruct_solution(&rep, &w, &d).unwrap();
    let forms = assemble(&w, &d, &rec.solution.grid).unwrap();
    let u = rec.solution.free_values();
    let au = forms.apply(u, lambda);
    let full = forms.to_full(u);
    let load = forms.qform.power_load(&full, forms.q());
    let load = forms.to_free(&load);
    let scale = load.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let worst = au.iter().zip(load).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8 * scale, "{worst:e} vs {scale:e}");
    assert!(rec.residual <= 1e-8);
}
