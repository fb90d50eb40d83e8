use proptest::prelude::*;

use critbubble::bubbles::{rayleigh_bubble, BubbleParams, Cutoff};
use critbubble::constants::{
    compute_a_k, compute_k3, gamma_k_estimate, gamma_tilde, hardy_check, SobolevConstants, HARDY_SLACK,
};
use critbubble::variational::DiscreteFunction;
use critbubble::weights::{Domain, RadialGrid, Weight};

#[test]
fn sobolev_ratio_matches_bubble_quotient() {
    for n in [5, 6] {
        let s = SobolevConstants::compute(n).unwrap().s;
        let d = Domain::ball(n, 1.0).unwrap();
        let bp = BubbleParams::new(n, 1e-8, Cutoff::for_radius(1.0).unwrap()).unwrap();
        let q = rayleigh_bubble(&Weight::constant(1.0).unwrap(), 0.0, &bp, &d).unwrap();
        assert!(((q - s) / s).abs() < 1e-6, "n={n}: {q} vs {s}");
    }
}

#[test]
fn gamma_tilde_is_a2_over_k3() {
    for n in 5..=9 {
        let beta = 1.7;
        let c = compute_a_k(n, 2.0, beta).unwrap() / compute_k3(n).unwrap();
        let g = gamma_tilde(n, beta).unwrap();
        assert!(((c - g) / g).abs() < 1e-6, "n={n}: {c} vs {g}");
    }
}

#[test]
fn gamma_k_nonincreasing_in_family_dim() {
    let mut prev = f64::INFINITY;
    for dim in [2, 4, 8, 16] {
        let g = gamma_k_estimate(3, 2.0, 1.0, 1.0, 1.0, dim).unwrap().gamma_k;
        assert!(g <= prev * (1.0 + 1e-12), "dim {dim}: {g} > {prev}");
        prev = g;
    }
}

fn zero_trace(grid: &RadialGrid, free: &[f64]) -> DiscreteFunction {
    DiscreteFunction::from_free(grid.clone(), free)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hardy_never_violated(
        n in 3usize..7,
        t in -1.0f64..2.0,
        values in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let grid = RadialGrid::geometric(n, 0.0, 1.0, 40, 0.9).unwrap();
        let u = zero_trace(&grid, &values);
        let r = hardy_check(&u, t).unwrap();
        prop_assert!(r.lhs <= r.rhs * (1.0 + HARDY_SLACK), "{:?}", r);
    }
}
