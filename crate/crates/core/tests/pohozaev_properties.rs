use proptest::prelude::*;

use critbubble::constants::ThresholdSet;
use critbubble::pohozaev::{alpha_p_estimate, certify_nonexistence, pohozaev_residual, CertificateKind};
use critbubble::quadrature::GaussLegendre;
use critbubble::variational::{eigen_lambda1_div, minimize_s_lambda, DiscreteFunction, MinimizeOptions};
use critbubble::weights::{Domain, RadialGrid, Weight};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_term_nonnegative_on_balls(
        n in 3usize..7,
        lambda in 0.0f64..20.0,
        values in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        let d = Domain::ball(n, 1.0).unwrap();
        let g = RadialGrid::geometric(n, 0.0, 1.0, 48, 0.95).unwrap();
        let u = DiscreteFunction::from_free(g, &values);
        let rep = pohozaev_residual(&u, &w, &d, lambda).unwrap();
        prop_assert!(rep.boundary_term >= 0.0);
    }
}

/// `½ ∫ r p'(r) |u'|² / ∫ u²` for a piecewise linear `u` (the sphere area
/// cancels).
fn alpha_quotient(w: &Weight, u: &DiscreteFunction) -> f64 {
    let rule = GaussLegendre::new(10);
    let n = u.grid.n as i32;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, r) in u.grid.nodes.windows(2).enumerate() {
        let (a, b) = (u.values[e], u.values[e + 1]);
        let slope = (b - a) / (r[1] - r[0]);
        num += rule.integrate(|x| x * w.derivative(x) * slope * slope * x.powi(n - 1), r[0], r[1]);
        den += rule.integrate(|x| (a + (x - r[0]) * slope).powi(2) * x.powi(n - 1), r[0], r[1]);
    }
    0.5 * num / den
}

#[test]
fn alpha_estimate_below_scaled_bump_quotients() {
    let n = 3;
    let w = Weight::power(1.0, 1.0, 3.0).unwrap();
    let d = Domain::ball(n, 1.0).unwrap();
    let g = RadialGrid::geometric(n, 0.0, 1.0, 256, 0.95).unwrap();
    let alpha = alpha_p_estimate(&w, &d, &g).unwrap().value.unwrap();
    for j in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let bump = DiscreteFunction::from_fn(g.clone(), |r| {
            let s = j * r;
            if s < 1.0 { (1.0 - s * s).powi(2) } else { 0.0 }
        });
        let q = alpha_quotient(&w, &bump);
        assert!(alpha <= q * (1.0 + 1e-9), "j={j}: alpha {alpha} > {q}");
    }
}

#[test]
fn alpha_decreases_toward_zero_for_steep_weights() {
    let n = 3;
    let w = Weight::power(1.0, 1.0, 3.0).unwrap();
    let d = Domain::ball(n, 1.0).unwrap();
    let mut g = RadialGrid::uniform(n, 0.0, 1.0, 16).unwrap();
    let mut values = Vec::new();
    for _ in 0..5 {
        values.push(alpha_p_estimate(&w, &d, &g).unwrap().value.unwrap());
        g = g.refine().unwrap();
    }
    assert!(values.iter().all(|&a| a >= 0.0));
    assert!(values.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-10)), "{values:?}");
    assert!(values[4] < 0.5 * values[0], "{values:?}");
}

#[test]
fn certificates_agree_with_minimizer_verdicts() {
    let cases = [(3usize, 2.0, 0.0), (3, 2.0, 1.5), (4, 1.0, 0.0), (5, 2.0, 3.0), (5, 1.5, 0.0)];
    for (n, k, lambda) in cases {
        let w = Weight::power(1.0, 1.0, k).unwrap();
        let d = Domain::ball(n, 1.0).unwrap();
        let g = RadialGrid::geometric(n, 0.0, 1.0, 256, 0.97).unwrap();
        let mut th = ThresholdSet::analytic(&w, &d).unwrap();
        th.lambda1_div = Some(eigen_lambda1_div(&w, &d, &g).unwrap().lambda1_div);
        let cert = certify_nonexistence(&w, &d, &g, lambda, &th).unwrap();
        assert!(
            matches!(cert.kind, CertificateKind::NoSolutionBelowAlpha | CertificateKind::NoSolutionStarshapedLambda0),
            "n={n} k={k} lambda={lambda}: {cert:?}"
        );
        let rep = minimize_s_lambda(&w, &d, &g, lambda, &MinimizeOptions::default()).unwrap();
        assert_eq!(rep.achieved, Some(false), "n={n} k={k} lambda={lambda}: {:?}", rep.verdict);
    }
}
