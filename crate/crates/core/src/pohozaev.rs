//! Pohozaev identity residuals, the numerical `α(p)` and nonexistence
//! certificates.

use serde::{Deserialize, Serialize};

use crate::constants::{omega, ThresholdSet};
use crate::error::{invalid, Result};
use crate::linalg::dot;
use crate::variational::{assemble, element_matrices, free_range, restrict, DiscreteFunction};
use crate::weights::{check_growth_condition, Domain, RadialGrid, Weight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    /// `λ∫u²`.
    pub volume_term: f64,
    /// `½∫∇p·(x-a)|∇u|²`.
    pub weight_term: f64,
    /// `½∫_{∂Ω} p (x-a)·ν |∂u/∂ν|²`.
    pub boundary_term: f64,
    /// `volume - weight - boundary`.
    pub residual: f64,
    /// `|residual|` over the largest term.
    pub relative_residual: f64,
    /// Smallest spacing among the boundary stencils.
    pub boundary_spacing: f64,
    /// The weight derivative came from finite differences.
    pub approximate: bool,
}

/// Derivative at `x[0]` of the quadratic through three points.
fn one_sided_derivative(x: [f64; 3], y: [f64; 3]) -> f64 {
    let (h1, h2) = (x[1] - x[0], x[2] - x[0]);
    // Lagrange weights of d/dx at x[0].
    let w0 = -(h1 + h2) / (h1 * h2);
    let w1 = h2 / (h1 * (h2 - h1));
    let w2 = -h1 / (h2 * (h2 - h1));
    w0 * y[0] + w1 * y[1] + w2 * y[2]
}

/// Evaluates the three Pohozaev terms for `u` at `λ`.
pub fn pohozaev_residual(u: &DiscreteFunction, w: &Weight, d: &Domain, lambda: f64) -> Result<PohozaevReport> {
    let grid = &u.grid;
    let forms = assemble(w, d, grid)?;
    let v = u.free_values();
    let volume = lambda * dot(v, &forms.mass.matvec(v));

    let w_n = omega(d.n)?;
    let (pair, _, _) = element_matrices(grid, |r| r * w.derivative(r), w_n);
    let weight = 0.5 * pair.form(&u.values);

    let nodes = &grid.nodes;
    let m = nodes.len() - 1;
    let mut boundary = 0.0;
    let mut spacing = f64::INFINITY;
    for sphere in d.boundary_normal_dot() {
        let (x, y) = if (sphere.radius - grid.outer()).abs() <= 1e-12 * grid.outer() {
            ([nodes[m], nodes[m - 1], nodes[m - 2]], [u.values[m], u.values[m - 1], u.values[m - 2]])
        } else {
            ([nodes[0], nodes[1], nodes[2]], [u.values[0], u.values[1], u.values[2]])
        };
        spacing = spacing.min((x[1] - x[0]).abs());
        let du = one_sided_derivative(x, y);
        let area = w_n * sphere.radius.powi(d.n as i32 - 1);
        boundary += 0.5 * w.profile(sphere.radius) * sphere.normal_dot * du * du * area;
    }
    let residual = volume - weight - boundary;
    let scale = volume.abs().max(weight.abs()).max(boundary.abs());
    Ok(PohozaevReport {
        volume_term: volume,
        weight_term: weight,
        boundary_term: boundary,
        residual,
        relative_residual: if scale > 0.0 { residual.abs() / scale } else { 0.0 },
        boundary_spacing: spacing,
        approximate: !w.is_differentiable(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// `None` when `α(p) = -∞`.
    pub value: Option<f64>,
    /// `∇p·(x-a) < 0` somewhere on the grid.
    pub minus_infinity: bool,
    pub approximate: bool,
    pub grid_elements: usize,
}

/// `½ min ∫r p'(r)|u'|² / ∫u²` over the finite element space, by inverse
/// iteration on the pencil `(K_{rp'}, M)`.
pub fn alpha_p_estimate(w: &Weight, d: &Domain, grid: &RadialGrid) -> Result<AlphaEstimate> {
    grid.matches(d)?;
    let approximate = !w.is_differentiable();
    let negative = grid
        .nodes
        .iter()
        .filter(|&&r| r > 0.0)
        .any(|&r| w.radial_gradient_pairing(r).map(|p| p.value < 0.0).unwrap_or(false));
    if negative {
        return Ok(AlphaEstimate { value: None, minus_infinity: true, approximate, grid_elements: grid.elements() });
    }
    if w.beta == 0.0 {
        return Ok(AlphaEstimate { value: Some(0.0), minus_infinity: false, approximate, grid_elements: grid.elements() });
    }
    let w_n = omega(d.n)?;
    let (kp, m, _) = element_matrices(grid, |r| r * w.derivative(r), w_n);
    let (lo, hi) = free_range(grid);
    let (kp, m) = (restrict(&kp, lo, hi), restrict(&m, lo, hi));
    let factor = kp.factor_spd()?;
    let mut x = vec![1.0; kp.dim()];
    let mut prev = f64::INFINITY;
    let mut mu = f64::NAN;
    for _ in 0..20_000 {
        let mut y = factor.solve(&m.matvec(&x));
        let nm = dot(&y, &m.matvec(&y)).sqrt();
        y.iter_mut().for_each(|v| *v /= nm);
        mu = kp.form(&y);
        x = y;
        if (mu - prev).abs() <= 1e-13 * mu.abs() {
            break;
        }
        prev = mu;
    }
    Ok(AlphaEstimate { value: Some(0.5 * mu), minus_infinity: false, approximate, grid_elements: grid.elements() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    NoSolutionBelowAlpha,
    NoSolutionAtOrAboveLambda1,
    NoSolutionStarshapedLambda0,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub starshaped: bool,
    pub growth_condition_holds: bool,
    pub pairing_nonnegative: bool,
    pub differentiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub lambda: f64,
    /// The α bound or the λ₁ estimate the verdict rests on.
    pub witness: Option<f64>,
    pub hypotheses: Hypotheses,
}

/// Emits the first applicable nonexistence certificate for `λ`.
pub fn certify_nonexistence(
    w: &Weight,
    d: &Domain,
    grid: &RadialGrid,
    lambda: f64,
    thresholds: &ThresholdSet,
) -> Result<Certificate> {
    if !lambda.is_finite() {
        return Err(invalid("lambda must be finite"));
    }
    grid.matches(d)?;
    let growth = check_growth_condition(w, d, grid);
    let pairing_nonnegative = grid
        .nodes
        .iter()
        .filter(|&&r| r > 0.0)
        .all(|&r| w.radial_gradient_pairing(r).map(|p| p.value >= 0.0).unwrap_or(false));
    let hyp = Hypotheses {
        starshaped: d.starshaped(),
        growth_condition_holds: growth.holds && !growth.approximate,
        pairing_nonnegative,
        differentiable: w.is_differentiable(),
    };
    let cert = |kind, witness| Certificate { kind, lambda, witness, hypotheses: hyp.clone() };

    if hyp.starshaped && hyp.pairing_nonnegative {
        if w.k <= 2.0 && hyp.growth_condition_holds {
            if let Some(a) = thresholds.alpha_lower {
                if lambda <= a {
                    return Ok(cert(CertificateKind::NoSolutionBelowAlpha, Some(a)));
                }
            }
        } else if w.k > 2.0 && hyp.differentiable && lambda <= 0.0 {
            return Ok(cert(CertificateKind::NoSolutionBelowAlpha, Some(0.0)));
        }
    }
    if let Some(l1) = thresholds.lambda1_div {
        if lambda >= l1 {
            return Ok(cert(CertificateKind::NoSolutionAtOrAboveLambda1, Some(l1)));
        }
    }
    if lambda == 0.0 && hyp.starshaped && hyp.pairing_nonnegative {
        return Ok(cert(CertificateKind::NoSolutionStarshapedLambda0, None));
    }
    Ok(cert(CertificateKind::Inconclusive, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Theta;

    #[test]
    fn quadratic_derivative_is_exact() {
        let x = [1.0, 0.9, 0.75];
        let y = x.map(|t| 3.0 * t * t - t + 2.0);
        assert!((one_sided_derivative(x, y) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn negative_pairing_flags_minus_infinity() {
        let d = Domain::ball(3, 1.0).unwrap();
        let g = RadialGrid::uniform(3, 0.0, 1.0, 64).unwrap();
        let w = Weight::new(2.0, 1.0, 2.0, Theta::Power { c: -1.5, m: 1.0 }).unwrap();
        let a = alpha_p_estimate(&w, &d, &g).unwrap();
        assert!(a.minus_infinity && a.value.is_none());
    }

    #[test]
    fn alpha_k2_sits_above_hardy_bound() {
        let d = Domain::ball(3, 1.0).unwrap();
        let g = RadialGrid::geometric(3, 0.0, 1.0, 400, 0.97).unwrap();
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        let a = alpha_p_estimate(&w, &d, &g).unwrap().value.unwrap();
        assert!(a >= 2.25 * (1.0 - 1e-9), "{a}");
    }

    #[test]
    fn certificate_order() {
        let d = Domain::ball(3, 1.0).unwrap();
        let g = RadialGrid::uniform(3, 0.0, 1.0, 64).unwrap();
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        let mut th = ThresholdSet::analytic(&w, &d).unwrap();
        th.lambda1_div = Some(12.0);
        let c = certify_nonexistence(&w, &d, &g, 1.0, &th).unwrap();
        assert_eq!(c.kind, CertificateKind::NoSolutionBelowAlpha);
        assert_eq!(c.witness, Some(2.25));
        let c = certify_nonexistence(&w, &d, &g, 12.1, &th).unwrap();
        assert_eq!(c.kind, CertificateKind::NoSolutionAtOrAboveLambda1);
        let c = certify_nonexistence(&w, &d, &g, 5.0, &th).unwrap();
        assert_eq!(c.kind, CertificateKind::Inconclusive);
    }

    #[test]
    fn annulus_at_zero_is_inconclusive() {
        let d = Domain::annulus(3, 0.3, 1.0).unwrap();
        let g = RadialGrid::uniform(3, 0.3, 1.0, 64).unwrap();
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        let th = ThresholdSet::analytic(&w, &d).unwrap();
        let c = certify_nonexistence(&w, &d, &g, 0.0, &th).unwrap();
        assert_eq!(c.kind, CertificateKind::Inconclusive);
        assert!(!c.hypotheses.starshaped);
    }
}
