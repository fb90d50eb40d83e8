//! Truncated Aubin-Talenti bubbles `ζ(r)(ε + r²)^{-(n-2)/2}`, their energy
//! integrals and the small-ε expansion fits of `Q_λ`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{cached_a_k, critical_exponent, omega, SobolevConstants};
use crate::error::{invalid, Error, Result};
use crate::linalg::least_squares;
use crate::quadrature::{integrate_breaks, Tolerance};
use crate::weights::{Domain, Weight};

/// Relative tolerance for bubble integrals.
pub const BUBBLE_TOL: Tolerance = Tolerance::new(0.0, 1e-13);

/// Radial cutoff: 1 on `[0, l]`, 0 on `[L, ∞)`, quintic smoothstep between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner && outer.is_finite()) {
            return Err(invalid(format!("cutoff needs 0 < l < L, got l={inner}, L={outer}")));
        }
        Ok(Self { inner, outer })
    }

    /// `l = R/2`, `L = R`.
    pub fn for_radius(radius: f64) -> Result<Self> {
        Self::new(0.5 * radius, radius)
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            let x = (r - self.inner) / (self.outer - self.inner);
            1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= self.inner || r >= self.outer {
            0.0
        } else {
            let h = self.outer - self.inner;
            let x = (r - self.inner) / h;
            -30.0 * x * x * (1.0 - x) * (1.0 - x) / h
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub n: usize,
    pub eps: f64,
    pub cutoff: Cutoff,
}

impl BubbleParams {
    pub fn new(n: usize, eps: f64, cutoff: Cutoff) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("bubbles need n >= 3, got {n}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { n, eps, cutoff })
    }

    fn exponent(&self) -> f64 {
        (self.n as f64 - 2.0) / 2.0
    }

    fn check_domain(&self, d: &Domain) -> Result<()> {
        if d.n != self.n {
            return Err(invalid("bubble and domain dimensions differ"));
        }
        if d.is_annulus() {
            return Err(invalid("bubbles centred at a need a ball around a"));
        }
        if self.cutoff.outer > d.radius() * (1.0 + 1e-12) {
            return Err(invalid("cutoff support leaves the domain"));
        }
        Ok(())
    }

    /// Break points resolving the concentration scale `√ε`.
    fn breaks(&self) -> Vec<f64> {
        let s = self.eps.sqrt();
        let mut pts = vec![0.0];
        let mut x = 0.25 * s;
        while x < self.cutoff.inner {
            pts.push(x);
            x *= 2.0;
        }
        pts.push(self.cutoff.inner);
        pts.push(self.cutoff.outer);
        pts
    }
}

/// `ζ(r)(ε + r²)^{-(n-2)/2}`.
pub fn bubble_value(bp: &BubbleParams, r: f64) -> f64 {
    bp.cutoff.value(r) * (bp.eps + r * r).powf(-bp.exponent())
}

/// Exact radial derivative of [`bubble_value`].
pub fn bubble_derivative(bp: &BubbleParams, r: f64) -> f64 {
    let e = bp.exponent();
    let base = bp.eps + r * r;
    let u = base.powf(-e);
    bp.cutoff.derivative(r) * u - bp.cutoff.value(r) * 2.0 * e * r * u / base
}

fn radial_integral(bp: &BubbleParams, f: impl Fn(f64) -> f64) -> Result<f64> {
    let w = omega(bp.n)?;
    let m = bp.n as i32 - 1;
    Ok(w * integrate_breaks(|r| f(r) * r.powi(m), &bp.breaks(), BUBBLE_TOL)?.value)
}

/// `∫p|∇u_{a,ε}|²`.
pub fn weighted_dirichlet(bp: &BubbleParams, w: &Weight, d: &Domain) -> Result<f64> {
    bp.check_domain(d)?;
    radial_integral(bp, |r| w.profile(r) * bubble_derivative(bp, r).powi(2))
}

/// `‖u_{a,ε}‖_q²`.
pub fn lq_norm_sq(bp: &BubbleParams, d: &Domain) -> Result<f64> {
    bp.check_domain(d)?;
    let q = critical_exponent(bp.n);
    Ok(radial_integral(bp, |r| bubble_value(bp, r).abs().powf(q))?.powf(2.0 / q))
}

/// `‖u_{a,ε}‖_2²`.
pub fn l2_norm_sq(bp: &BubbleParams, d: &Domain) -> Result<f64> {
    bp.check_domain(d)?;
    radial_integral(bp, |r| bubble_value(bp, r).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleIntegrals {
    pub eps: f64,
    pub dirichlet: f64,
    pub l2: f64,
    /// Squared `L^q` norm.
    pub lq: f64,
}

impl BubbleIntegrals {
    pub fn compute(bp: &BubbleParams, w: &Weight, d: &Domain) -> Result<Self> {
        Ok(Self {
            eps: bp.eps,
            dirichlet: weighted_dirichlet(bp, w, d)?,
            l2: l2_norm_sq(bp, d)?,
            lq: lq_norm_sq(bp, d)?,
        })
    }

    pub fn quotient(&self, lambda: f64) -> f64 {
        (self.dirichlet - lambda * self.l2) / self.lq
    }
}

/// `Q_λ(u_{a,ε})`.
pub fn rayleigh_bubble(w: &Weight, lambda: f64, bp: &BubbleParams, d: &Domain) -> Result<f64> {
    Ok(BubbleIntegrals::compute(bp, w, d)?.quotient(lambda))
}

/// Asymptotic regime of `Q_λ(u_{a,ε})` as ε → 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "k>2 n>=5")]
    KAbove2HighDim,
    #[serde(rename = "k=2 n>=5")]
    K2HighDim,
    #[serde(rename = "k<2 n>=4")]
    KBelow2,
    #[serde(rename = "k>2 n=4")]
    KAbove2Dim4,
    #[serde(rename = "k=2 n=4")]
    K2Dim4,
    #[serde(rename = "n=3")]
    Dim3,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::KAbove2HighDim => "k>2 n>=5",
            Regime::K2HighDim => "k=2 n>=5",
            Regime::KBelow2 => "k<2 n>=4",
            Regime::KAbove2Dim4 => "k>2 n=4",
            Regime::K2Dim4 => "k=2 n=4",
            Regime::Dim3 => "n=3",
        };
        f.write_str(s)
    }
}

impl Regime {
    pub fn classify(n: usize, k: f64) -> Result<Self> {
        let k2 = (k - 2.0).abs() < 1e-12;
        match n {
            0..=2 => Err(invalid(format!("dimension must be at least 3, got {n}"))),
            3 if k > 1.0 => Ok(Regime::Dim3),
            3 => Err(Error::Regime {
                quantity: "expansion",
                hint: format!("n=3 needs k > 1 for the cutoff term, got k={k}"),
            }),
            4 if k2 => Ok(Regime::K2Dim4),
            4 if k > 2.0 => Ok(Regime::KAbove2Dim4),
            _ if k2 => Ok(Regime::K2HighDim),
            _ if k > 2.0 => Ok(Regime::KAbove2HighDim),
            _ => Ok(Regime::KBelow2),
        }
    }
}

/// One basis function of an expansion template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Power { exponent: f64 },
    PowerLog { exponent: f64 },
}

impl Term {
    pub fn eval(&self, eps: f64) -> f64 {
        match *self {
            Term::Power { exponent } => eps.powf(exponent),
            Term::PowerLog { exponent } => eps.powf(exponent) * eps.ln().abs(),
        }
    }

    fn power(exponent: f64) -> Self {
        Term::Power { exponent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSample {
    pub eps: f64,
    pub dirichlet: f64,
    pub l2: f64,
    pub lq: f64,
    #[serde(rename = "Q_lambda")]
    pub q_lambda: f64,
    pub regime_prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub regime: Regime,
    pub lambda: f64,
    /// Constant, leading correction, then nuisance terms.
    pub basis: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub leading: f64,
    pub slope: f64,
    pub residual: f64,
    pub rcond: f64,
    pub predicted_leading: f64,
    pub predicted_slope: f64,
    pub samples: Vec<ExpansionSample>,
}

impl ExpansionFit {
    pub fn slope_relative_error(&self) -> f64 {
        (self.slope - self.predicted_slope).abs() / self.predicted_slope.abs()
    }
}

/// Leading correction and nuisance terms of the fit template.
fn template(regime: Regime, n: usize, k: f64) -> (Term, Vec<Term>) {
    let nf = n as f64;
    let half = (nf - 2.0) / 2.0;
    let eps_log = Term::PowerLog { exponent: 1.0 };
    match regime {
        Regime::K2HighDim => (Term::power(1.0), vec![Term::power(half.min(2.0))]),
        Regime::KAbove2HighDim => (Term::power(1.0), vec![Term::power((k / 2.0).min(half).min(2.0))]),
        Regime::KBelow2 if n == 4 => (Term::power(k / 2.0), vec![eps_log]),
        Regime::KBelow2 => (Term::power(k / 2.0), vec![Term::power(1.0)]),
        Regime::K2Dim4 | Regime::KAbove2Dim4 => (eps_log, vec![Term::power(1.0)]),
        Regime::Dim3 => (Term::power(0.5), vec![Term::power(1.0)]),
    }
}

/// Coefficient of the leading correction predicted by the expansion lemma.
pub fn predicted_slope(w: &Weight, lambda: f64, d: &Domain, cutoff: &Cutoff) -> Result<(Regime, f64)> {
    let n = d.n;
    let regime = Regime::classify(n, w.k)?;
    let c = SobolevConstants::cached(n)?;
    let slope = match regime {
        Regime::K2HighDim | Regime::KAbove2HighDim => {
            let k3 = c.k3.expect("K3 exists for n >= 5");
            let a = if regime == Regime::K2HighDim { cached_a_k(n, 2.0, w.beta)? } else { 0.0 };
            (a - lambda * k3) / c.k2
        }
        Regime::KBelow2 => cached_a_k(n, w.k, w.beta)? / c.k2,
        Regime::K2Dim4 => -(c.omega_n / (2.0 * c.k2)) * (lambda - 4.0 * w.beta),
        Regime::KAbove2Dim4 => -lambda * c.omega_n / (2.0 * c.k2),
        Regime::Dim3 => {
            let (grad, pot, mass) = cutoff_integrals(w, cutoff)?;
            c.omega_n / c.k2 * (grad + pot - lambda * mass)
        }
    };
    Ok((regime, slope))
}

/// `(∫pζ'², ∫ζ² p'(r)/r, ∫ζ²)` over `[0, L]`; the middle term is
/// `kβ∫ζ² r^{k-2}` for pure power weights.
pub fn cutoff_integrals(w: &Weight, cutoff: &Cutoff) -> Result<(f64, f64, f64)> {
    let tol = Tolerance::new(1e-14, 1e-12);
    let pts = [0.0, 1e-6 * cutoff.inner, 1e-3 * cutoff.inner, cutoff.inner, cutoff.outer];
    let grad = integrate_breaks(|r| w.profile(r) * cutoff.derivative(r).powi(2), &pts[3..], tol)?.value;
    let pot = integrate_breaks(|r| cutoff.value(r).powi(2) * w.derivative(r) / r, &pts, tol)?.value;
    let mass = integrate_breaks(|r| cutoff.value(r).powi(2), &pts[3..], tol)?.value + cutoff.inner;
    Ok((grad, pot, mass))
}

/// `D(k, ζ) = (∫pζ'² + ∫ζ² p'/r) / ∫ζ²`.
pub fn cutoff_quotient(w: &Weight, cutoff: &Cutoff) -> Result<f64> {
    let (g, p, m) = cutoff_integrals(w, cutoff)?;
    Ok((g + p) / m)
}

/// Minimum number of ε samples in a sweep.
pub const MIN_SWEEP_POINTS: usize = 6;

/// Logarithmically spaced decreasing ε list.
pub fn log_eps_list(eps_min: f64, eps_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(eps_min > 0.0 && eps_max > eps_min) || points < 2 {
        return Err(invalid("need 0 < eps_min < eps_max and at least two points"));
    }
    let (a, b) = (eps_max.ln(), eps_min.ln());
    Ok((0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect())
}

/// Integrals of `u_{a,ε}` at each ε, in parallel.
pub fn sweep_integrals(w: &Weight, d: &Domain, eps_list: &[f64]) -> Result<Vec<BubbleIntegrals>> {
    let cutoff = Cutoff::for_radius(d.radius())?;
    if eps_list.len() < MIN_SWEEP_POINTS {
        return Err(invalid(format!("expansion sweeps need at least {MIN_SWEEP_POINTS} eps values")));
    }
    if eps_list.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(invalid("eps list must be strictly decreasing"));
    }
    if eps_list[0].sqrt() > 0.25 * cutoff.inner {
        return Err(invalid(format!(
            "eps={} too large: the concentration scale must sit well inside the cutoff plateau (sqrt(eps) <= l/4)",
            eps_list[0]
        )));
    }
    eps_list
        .par_iter()
        .map(|&eps| BubbleIntegrals::compute(&BubbleParams::new(d.n, eps, cutoff)?, w, d))
        .collect()
}

/// Fits precomputed integrals against the regime template at `λ`.
pub fn fit_expansion(w: &Weight, lambda: f64, d: &Domain, integrals: &[BubbleIntegrals]) -> Result<ExpansionFit> {
    let cutoff = Cutoff::for_radius(d.radius())?;
    let (regime, predicted_slope) = predicted_slope(w, lambda, d, &cutoff)?;
    let (lead, nuisance) = template(regime, d.n, w.k);
    let mut basis = vec![Term::power(0.0), lead];
    basis.extend(nuisance);
    let eps: Vec<f64> = integrals.iter().map(|b| b.eps).collect();
    let y: Vec<f64> = integrals.iter().map(|b| b.quotient(lambda)).collect();
    let columns: Vec<Vec<f64>> = basis.iter().map(|t| eps.iter().map(|&e| t.eval(e)).collect()).collect();
    let (coefficients, residual, rcond) = least_squares(&columns, &y)?;
    let predicted_leading = w.p0 * SobolevConstants::cached(d.n)?.s;
    let samples = integrals
        .iter()
        .zip(&y)
        .map(|(b, &q)| ExpansionSample {
            eps: b.eps,
            dirichlet: b.dirichlet,
            l2: b.l2,
            lq: b.lq,
            q_lambda: q,
            regime_prediction: predicted_leading + predicted_slope * lead.eval(b.eps),
        })
        .collect();
    Ok(ExpansionFit {
        regime,
        lambda,
        leading: coefficients[0],
        slope: coefficients[1],
        basis,
        coefficients,
        residual,
        rcond,
        predicted_leading,
        predicted_slope,
        samples,
    })
}

/// Evaluates `Q_λ(u_{a,ε})` over `eps_list` and fits the regime template.
pub fn expansion_sweep(w: &Weight, lambda: f64, d: &Domain, eps_list: &[f64]) -> Result<ExpansionFit> {
    let integrals = sweep_integrals(w, d, eps_list)?;
    fit_expansion(w, lambda, d, &integrals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball(n: usize) -> Domain {
        Domain::ball(n, 1.0).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        let c = Cutoff::new(0.5, 1.0).unwrap();
        assert_eq!(c.value(0.5), 1.0);
        assert_eq!(c.value(1.0), 0.0);
        assert!((c.value(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(c.derivative(0.5), 0.0);
        assert!(c.derivative(0.9999999) > -1e-9);
        let h = 1e-6;
        let fd = (c.value(0.7 + h) - c.value(0.7 - h)) / (2.0 * h);
        assert!((fd - c.derivative(0.7)).abs() < 1e-8);
        assert!(Cutoff::new(1.0, 0.5).is_err());
    }

    #[test]
    fn bubble_point_values() {
        let bp = BubbleParams::new(3, 1.0, Cutoff::new(2.0, 3.0).unwrap()).unwrap();
        assert!((bubble_value(&bp, 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
        let bp = BubbleParams::new(5, 0.01, Cutoff::for_radius(1.0).unwrap()).unwrap();
        assert!((bubble_value(&bp, 0.0) - 0.01f64.powf(-1.5)).abs() < 1e-9);
        assert_eq!(bubble_value(&bp, 1.0), 0.0);
    }

    #[test]
    fn derivative_is_exact() {
        let bp = BubbleParams::new(4, 0.02, Cutoff::for_radius(1.0).unwrap()).unwrap();
        for &r in &[0.05, 0.3, 0.6, 0.9] {
            let h = 1e-6;
            let fd = (bubble_value(&bp, r + h) - bubble_value(&bp, r - h)) / (2.0 * h);
            assert!((fd - bubble_derivative(&bp, r)).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn constant_weight_scales_dirichlet() {
        let d = unit_ball(4);
        let bp = BubbleParams::new(4, 1e-3, Cutoff::for_radius(1.0).unwrap()).unwrap();
        let a = weighted_dirichlet(&bp, &Weight::constant(1.0).unwrap(), &d).unwrap();
        let b = weighted_dirichlet(&bp, &Weight::constant(3.0).unwrap(), &d).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn regime_classification() {
        assert_eq!(Regime::classify(5, 2.0).unwrap(), Regime::K2HighDim);
        assert_eq!(Regime::classify(6, 3.0).unwrap(), Regime::KAbove2HighDim);
        assert_eq!(Regime::classify(4, 1.0).unwrap(), Regime::KBelow2);
        assert_eq!(Regime::classify(4, 2.0).unwrap(), Regime::K2Dim4);
        assert_eq!(Regime::classify(4, 2.5).unwrap(), Regime::KAbove2Dim4);
        assert_eq!(Regime::classify(3, 2.0).unwrap(), Regime::Dim3);
        assert!(Regime::classify(3, 0.5).is_err());
        assert_eq!(serde_json::to_string(&Regime::K2Dim4).unwrap(), "\"k=2 n=4\"");
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let d = unit_ball(5);
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        assert!(sweep_integrals(&w, &d, &[1e-3, 1e-4]).is_err());
        let inc = log_eps_list(1e-5, 1e-3, 6).unwrap().into_iter().rev().collect::<Vec<_>>();
        assert!(sweep_integrals(&w, &d, &inc).is_err());
        assert!(sweep_integrals(&w, &d, &log_eps_list(1e-3, 0.5, 6).unwrap()).is_err());
    }

    #[test]
    fn constant_weight_leading_constant() {
        let d = unit_ball(5);
        let w = Weight::constant(2.0).unwrap();
        let fit = expansion_sweep(&w, 0.0, &d, &log_eps_list(1e-6, 1e-3, 8).unwrap()).unwrap();
        assert!((fit.leading / fit.predicted_leading - 1.0).abs() < 1e-4, "{fit:?}");
    }
}
