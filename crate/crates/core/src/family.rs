//! Translated, rescaled bubbles `v^σ_{t,k}` on a domain with a small hole,
//! and the functionals `E`, `Γ`, `F` evaluated on them.
//!
//! Integrals use coordinates centred at the bubble centre `b = a + t r₀ σ`:
//! `s = |x - b|` and the angle `ψ` between `x - b` and `σ`, with measure
//! `ω_{n-1} s^{n-1} sin^{n-2}ψ ds dψ`.

use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{critical_exponent, omega, SobolevConstants};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_breaks, Tolerance};
use crate::variational::{dirichlet_energy, DiscreteFunction, Forms};
use crate::weights::{Domain, Weight};

const INNER_TOL: Tolerance = Tolerance::new(0.0, 1e-10);
const OUTER_TOL: Tolerance = Tolerance::new(0.0, 1e-9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub t: f64,
    pub sigma: Vec<f64>,
    pub scale_index: u32,
    pub r0: f64,
    #[serde(rename = "R0")]
    pub big_r0: f64,
}

fn smoothstep(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        (x * x * x * (10.0 + x * (-15.0 + 6.0 * x)), 30.0 * x * x * (1.0 - x) * (1.0 - x))
    }
}

impl FamilyParams {
    /// Unit vector along coordinate axis `axis`.
    pub fn axis(n: usize, axis: usize) -> Result<Vec<f64>> {
        if axis >= n {
            return Err(invalid(format!("axis {axis} out of range for n = {n}")));
        }
        let mut s = vec![0.0; n];
        s[axis] = 1.0;
        Ok(s)
    }

    pub fn validate(&self, d: &Domain) -> Result<()> {
        if !(0.0..1.0).contains(&self.t) {
            return Err(invalid(format!("t must lie in [0, 1), got {}", self.t)));
        }
        if self.sigma.len() != d.n {
            return Err(invalid("sigma must be a point of R^n"));
        }
        let norm = self.sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("sigma must be a unit vector, |sigma| = {norm}")));
        }
        if self.scale_index == 0 {
            return Err(invalid("scale index must be positive"));
        }
        let (_, plateau) = self.dead_zone();
        if !(plateau < self.big_r0) || 2.0 * self.big_r0 > d.radius() * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "need 1/(2k²) = {plateau:e} < R0 and 2 R0 <= domain radius, got R0 = {}",
                self.big_r0
            )));
        }
        if !(self.r0 > 0.0) || self.t * self.r0 >= self.big_r0 {
            return Err(invalid("need r0 > 0 and t r0 < R0"));
        }
        if d.inner_radius() > self.dead_zone().0 {
            return Err(invalid(format!(
                "hole {} too large for the dead zone |x - a| <= 1/(4k²) = {:e}",
                d.inner_radius(),
                self.dead_zone().0
            )));
        }
        Ok(())
    }

    /// `(1/(4k²), 1/(2k²))`.
    pub fn dead_zone(&self) -> (f64, f64) {
        let k2 = (self.scale_index as f64).powi(2);
        (0.25 / k2, 0.5 / k2)
    }

    /// Distance `t r₀` from `a` to the bubble centre.
    pub fn offset(&self) -> f64 {
        self.t * self.r0
    }

    /// Concentration scale `(1 - t)/k`.
    pub fn scale(&self) -> f64 {
        (1.0 - self.t) / self.scale_index as f64
    }

    /// `φ_k(ρ)` and `dφ_k/dρ`.
    pub fn cutoff(&self, rho: f64) -> (f64, f64) {
        let (lo, hi) = self.dead_zone();
        if rho <= hi {
            let (v, dv) = smoothstep((rho - lo) / (hi - lo));
            (v, dv / (hi - lo))
        } else if rho <= self.big_r0 {
            (1.0, 0.0)
        } else {
            let (v, dv) = smoothstep((rho - self.big_r0) / self.big_r0);
            (1.0 - v, -dv / self.big_r0)
        }
    }

    /// Bubble factor and its derivative in `s = |x - b|`.
    fn profile(&self, n: usize, s: f64) -> (f64, f64) {
        let e = (n as f64 - 2.0) / 2.0;
        let k = self.scale_index as f64;
        let one = 1.0 - self.t;
        let base = one * one + k * k * s * s;
        let b = (one * k).powf(e) * base.powf(-e);
        (b, -2.0 * e * k * k * s * b / base)
    }

    /// `v^σ_{t,k}(x)` for `x ∈ R^n`.
    pub fn v(&self, d: &Domain, x: &[f64]) -> f64 {
        let rho = dist(x, &d.center, None);
        let s = dist(x, &d.center, Some((&self.sigma, self.offset())));
        self.cutoff(rho).0 * self.profile(d.n, s).0
    }
}

fn dist(x: &[f64], a: &[f64], shift: Option<(&[f64], f64)>) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let c = a[i] + shift.map_or(0.0, |(s, t)| t * s[i]);
            (xi - c).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// The three integrals every functional needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyIntegrals {
    /// `∫p|∇v|²`.
    pub dirichlet: f64,
    /// `∫|v|^q`.
    pub lq: f64,
    /// `∫((x - a)·σ) p|∇v|²`.
    pub axial_moment: f64,
}

fn integrate_family(fp: &FamilyParams, w: &Weight, d: &Domain) -> Result<FamilyIntegrals> {
    fp.validate(d)?;
    let n = d.n;
    let q = critical_exponent(n);
    let c = fp.offset();
    let (z0, z1) = fp.dead_zone();
    let transitions = [z0, z1, fp.big_r0, 2.0 * fp.big_r0];
    let s_max = c + 2.0 * fp.big_r0;
    let mut s_breaks = vec![0.0, s_max];
    let mut x = 0.25 * fp.scale();
    while x < s_max {
        s_breaks.push(x);
        x *= 2.0;
    }
    for rt in transitions {
        s_breaks.push((c - rt).abs());
        s_breaks.push(c + rt);
    }
    s_breaks.retain(|&s| s <= s_max);
    s_breaks.sort_by(|a, b| a.total_cmp(b));
    s_breaks.dedup();

    let w_n1 = omega(n - 1)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);

    // Integrand values (p|∇v|², |v|^q, axial factor) at (s, ψ).
    let point = |s: f64, psi: f64| -> (f64, f64, f64) {
        let cv = psi.cos();
        let rho = (s * s + c * c + 2.0 * s * c * cv).max(0.0).sqrt();
        let (phi, dphi) = fp.cutoff(rho);
        if phi == 0.0 && dphi == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (b, db) = fp.profile(n, s);
        let cross = if rho > 0.0 { (s + c * cv) / rho } else { 0.0 };
        let grad2 = phi * phi * db * db + b * b * dphi * dphi + 2.0 * phi * dphi * b * db * cross;
        let v = phi * b;
        (w.profile(rho) * grad2, v.abs().powf(q), c + s * cv)
    };

    let radial = |s: f64, which: usize| -> f64 {
        if failure.borrow().is_some() || s == 0.0 {
            return 0.0;
        }
        let mut psi_breaks = vec![0.0, PI];
        if c > 0.0 {
            for rt in transitions {
                let arg = (rt * rt - s * s - c * c) / (2.0 * s * c);
                if arg > -1.0 && arg < 1.0 {
                    psi_breaks.push(arg.acos());
                }
            }
            psi_breaks.sort_by(|a, b| a.total_cmp(b));
        }
        let f = |psi: f64| {
            let (g, l, ax) = point(s, psi);
            let val = match which {
                0 => g,
                1 => l,
                _ => g * ax,
            };
            val * psi.sin().powi(n as i32 - 2)
        };
        // Energy and L^q integrals of v are O(1) by scale invariance; cap the
        // absolute inner error so its total contribution stays below 1e-12.
        let mut floor = 1e-12 / (w_n1 * s.powi(n as i32 - 1) * s_max);
        if which == 2 {
            // The axial moment cancels; measure its error against ∫p|∇v|².
            let g = |psi: f64| point(s, psi).0 * psi.sin().powi(n as i32 - 2);
            let scale = integrate_breaks(g, &psi_breaks, INNER_TOL).map_or(0.0, |e| e.value.abs());
            floor = (floor * c.max(fp.scale())).max(1e-11 * (c + s) * scale);
        }
        let tol = Tolerance::new(floor, INNER_TOL.rel);
        match integrate_breaks(f, &psi_breaks, tol) {
            Ok(e) => w_n1 * s.powi(n as i32 - 1) * e.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };

    let mut out = [0.0; 3];
    for which in 0..3 {
        // The axial moment may vanish; bound its error by the energy scale.
        let tol = if which == 2 { Tolerance::new(1e-8 * out[0] * c.max(fp.scale()), 1e-9) } else { OUTER_TOL };
        let est = integrate_breaks(|s| radial(s, which), &s_breaks, tol)?;
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        out[which] = est.value;
    }
    Ok(FamilyIntegrals { dirichlet: out[0], lq: out[1], axial_moment: out[2] })
}

/// `w^σ_{t,k} = r v^σ_{t,k}` with `r` the maximizer of `E(r v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFunction {
    pub params: FamilyParams,
    pub integrals: FamilyIntegrals,
    /// Multiplier applied to `v`.
    pub amplitude: f64,
}

impl FamilyFunction {
    pub fn scaled(&self, c: f64) -> Self {
        Self { amplitude: self.amplitude * c, ..self.clone() }
    }
}

/// Evaluates the integrals of `v^σ_{t,k}`.
pub fn family_v(fp: &FamilyParams, w: &Weight, d: &Domain) -> Result<FamilyFunction> {
    Ok(FamilyFunction { params: fp.clone(), integrals: integrate_family(fp, w, d)?, amplitude: 1.0 })
}

/// `w = r v` with `r = (∫p|∇v|² / ∫|v|^q)^{1/(q-2)}`; returns `(w, r)`.
pub fn family_w(fp: &FamilyParams, w: &Weight, d: &Domain) -> Result<(FamilyFunction, f64)> {
    let v = family_v(fp, w, d)?;
    let q = critical_exponent(d.n);
    let r = (v.integrals.dirichlet / v.integrals.lq).powf(1.0 / (q - 2.0));
    Ok((v.scaled(r), r))
}

/// `½∫p|∇u|² - (1/q)∫|u|^q`.
pub fn energy_e(u: &FamilyFunction, d: &Domain) -> f64 {
    let q = critical_exponent(d.n);
    let a = u.amplitude;
    0.5 * a * a * u.integrals.dirichlet - a.abs().powf(q) * u.integrals.lq / q
}

/// `∫p|∇u|² - ∫|u|^q`.
pub fn gamma_functional(u: &FamilyFunction, d: &Domain) -> f64 {
    let q = critical_exponent(d.n);
    let a = u.amplitude;
    a * a * u.integrals.dirichlet - a.abs().powf(q) * u.integrals.lq
}

/// `(p₀S)^{-n/2} ∫ x p|∇u|²`.
pub fn center_f(u: &FamilyFunction, d: &Domain, s: f64, p0: f64) -> Vec<f64> {
    let norm = (p0 * s).powf(-(d.n as f64) / 2.0) * u.amplitude * u.amplitude;
    d.center
        .iter()
        .zip(&u.params.sigma)
        .map(|(a, sg)| norm * (a * u.integrals.dirichlet + sg * u.integrals.axial_moment))
        .collect()
}

/// `F` of a radial function: by symmetry only the centre survives.
pub fn center_f_radial(forms: &Forms, u: &DiscreteFunction, d: &Domain, s: f64, p0: f64) -> Vec<f64> {
    let norm = (p0 * s).powf(-(d.n as f64) / 2.0) * dirichlet_energy(forms, u);
    d.center.iter().map(|a| norm * a).collect()
}

/// Largest `r₀ ≤ R₀/2` with `|p(a + ρσ) - p₀| < θ/(2 S^{n/2})` for `ρ ≤ r₀`,
/// shrunk by 1% to keep the inequality strict.
pub fn choose_r0(w: &Weight, n: usize, theta: f64, big_r0: f64) -> Result<f64> {
    if !(theta > 0.0) || !(big_r0 > 0.0) {
        return Err(invalid("need theta > 0 and R0 > 0"));
    }
    let s = SobolevConstants::cached(n)?.s;
    let tol = theta / (2.0 * s.powf(n as f64 / 2.0));
    let ok = |r: f64| (w.profile(r) - w.p0).abs() < tol;
    let cap = 0.5 * big_r0;
    let samples = 2000;
    let mut last_good = 0.0;
    for i in 1..=samples {
        let r = cap * i as f64 / samples as f64;
        if !ok(r) {
            let (mut lo, mut hi) = (last_good, r);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if !(lo > 0.0) {
                return Err(invalid("continuity condition fails arbitrarily close to a"));
            }
            return Ok(0.99 * lo);
        }
        last_good = r;
    }
    Ok(cap)
}

/// Smallest integer `λ > 1` with `E(λw) < 0`.
pub fn amplitude(w_fn: &FamilyFunction, d: &Domain) -> u32 {
    (2..).find(|&l| energy_e(&w_fn.scaled(l as f64), d) < 0.0).expect("E(λw) → -∞")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "F")]
    pub center: Vec<f64>,
    pub r_scale: f64,
    /// `(1/n) p(a + t r₀ σ)^{n/2} S^{n/2}`.
    pub energy_limit: f64,
    pub amplitude: u32,
    pub params: FamilyParams,
}

pub fn family_report(fp: &FamilyParams, w: &Weight, d: &Domain) -> Result<FamilyReport> {
    let (wf, r) = family_w(fp, w, d)?;
    let s = SobolevConstants::cached(d.n)?.s;
    let nf = d.n as f64;
    let p_at = w.profile(fp.offset());
    Ok(FamilyReport {
        energy: energy_e(&wf, d),
        gamma: gamma_functional(&wf, d),
        center: center_f(&wf, d, s, w.p0),
        r_scale: r,
        energy_limit: (p_at * s).powf(nf / 2.0) / nf,
        amplitude: amplitude(&wf, d),
        params: fp.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, t: f64, k: u32) -> FamilyParams {
        FamilyParams { t, sigma: FamilyParams::axis(n, 0).unwrap(), scale_index: k, r0: 0.1, big_r0: 0.5 }
    }

    #[test]
    fn cutoff_plateaus() {
        let fp = params(3, 0.5, 4);
        let (z0, z1) = fp.dead_zone();
        assert_eq!(fp.cutoff(0.5 * z0).0, 0.0);
        assert_eq!(fp.cutoff(z1).0, 1.0);
        assert_eq!(fp.cutoff(0.3).0, 1.0);
        assert_eq!(fp.cutoff(1.0).0, 0.0);
    }

    #[test]
    fn validation() {
        let d = Domain::ball(3, 1.0).unwrap();
        assert!(params(3, 0.5, 4).validate(&d).is_ok());
        assert!(params(3, 1.0, 4).validate(&d).is_err());
        let mut p = params(3, 0.5, 4);
        p.sigma = vec![1.0, 1.0, 0.0];
        assert!(p.validate(&d).is_err());
        let holed = Domain::annulus(3, 0.1, 1.0).unwrap();
        assert!(params(3, 0.5, 4).validate(&holed).is_err());
        assert!(params(3, 0.5, 1).validate(&d).is_err());
    }

    #[test]
    fn gamma_vanishes_and_amplitude() {
        let d = Domain::annulus(3, 1e-3, 1.0).unwrap();
        let w = Weight::power(1.0, 1.0, 2.0).unwrap();
        let rep = family_report(&params(3, 0.3, 8), &w, &d).unwrap();
        assert!(rep.gamma.abs() < 1e-10 * rep.energy, "{rep:?}");
        assert_eq!(rep.amplitude, 2);
    }

    #[test]
    fn pointwise_value_at_bubble_centre() {
        let d = Domain::ball(3, 1.0).unwrap();
        let fp = params(3, 0.5, 4);
        let x = [0.05, 0.0, 0.0];
        let expect = ((0.5f64 * 4.0).sqrt()) / 0.5;
        assert!((fp.v(&d, &x) - expect).abs() < 1e-12);
    }
}
