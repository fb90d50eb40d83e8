//! Sobolev and bubble constants, the explicit λ-thresholds, the Hardy check
//! and the γ(k) estimate for n = 3.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_half_line, GaussLegendre, Tolerance};
use crate::variational::DiscreteFunction;
use crate::weights::{Domain, RadialGrid, Weight};

/// Tolerance used for every integral over `[0, ∞)`.
pub const HALF_LINE_TOL: Tolerance = Tolerance::new(1e-10, 1e-14);

/// Critical exponent `2n/(n-2)`.
pub fn critical_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 - 2.0)
}

/// Surface area of the unit sphere `S^{n-1}`.
pub fn omega(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("omega needs n >= 2, got {n}")));
    }
    let (mut m, mut w) = if n % 2 == 0 { (2, 2.0 * PI) } else { (3, 4.0 * PI) };
    while m < n {
        w *= 2.0 * PI / m as f64;
        m += 2;
    }
    Ok(w)
}

/// `∫_0^∞ r^a (1+r²)^{-b} dr` by compactified adaptive quadrature.
pub fn radial_moment(a: f64, b: f64) -> Result<f64> {
    if !(a > -1.0) || !(2.0 * b - a > 1.0) {
        return Err(invalid(format!("moment r^{a}(1+r²)^-{b} diverges")));
    }
    let est = integrate_half_line(|r| r.powf(a) * (1.0 + r * r).powf(-b), 0.0, HALF_LINE_TOL)?;
    Ok(est.value)
}

fn require_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!("dimension must be at least 3, got {n}")));
    }
    Ok(())
}

pub fn compute_k1(n: usize) -> Result<f64> {
    require_n(n)?;
    let nf = n as f64;
    Ok((nf - 2.0).powi(2) * omega(n)? * radial_moment(nf + 1.0, nf)?)
}

pub fn compute_k2(n: usize) -> Result<f64> {
    require_n(n)?;
    let nf = n as f64;
    Ok((omega(n)? * radial_moment(nf - 1.0, nf)?).powf((nf - 2.0) / nf))
}

pub fn compute_k3(n: usize) -> Result<f64> {
    require_n(n)?;
    if n <= 4 {
        return Err(Error::Regime {
            quantity: "K3",
            hint: "logarithmic regime: the L2 norm of the bubble grows like |log ε| for n = 4 and is bounded for n = 3".into(),
        });
    }
    let nf = n as f64;
    Ok(omega(n)? * radial_moment(nf - 1.0, nf - 2.0)?)
}

/// `(n-2)² β ∫_{R^n} |x|^{k+2} (1+|x|²)^{-n} dx`, defined for `k + 2 < n`.
pub fn compute_a_k(n: usize, k: f64, beta: f64) -> Result<f64> {
    require_n(n)?;
    if !(k > 0.0) || !(beta >= 0.0) {
        return Err(invalid(format!("A_k needs k > 0 and beta >= 0, got k={k}, beta={beta}")));
    }
    let nf = n as f64;
    if (k - (nf - 2.0)).abs() < 1e-12 {
        return Err(Error::Regime { quantity: "A_k", hint: "k=n-2 log regime".into() });
    }
    if k > nf - 2.0 {
        return Err(Error::Regime { quantity: "A_k", hint: "k>n-2 bounded regime".into() });
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    Ok((nf - 2.0).powi(2) * beta * omega(n)? * radial_moment(nf + k + 1.0, nf)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevConstants {
    pub n: usize,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    /// Absent for n ≤ 4.
    #[serde(rename = "K3")]
    pub k3: Option<f64>,
    #[serde(rename = "S")]
    pub s: f64,
    pub omega_n: f64,
}

impl SobolevConstants {
    pub fn compute(n: usize) -> Result<Self> {
        let k1 = compute_k1(n)?;
        let k2 = compute_k2(n)?;
        let k3 = match compute_k3(n) {
            Ok(v) => Some(v),
            Err(Error::Regime { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { n, k1, k2, k3, s: k1 / k2, omega_n: omega(n)? })
    }

    /// Write-once cached constants for dimension `n`.
    pub fn cached(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<SobolevConstants>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
        if let Some(c) = cache.lock().expect("constants cache poisoned").get(&n) {
            return Ok(c.clone());
        }
        let fresh = Arc::new(Self::compute(n)?);
        let mut guard = cache.lock().expect("constants cache poisoned");
        Ok(guard.entry(n).or_insert(fresh).clone())
    }
}

/// Cached `A_k`, keyed by `(n, k, β)`.
pub fn cached_a_k(n: usize, k: f64, beta: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<BTreeMap<(usize, u64, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let key = (n, k.to_bits(), beta.to_bits());
    if let Some(v) = cache.lock().expect("constants cache poisoned").get(&key) {
        return Ok(*v);
    }
    let v = compute_a_k(n, k, beta)?;
    Ok(*cache.lock().expect("constants cache poisoned").entry(key).or_insert(v))
}

/// `(n-2) n (n+2) β₂ / (4(n-1))`.
pub fn gamma_tilde(n: usize, beta2: f64) -> Result<f64> {
    if n < 4 {
        return Err(invalid(format!("gamma_tilde needs n >= 4, got {n}")));
    }
    let nf = n as f64;
    Ok((nf - 2.0) * nf * (nf + 2.0) * beta2 / (4.0 * (nf - 1.0)))
}

/// `β_k min(diam^{k-2}, 1)`.
pub fn beta_tilde(k: f64, beta: f64, diam: f64) -> Result<f64> {
    if !(k > 0.0) || !(diam > 0.0) {
        return Err(invalid(format!("beta_tilde needs k > 0 and diam > 0, got k={k}, diam={diam}")));
    }
    Ok(beta * diam.powf(k - 2.0).min(1.0))
}

/// `(k/2) β_k ((n+k-2)/2)² diam^{k-2}`, valid for `0 < k ≤ 2`.
pub fn alpha_lower_bound(n: usize, k: f64, beta: f64, diam: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(invalid(format!("alpha_lower_bound needs k > 0, got {k}")));
    }
    if k > 2.0 {
        return Err(Error::Regime { quantity: "alpha_lower", hint: "k>2: alpha(p)=0".into() });
    }
    let nf = n as f64;
    Ok(0.5 * k * beta * ((nf + k - 2.0) / 2.0).powi(2) * diam.powf(k - 2.0))
}

/// `(2/(n+t))²`.
pub fn hardy_constant(n: usize, t: f64) -> Result<f64> {
    let s = n as f64 + t;
    if !(s > 0.0) {
        return Err(invalid(format!("Hardy inequality needs t + n > 0, got t={t}, n={n}")));
    }
    Ok((2.0 / s).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs/lhs`; `None` when `lhs = 0`.
    pub ratio: Option<f64>,
    pub holds: bool,
    pub tolerance: f64,
}

/// Relative slack allowed in the Hardy comparison.
pub const HARDY_SLACK: f64 = 1e-10;

fn gauss20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Compares `∫ r^t u²` with `(2/(n+t))² ∫ r^t (r u')²` for a piecewise
/// linear `u`, both with the volume factor `ω_n r^{n-1}`.
pub fn hardy_check(u: &DiscreteFunction, t: f64) -> Result<HardyReport> {
    let n = u.grid.n;
    let c = hardy_constant(n, t)?;
    let w = omega(n)?;
    let m = t + n as f64 - 1.0;
    let g = gauss20();
    let (mut lhs, mut grad) = (0.0, 0.0);
    for (e, r) in u.grid.nodes.windows(2).enumerate() {
        let (a, b) = (r[0], r[1]);
        let (ua, ub) = (u.values[e], u.values[e + 1]);
        let slope = (ub - ua) / (b - a);
        if a == 0.0 {
            let (p1, p2, p3) = (b.powf(m + 1.0), b.powf(m + 2.0), b.powf(m + 3.0));
            lhs += ua * ua * p1 / (m + 1.0) + 2.0 * ua * slope * p2 / (m + 2.0) + slope * slope * p3 / (m + 3.0);
            grad += slope * slope * p3 / (m + 3.0);
        } else {
            lhs += g.integrate(
                |x| {
                    let v = ua + slope * (x - a);
                    v * v * x.powf(m)
                },
                a,
                b,
            );
            grad += slope * slope * g.integrate(|x| x.powf(m + 2.0), a, b);
        }
    }
    let lhs = w * lhs;
    let rhs = c * w * grad;
    let ratio = if lhs > 0.0 { Some(rhs / lhs) } else { None };
    Ok(HardyReport { lhs, rhs, ratio, holds: lhs <= rhs * (1.0 + HARDY_SLACK), tolerance: HARDY_SLACK })
}

/// Truncated power `max(r, r₁)^{-a} - R^{-a}` with `a = (n+t)/2 - δ`, where
/// `r₁` is the first positive node. Its Hardy ratio tends to 1 as `δ → 0`
/// and the grid resolves the origin.
pub fn hardy_near_extremal(grid: &RadialGrid, t: f64, delta: f64) -> Result<DiscreteFunction> {
    if grid.inner() != 0.0 {
        return Err(invalid("the near-extremal Hardy family lives on a ball grid"));
    }
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let a = 0.5 * (grid.n as f64 + t) - delta;
    let r1 = grid.nodes[1];
    let edge = grid.outer().powf(-a);
    Ok(DiscreteFunction::from_fn(grid.clone(), |r| r.max(r1).powf(-a) - edge))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaKEstimate {
    /// Upper estimate of γ(k): the infimum over the parametric family only.
    pub gamma_k: f64,
    /// ζ at the equispaced knots of `[R/2, R]`, from `ζ(R/2)=1` to `ζ(R)=0`.
    pub knots: Vec<f64>,
    pub family_dim: usize,
}

/// Quadratic-over-quadratic form of `D(k,ζ)` for a piecewise linear
/// transition with `m` equal intervals on `[R/2, R]`.
struct CutoffQuotient {
    /// Symmetric tridiagonal numerator and denominator forms on the knot values.
    num_diag: Vec<f64>,
    num_off: Vec<f64>,
    den_diag: Vec<f64>,
    den_off: Vec<f64>,
    num_const: f64,
    den_const: f64,
}

impl CutoffQuotient {
    fn new(k: f64, p0: f64, beta: f64, radius: f64, m: usize) -> Self {
        let g = gauss20();
        let half = 0.5 * radius;
        let h = half / m as f64;
        let mut num_diag = vec![0.0; m + 1];
        let mut num_off = vec![0.0; m];
        let mut den_diag = vec![0.0; m + 1];
        let mut den_off = vec![0.0; m];
        for e in 0..m {
            let a = half + h * e as f64;
            let b = a + h;
            let stiff = g.integrate(|r| p0 + beta * r.powf(k), a, b) / (h * h);
            let w00 = k * beta * g.integrate(|r| ((b - r) / h).powi(2) * r.powf(k - 2.0), a, b);
            let w01 = k * beta * g.integrate(|r| (b - r) * (r - a) / (h * h) * r.powf(k - 2.0), a, b);
            let w11 = k * beta * g.integrate(|r| ((r - a) / h).powi(2) * r.powf(k - 2.0), a, b);
            num_diag[e] += stiff + w00;
            num_diag[e + 1] += stiff + w11;
            num_off[e] += -stiff + w01;
            den_diag[e] += h / 3.0;
            den_diag[e + 1] += h / 3.0;
            den_off[e] += h / 6.0;
        }
        let num_const = k * beta * half.powf(k - 1.0) / (k - 1.0);
        Self { num_diag, num_off, den_diag, den_off, num_const, den_const: half }
    }

    fn forms(&self, z: &[f64]) -> (f64, f64) {
        let quad = |d: &[f64], o: &[f64]| {
            let mut s = 0.0;
            for i in 0..z.len() {
                s += d[i] * z[i] * z[i];
                if i + 1 < z.len() {
                    s += 2.0 * o[i] * z[i] * z[i + 1];
                }
            }
            s
        };
        (
            quad(&self.num_diag, &self.num_off) + self.num_const,
            quad(&self.den_diag, &self.den_off) + self.den_const,
        )
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (a, b) = self.forms(z);
        a / b
    }

    /// Numerator and denominator of `D` as quadratics in `z[j]`.
    fn coordinate(&self, z: &[f64], j: usize) -> ([f64; 3], [f64; 3]) {
        let mut zz = z.to_vec();
        zz[j] = 0.0;
        let (n0, d0) = self.forms(&zz);
        let lin = |o: &[f64]| {
            let mut s = 0.0;
            if j > 0 {
                s += 2.0 * o[j - 1] * z[j - 1];
            }
            if j + 1 < z.len() {
                s += 2.0 * o[j] * z[j + 1];
            }
            s
        };
        (
            [self.num_diag[j], lin(&self.num_off), n0],
            [self.den_diag[j], lin(&self.den_off), d0],
        )
    }
}

fn minimize_ratio_on(num: [f64; 3], den: [f64; 3], lo: f64, hi: f64) -> f64 {
    let f = |x: f64| (num[0] * x * x + num[1] * x + num[2]) / (den[0] * x * x + den[1] * x + den[2]);
    let (a, b, c) = (num[0], num[1], num[2]);
    let (d, e, g) = (den[0], den[1], den[2]);
    let qa = a * e - b * d;
    let qb = 2.0 * (a * g - c * d);
    let qc = b * g - c * e;
    let mut cands = vec![lo, hi];
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                cands.push(q / qa);
                cands.push(qc / q);
            }
        }
    } else if qb.abs() > 1e-300 {
        cands.push(-qc / qb);
    }
    let mut best = (f(lo), lo);
    for x in cands {
        if x >= lo && x <= hi {
            let v = f(x);
            if v < best.0 {
                best = (v, x);
            }
        }
    }
    best.1
}

fn coordinate_descent(q: &CutoffQuotient, z: &mut [f64]) {
    let m = z.len() - 1;
    let mut current = q.value(z);
    for _ in 0..20_000 {
        for j in 1..m {
            let before = q.value(z);
            let old = z[j];
            let (num, den) = q.coordinate(z, j);
            z[j] = minimize_ratio_on(num, den, z[j + 1], z[j - 1]);
            if q.value(z) > before {
                z[j] = old;
            }
        }
        let next = q.value(z);
        if current - next <= 1e-15 * current.abs() {
            break;
        }
        current = next;
    }
}

/// Upper estimate of `γ(k) = inf_H D(k, ζ)` for `n = 3` over monotone
/// piecewise linear transitions with `family_dim` equal intervals.
pub fn gamma_k_estimate(n: usize, k: f64, p0: f64, beta: f64, radius: f64, family_dim: usize) -> Result<GammaKEstimate> {
    if n != 3 {
        return Err(invalid(format!("gamma_k is defined for n = 3, got {n}")));
    }
    if !(k >= 2.0) || !(p0 > 0.0) || !(beta >= 0.0) || !(radius > 0.0) {
        return Err(invalid(format!("gamma_k needs k >= 2, p0 > 0, beta >= 0, R > 0 (k={k}, p0={p0}, beta={beta}, R={radius})")));
    }
    if family_dim < 1 {
        return Err(invalid("family_dim must be at least 1"));
    }
    let mut levels = vec![family_dim];
    while levels[levels.len() - 1] % 2 == 0 {
        let last = levels[levels.len() - 1];
        levels.push(last / 2);
    }
    levels.reverse();
    // Grid search over concave/convex power profiles on the coarsest level.
    let m0 = levels[0];
    let q0 = CutoffQuotient::new(k, p0, beta, radius, m0);
    let profile = |a: f64| -> Vec<f64> { (0..=m0).map(|j| 1.0 - (j as f64 / m0 as f64).powf(a)).collect() };
    let mut z = profile(1.0);
    let mut best = q0.value(&z);
    for i in 0..=64 {
        let a = (0.25f64.ln() + (i as f64 / 64.0) * (8.0f64.ln() - 0.25f64.ln())).exp();
        let cand = profile(a);
        let v = q0.value(&cand);
        if v < best {
            best = v;
            z = cand;
        }
    }
    coordinate_descent(&q0, &mut z);
    for w in levels.windows(2) {
        let (coarse, fine) = (w[0], w[1]);
        let ratio = fine / coarse;
        let mut zf = vec![0.0; fine + 1];
        for (j, v) in zf.iter_mut().enumerate() {
            let e = (j / ratio).min(coarse - 1);
            let s = (j - e * ratio) as f64 / ratio as f64;
            *v = z[e] * (1.0 - s) + z[e + 1] * s;
        }
        let q = CutoffQuotient::new(k, p0, beta, radius, fine);
        coordinate_descent(&q, &mut zf);
        z = zf;
    }
    let q = CutoffQuotient::new(k, p0, beta, radius, family_dim);
    Ok(GammaKEstimate { gamma_k: q.value(&z), knots: z, family_dim })
}

/// Family dimension used when thresholds are assembled automatically.
pub const DEFAULT_GAMMA_K_FAMILY: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub gamma_tilde: Option<f64>,
    pub beta_tilde: f64,
    pub alpha_lower: Option<f64>,
    /// `(2/n)²`, the Hardy constant at `t = 0`.
    pub hardy_constant: f64,
    pub gamma_k: Option<f64>,
    pub lambda1_div: Option<f64>,
}

impl ThresholdSet {
    /// All thresholds available in closed form or by cheap quadrature;
    /// `lambda1_div` is left empty.
    pub fn analytic(w: &Weight, d: &Domain) -> Result<Self> {
        let n = d.n;
        let gamma_tilde = if n >= 4 && (w.k - 2.0).abs() < 1e-12 { Some(gamma_tilde(n, w.beta)?) } else { None };
        let alpha_lower = if w.k <= 2.0 { Some(alpha_lower_bound(n, w.k, w.beta, d.diam())?) } else { None };
        let gamma_k = if n == 3 && w.k >= 2.0 && !d.is_annulus() {
            Some(gamma_k_estimate(3, w.k, w.p0, w.beta, d.radius(), DEFAULT_GAMMA_K_FAMILY)?.gamma_k)
        } else {
            None
        };
        Ok(Self {
            gamma_tilde,
            beta_tilde: beta_tilde(w.k, w.beta, d.diam())?,
            alpha_lower,
            hardy_constant: hardy_constant(n, 0.0)?,
            gamma_k,
            lambda1_div: None,
        })
    }
}
