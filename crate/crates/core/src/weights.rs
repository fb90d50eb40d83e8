//! Radial weights `p(r) = p0 + β r^k (1 + θ(r))`, ball and annulus domains,
//! and graded radial grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Perturbation θ in the weight profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Theta {
    Zero,
    /// θ(r) = c·r^m.
    Power { c: f64, m: f64 },
    /// Piecewise-linear interpolation of `(r_i, θ_i)`, constant beyond the
    /// last abscissa.
    Tabulated { r: Vec<f64>, theta: Vec<f64> },
}

impl Theta {
    fn value(&self, r: f64) -> f64 {
        match self {
            Theta::Zero => 0.0,
            Theta::Power { c, m } => c * r.powf(*m),
            Theta::Tabulated { r: rs, theta } => interpolate(rs, theta, r),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub p0: f64,
    pub beta: f64,
    pub k: f64,
    pub theta: Theta,
}

/// `r·p'(r)`, flagged when obtained by finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub value: f64,
    pub approximate: bool,
}

/// Outcome of the node-wise check `k β ≤ r^{1-k} p'(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub holds: bool,
    pub worst_node: usize,
    pub worst_radius: f64,
    /// `min_i (r_i^{1-k} p'(r_i) - kβ)`.
    pub margin: f64,
    pub approximate: bool,
}

const FD_STEP: f64 = 1e-6;

impl Weight {
    pub fn new(p0: f64, beta: f64, k: f64, theta: Theta) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(invalid(format!("p0 must be positive, got {p0}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be nonnegative, got {beta}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid(format!("k must be positive, got {k}")));
        }
        match &theta {
            Theta::Zero => {}
            Theta::Power { c, m } => {
                if !c.is_finite() || !(*m > 0.0 && m.is_finite()) {
                    return Err(invalid(format!("power theta needs finite c and m > 0, got c={c}, m={m}")));
                }
            }
            Theta::Tabulated { r, theta } => {
                if r.len() < 2 || r.len() != theta.len() {
                    return Err(invalid("tabulated theta needs at least two (r, θ) pairs of equal length"));
                }
                if r[0] < 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("tabulated theta abscissae must be nonnegative and increasing"));
                }
                if theta.iter().any(|t| !t.is_finite()) {
                    return Err(invalid("tabulated theta values must be finite"));
                }
            }
        }
        Ok(Self { p0, beta, k, theta })
    }

    /// `p ≡ p0`.
    pub fn constant(p0: f64) -> Result<Self> {
        Self::new(p0, 0.0, 2.0, Theta::Zero)
    }

    /// `p0 + β r^k`.
    pub fn power(p0: f64, beta: f64, k: f64) -> Result<Self> {
        Self::new(p0, beta, k, Theta::Zero)
    }

    /// Profile value without the sign check on `r`.
    pub fn profile(&self, r: f64) -> f64 {
        if self.beta == 0.0 {
            return self.p0;
        }
        self.p0 + self.beta * r.powf(self.k) * (1.0 + self.theta.value(r))
    }

    /// `p(r)`; negative radii are rejected.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(invalid(format!("radius must be nonnegative, got {r}")));
        }
        Ok(self.profile(r))
    }

    pub fn is_constant(&self) -> bool {
        self.beta == 0.0
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.theta, Theta::Tabulated { .. })
    }

    /// `p'(r)` for r > 0.
    pub fn derivative(&self, r: f64) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        let k = self.k;
        match &self.theta {
            Theta::Zero => self.beta * k * r.powf(k - 1.0),
            Theta::Power { c, m } => self.beta * (k * r.powf(k - 1.0) + c * (k + m) * r.powf(k + m - 1.0)),
            Theta::Tabulated { .. } => {
                let h = FD_STEP * r.max(FD_STEP);
                let lo = (r - h).max(0.0);
                (self.profile(r + h) - self.profile(lo)) / (r + h - lo)
            }
        }
    }

    /// `r^{1-k} p'(r)`, written so the θ = 0 case is exactly `kβ`.
    fn scaled_derivative(&self, r: f64) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        let k = self.k;
        match &self.theta {
            Theta::Zero => self.beta * k,
            Theta::Power { c, m } => self.beta * (k + c * (k + m) * r.powf(*m)),
            Theta::Tabulated { .. } => r.powf(1.0 - k) * self.derivative(r),
        }
    }

    /// `∇p(x)·(x-a) = r p'(r)`.
    pub fn radial_gradient_pairing(&self, r: f64) -> Result<Pairing> {
        if !(r > 0.0) {
            return Err(invalid(format!("pairing needs r > 0, got {r}")));
        }
        Ok(Pairing { value: r * self.derivative(r), approximate: !self.is_differentiable() })
    }

    /// Checks positivity of `p` on `[0, radius]` on a dense sample.
    pub fn ensure_positive_on(&self, radius: f64) -> Result<()> {
        const SAMPLES: usize = 4096;
        for i in 0..=SAMPLES {
            let r = radius * i as f64 / SAMPLES as f64;
            let p = self.profile(r);
            if !(p > 0.0) || !p.is_finite() {
                return Err(invalid(format!("weight is not positive at r={r}: p={p}")));
            }
        }
        Ok(())
    }

    /// Verifies `|θ(r)| ≤ tol` at the smallest positive grid node.
    pub fn check_theta_vanishes(&self, grid: &RadialGrid, tol: f64) -> Result<()> {
        let r = grid.nodes.iter().copied().find(|&r| r > 0.0).unwrap_or(0.0);
        let t = self.theta.value(r);
        if t.abs() > tol {
            return Err(invalid(format!("theta({r:e}) = {t:e} does not vanish near the center")));
        }
        Ok(())
    }
}

/// Checks `k β ≤ r^{1-k} p'(r)` at every positive grid node.
pub fn check_growth_condition(w: &Weight, d: &Domain, grid: &RadialGrid) -> GrowthReport {
    let target = w.k * w.beta;
    let mut report = GrowthReport {
        holds: true,
        worst_node: 0,
        worst_radius: 0.0,
        margin: f64::INFINITY,
        approximate: !w.is_differentiable(),
    };
    for (i, &r) in grid.nodes.iter().enumerate() {
        if !(r > 0.0) || r > d.radius() {
            continue;
        }
        let margin = w.scaled_derivative(r) - target;
        if margin < report.margin {
            report.margin = margin;
            report.worst_node = i;
            report.worst_radius = r;
        }
    }
    let scale = target.abs().max(w.p0) * 1e-12;
    report.holds = report.margin >= -scale;
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Ball { radius: f64 },
    Annulus { hole: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub n: usize,
    pub kind: DomainKind,
    pub center: Vec<f64>,
}

/// One boundary sphere with its value of `(x-a)·ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySphere {
    pub radius: f64,
    pub normal_dot: f64,
}

impl Domain {
    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        check_dimension(n)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { n, kind: DomainKind::Ball { radius }, center: vec![0.0; n] })
    }

    pub fn annulus(n: usize, hole: f64, radius: f64) -> Result<Self> {
        check_dimension(n)?;
        if !(hole > 0.0 && hole < radius && radius.is_finite()) {
            return Err(invalid(format!("annulus needs 0 < eps_hole < R, got {hole}, {radius}")));
        }
        Ok(Self { n, kind: DomainKind::Annulus { hole, radius }, center: vec![0.0; n] })
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.n || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center must be a finite point of R^n"));
        }
        self.center = center;
        Ok(self)
    }

    pub fn radius(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } | DomainKind::Annulus { radius, .. } => radius,
        }
    }

    /// 0 for the ball, the hole radius for the annulus.
    pub fn inner_radius(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { .. } => 0.0,
            DomainKind::Annulus { hole, .. } => hole,
        }
    }

    pub fn diam(&self) -> f64 {
        2.0 * self.radius()
    }

    pub fn is_annulus(&self) -> bool {
        matches!(self.kind, DomainKind::Annulus { .. })
    }

    /// Starshaped about the center: true for the ball only.
    pub fn starshaped(&self) -> bool {
        !self.is_annulus()
    }

    pub fn boundary_normal_dot(&self) -> Vec<BoundarySphere> {
        let mut out = vec![BoundarySphere { radius: self.radius(), normal_dot: self.radius() }];
        if let DomainKind::Annulus { hole, .. } = self.kind {
            out.push(BoundarySphere { radius: hole, normal_dot: -hole });
        }
        out
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!("dimension must be at least 3, got {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grading {
    Uniform,
    /// Consecutive node offsets from the inner radius shrink by `ratio`:
    /// `r_i = r_0 + (R - r_0) ratio^{M-i}` for `i ≥ 1`.
    Geometric { ratio: f64 },
}

pub const MIN_ELEMENTS: usize = 16;
pub const DEFAULT_ELEMENTS: usize = 1024;
pub const DEFAULT_RATIO: f64 = 0.97;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n: usize,
    pub grading: Grading,
    pub nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(n: usize, inner: f64, outer: f64, elements: usize) -> Result<Self> {
        let h = (outer - inner) / elements as f64;
        let mut nodes: Vec<f64> = (0..=elements).map(|i| inner + h * i as f64).collect();
        nodes[elements] = outer;
        Self::from_nodes(n, Grading::Uniform, nodes)
    }

    pub fn geometric(n: usize, inner: f64, outer: f64, elements: usize, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(invalid(format!("geometric ratio must lie in (0, 1], got {ratio}")));
        }
        if ratio == 1.0 {
            return Self::uniform(n, inner, outer, elements);
        }
        let len = outer - inner;
        if elements > 0 && len * ratio.powi(elements as i32 - 1) <= 4.0 * f64::EPSILON * inner {
            return Err(invalid(format!(
                "geometric ratio {ratio} with {elements} elements shrinks the first element below \
                 floating-point resolution at r = {inner}; use fewer elements or a ratio closer to 1"
            )));
        }
        let mut nodes = Vec::with_capacity(elements + 1);
        nodes.push(inner);
        for i in 1..=elements {
            nodes.push(inner + len * ratio.powi((elements - i) as i32));
        }
        nodes[elements] = outer;
        Self::from_nodes(n, Grading::Geometric { ratio }, nodes)
    }

    /// Grid on the radial range of `d`.
    pub fn for_domain(d: &Domain, elements: usize, grading: Grading) -> Result<Self> {
        match grading {
            Grading::Uniform => Self::uniform(d.n, d.inner_radius(), d.radius(), elements),
            Grading::Geometric { ratio } => Self::geometric(d.n, d.inner_radius(), d.radius(), elements, ratio),
        }
    }

    fn from_nodes(n: usize, grading: Grading, nodes: Vec<f64>) -> Result<Self> {
        check_dimension(n)?;
        let grid = Self { n, grading, nodes };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements() < MIN_ELEMENTS {
            return Err(invalid(format!("grid needs at least {MIN_ELEMENTS} elements, got {}", self.elements())));
        }
        if self.nodes[0] < 0.0 || self.nodes.iter().any(|r| !r.is_finite()) {
            return Err(invalid("grid nodes must be finite and nonnegative"));
        }
        if let Some(i) = self.nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("grid nodes not strictly increasing at index {i}")));
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn inner(&self) -> f64 {
        self.nodes[0]
    }

    pub fn outer(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn smallest_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Node-preserving refinement to `2M` elements: uniform grids are
    /// bisected, geometric grids keep their ratio and extend toward `r_0`.
    pub fn refine(&self) -> Result<Self> {
        let m = 2 * self.elements();
        match self.grading {
            Grading::Uniform => {
                let mut nodes = Vec::with_capacity(m + 1);
                for w in self.nodes.windows(2) {
                    nodes.push(w[0]);
                    nodes.push(0.5 * (w[0] + w[1]));
                }
                nodes.push(self.outer());
                Self::from_nodes(self.n, self.grading, nodes)
            }
            Grading::Geometric { ratio } => Self::geometric(self.n, self.inner(), self.outer(), m, ratio),
        }
    }

    /// Checks that the grid spans the radial range of `d`.
    pub fn matches(&self, d: &Domain) -> Result<()> {
        let tol = 1e-12 * d.radius();
        if self.n != d.n || (self.inner() - d.inner_radius()).abs() > tol || (self.outer() - d.radius()).abs() > tol {
            return Err(invalid("grid does not match the domain's radial range or dimension"));
        }
        Ok(())
    }
}
