//! Piecewise linear radial finite elements with the volume factor
//! `ω_n r^{n-1}`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::constants::{critical_exponent, omega};
use crate::error::{invalid, Result};
use crate::linalg::{SpdFactor, SymTridiag};
use crate::quadrature::GaussLegendre;
use crate::weights::{Domain, RadialGrid, Weight};

/// Nodal values on a radial grid with zero trace on the Dirichlet boundary
/// (`r = R`, and `r = r_0` when `r_0 > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFunction {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes.len() {
            return Err(invalid(format!("{} values for {} nodes", values.len(), grid.nodes.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("discrete function values must be finite"));
        }
        let f = Self { grid, values };
        let (lo, hi) = f.free_range();
        if f.values[hi..].iter().any(|&v| v != 0.0) || f.values[..lo].iter().any(|&v| v != 0.0) {
            return Err(invalid("boundary values must be exactly zero"));
        }
        Ok(f)
    }

    /// Interpolates `f` at the nodes and zeroes the boundary values.
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = grid.nodes.iter().map(|&r| f(r)).collect();
        let (lo, hi) = free_range(&grid);
        values[..lo].fill(0.0);
        values[hi..].fill(0.0);
        Self { grid, values }
    }

    /// Builds a function from values at the free nodes.
    pub fn from_free(grid: RadialGrid, free: &[f64]) -> Self {
        let (lo, _) = free_range(&grid);
        let mut values = vec![0.0; grid.nodes.len()];
        values[lo..lo + free.len()].copy_from_slice(free);
        Self { grid, values }
    }

    /// Half-open range of free (non-Dirichlet) node indices.
    pub fn free_range(&self) -> (usize, usize) {
        free_range(&self.grid)
    }

    pub fn free_values(&self) -> &[f64] {
        let (lo, hi) = self.free_range();
        &self.values[lo..hi]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Linear interpolation; zero outside the grid.
    pub fn eval(&self, r: f64) -> f64 {
        let nodes = &self.grid.nodes;
        if r < nodes[0] || r > nodes[nodes.len() - 1] {
            return 0.0;
        }
        let i = nodes.partition_point(|&x| x <= r).clamp(1, nodes.len() - 1) - 1;
        let t = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Re-expresses this function on `grid` by nodal interpolation.
    pub fn transfer(&self, grid: &RadialGrid) -> Self {
        Self::from_fn(grid.clone(), |r| self.eval(r))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn free_range(grid: &RadialGrid) -> (usize, usize) {
    let lo = if grid.inner() > 0.0 { 1 } else { 0 };
    (lo, grid.nodes.len() - 1)
}

const ELEMENT_POINTS: usize = 8;

pub(crate) fn element_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(ELEMENT_POINTS))
}

/// Quadrature of `∫|u|^q ω_n r^{n-1} dr` and its derivatives for P1 `u`.
#[derive(Debug, Clone)]
pub struct QForm {
    pub q: f64,
    xi: Vec<f64>,
    /// Per element, per point: Gauss weight × h × ω_n r^{n-1}.
    weights: Vec<Vec<f64>>,
}

impl QForm {
    fn new(grid: &RadialGrid, q: f64, w_n: f64) -> Self {
        let rule = element_rule();
        let n = grid.n as i32;
        let weights = grid
            .nodes
            .windows(2)
            .map(|e| {
                let h = e[1] - e[0];
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &gw)| gw * h * w_n * (e[0] + h * x).powi(n - 1))
                    .collect()
            })
            .collect();
        Self { q, xi: rule.nodes.clone(), weights }
    }

    /// `∫|u|^q` for full nodal vectors.
    pub fn norm_pow(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for (e, ws) in self.weights.iter().enumerate() {
            let (a, b) = (u[e], u[e + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            for (&x, &w) in self.xi.iter().zip(ws) {
                s += w * (a + (b - a) * x).abs().powf(self.q);
            }
        }
        s
    }

    /// `(∫|u|^{p-2} u φ_i)_i` over all nodes, for exponent `p`.
    pub fn power_load(&self, u: &[f64], p: f64) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        for (e, ws) in self.weights.iter().enumerate() {
            let (a, b) = (u[e], u[e + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            for (&x, &w) in self.xi.iter().zip(ws) {
                let v = a + (b - a) * x;
                let f = w * v.abs().powf(p - 2.0) * v;
                g[e] += f * (1.0 - x);
                g[e + 1] += f * x;
            }
        }
        g
    }

    /// Tridiagonal `(∫|u|^{q-2} φ_i φ_j)` over all nodes.
    pub fn linearized(&self, u: &[f64]) -> SymTridiag {
        let mut m = SymTridiag::zeros(u.len());
        for (e, ws) in self.weights.iter().enumerate() {
            let (a, b) = (u[e], u[e + 1]);
            for (&x, &w) in self.xi.iter().zip(ws) {
                let v = a + (b - a) * x;
                let f = w * v.abs().powf(self.q - 2.0);
                m.diag[e] += f * (1.0 - x) * (1.0 - x);
                m.diag[e + 1] += f * x * x;
                m.off[e] += f * x * (1.0 - x);
            }
        }
        m
    }
}

/// Assembled stiffness and mass forms on the free nodes.
#[derive(Debug, Clone)]
pub struct Forms {
    pub grid: RadialGrid,
    pub stiffness: SymTridiag,
    pub mass: SymTridiag,
    /// `∫_e p ω_n r^{n-1} dr / h_e²`, the element energy per squared jump.
    pub element_stiffness: Vec<f64>,
    pub qform: QForm,
    pub offset: usize,
    factor: OnceLock<std::result::Result<SpdFactor, String>>,
}

/// Full-node stiffness and mass matrices.
pub(crate) fn element_matrices(
    grid: &RadialGrid,
    coeff: impl Fn(f64) -> f64,
    w_n: f64,
) -> (SymTridiag, SymTridiag, Vec<f64>) {
    let rule = element_rule();
    let n = grid.n as i32;
    let nodes = grid.nodes.len();
    let mut k = SymTridiag::zeros(nodes);
    let mut m = SymTridiag::zeros(nodes);
    let mut per_element = Vec::with_capacity(nodes - 1);
    for (e, r) in grid.nodes.windows(2).enumerate() {
        let h = r[1] - r[0];
        let (mut sk, mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0, 0.0);
        for (&x, &gw) in rule.nodes.iter().zip(&rule.weights) {
            let rr = r[0] + h * x;
            let vol = gw * h * w_n * rr.powi(n - 1);
            sk += vol * coeff(rr);
            m00 += vol * (1.0 - x) * (1.0 - x);
            m01 += vol * x * (1.0 - x);
            m11 += vol * x * x;
        }
        let ke = sk / (h * h);
        per_element.push(ke);
        k.diag[e] += ke;
        k.diag[e + 1] += ke;
        k.off[e] -= ke;
        m.diag[e] += m00;
        m.diag[e + 1] += m11;
        m.off[e] += m01;
    }
    (k, m, per_element)
}

pub(crate) fn restrict(a: &SymTridiag, lo: usize, hi: usize) -> SymTridiag {
    SymTridiag { diag: a.diag[lo..hi].to_vec(), off: a.off[lo..hi - 1].to_vec() }
}

/// Assembles the weighted stiffness, mass and q-forms of `w` on `grid`.
pub fn assemble(w: &Weight, d: &Domain, grid: &RadialGrid) -> Result<Forms> {
    grid.matches(d)?;
    w.ensure_positive_on(d.radius())?;
    let w_n = omega(d.n)?;
    let (k, m, per_element) = element_matrices(grid, |r| w.profile(r), w_n);
    let (lo, hi) = free_range(grid);
    Ok(Forms {
        grid: grid.clone(),
        stiffness: restrict(&k, lo, hi),
        mass: restrict(&m, lo, hi),
        element_stiffness: per_element,
        qform: QForm::new(grid, critical_exponent(d.n), w_n),
        offset: lo,
        factor: OnceLock::new(),
    })
}

impl Forms {
    pub fn free_len(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn q(&self) -> f64 {
        self.qform.q
    }

    pub fn to_full(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.nodes.len()];
        full[self.offset..self.offset + free.len()].copy_from_slice(free);
        full
    }

    /// `uᵀKu` for free values, summed element by element.
    pub fn stiffness_energy(&self, free: &[f64]) -> f64 {
        let full = self.to_full(free);
        self.element_stiffness.iter().enumerate().map(|(e, c)| c * (full[e + 1] - full[e]).powi(2)).sum()
    }

    pub fn to_free<'a>(&self, full: &'a [f64]) -> &'a [f64] {
        &full[self.offset..self.offset + self.free_len()]
    }

    /// Cached LDLᵀ factors of the stiffness form.
    pub fn stiffness_factor(&self) -> Result<&SpdFactor> {
        self.factor
            .get_or_init(|| self.stiffness.factor_spd().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| crate::error::Error::Singular(e.clone()))
    }

    /// `(K - λM) u`.
    pub fn apply(&self, u: &[f64], lambda: f64) -> Vec<f64> {
        let mut y = self.stiffness.matvec(u);
        if lambda != 0.0 {
            for (yi, mi) in y.iter_mut().zip(self.mass.matvec(u)) {
                *yi -= lambda * mi;
            }
        }
        y
    }

    /// `‖u‖_q^q` for free values.
    pub fn norm_q_pow(&self, u: &[f64]) -> f64 {
        self.qform.norm_pow(&self.to_full(u))
    }

    /// `(uᵀKu - λ uᵀMu) / ‖u‖_q²` for free values.
    pub fn quotient(&self, u: &[f64], lambda: f64) -> f64 {
        let a = crate::linalg::dot(u, &self.apply(u, lambda));
        a / self.norm_q_pow(u).powf(2.0 / self.q())
    }

    /// Squared dual norm `vᵀK⁻¹v`.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        let x = self.stiffness_factor()?.solve(v);
        Ok(crate::linalg::dot(v, &x).max(0.0).sqrt())
    }

    /// Radius enclosing 90% of `∫p|u'|²`.
    pub fn concentration_radius(&self, full: &[f64], fraction: f64) -> f64 {
        let energies: Vec<f64> = self
            .element_stiffness
            .iter()
            .enumerate()
            .map(|(e, c)| c * (full[e + 1] - full[e]).powi(2))
            .collect();
        let total: f64 = energies.iter().sum();
        let nodes = &self.grid.nodes;
        if !(total > 0.0) {
            return self.grid.outer();
        }
        let target = fraction * total;
        let mut acc = 0.0;
        for (e, en) in energies.iter().enumerate() {
            if acc + en >= target && *en > 0.0 {
                let t = ((target - acc) / en).clamp(0.0, 1.0);
                let r = nodes[e] + t * (nodes[e + 1] - nodes[e]);
                return r.max(f64::MIN_POSITIVE);
            }
            acc += en;
        }
        self.grid.outer()
    }
}

/// `∫p|u'|² ω_n r^{n-1}` with the element stiffness of `forms`.
pub fn dirichlet_energy(forms: &Forms, u: &DiscreteFunction) -> f64 {
    forms
        .element_stiffness
        .iter()
        .enumerate()
        .map(|(e, c)| c * (u.values[e + 1] - u.values[e]).powi(2))
        .sum()
}
