//! Banded linear algebra for radial finite elements and a small dense
//! least-squares solver for expansion fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i]` = entry `(i, i+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], off: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// `xᵀ A x`.
    pub fn form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &SymTridiag) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().map(|a| a * s).collect(),
            off: self.off.iter().map(|a| a * s).collect(),
        }
    }

    /// LDLᵀ factorization; fails unless the matrix is positive definite.
    pub fn factor_spd(&self) -> Result<SpdFactor> {
        let n = self.dim();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut di = self.diag[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::Singular(format!("non-positive pivot {di:e} at row {i}")));
            }
            d[i] = di;
            if i + 1 < n {
                l[i] = self.off[i] / di;
            }
        }
        Ok(SpdFactor { d, l })
    }
}

/// LDLᵀ factors of a symmetric positive definite tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl SpdFactor {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// Solves a general tridiagonal system with partial pivoting.
/// `sub[i]` = entry `(i+1, i)`, `sup[i]` = entry `(i, i+1)`.
pub fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    du.push(0.0);
    let mut du2 = vec![0.0; n];
    let mut dl = sub.to_vec();
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
            let m = dl[i] / d[i];
            dl[i] = m;
            d[i + 1] -= m * du[i];
            b[i + 1] -= m * b[i];
        } else {
            let m = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = m;
            let t = du[i];
            du[i] = d[i + 1];
            d[i + 1] = t - m * d[i + 1];
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] *= -m;
            }
            b.swap(i, i + 1);
            b[i + 1] -= m * b[i];
        }
    }
    if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
        return Err(Error::Singular(format!("zero pivot at row {}", n - 1)));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n > 1 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution of `Σ_j c_j columns[j] ≈ y` by Householder QR on
/// unit-norm scaled columns. Returns coefficients, residual 2-norm and the
/// ratio of the smallest to largest diagonal entry of R.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let m = y.len();
    let p = columns.len();
    if p == 0 || m < p {
        return Err(Error::IllConditioned(format!("{m} samples for {p} unknowns")));
    }
    let scales: Vec<f64> = columns.iter().map(|c| dot(c, c).sqrt()).collect();
    if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::IllConditioned("zero or non-finite basis column".into()));
    }
    // Column-major copy of the scaled design matrix.
    let mut a: Vec<Vec<f64>> = columns.iter().zip(&scales).map(|(c, s)| c.iter().map(|v| v / s).collect()).collect();
    let mut b = y.to_vec();
    for j in 0..p {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::IllConditioned(format!("rank deficient at column {j}")));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j) {
                let s = 2.0 * dot(&v, &col[j..]) / vnorm2;
                for (ci, vi) in col[j..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            let s = 2.0 * dot(&v, &b[j..]) / vnorm2;
            for (bi, vi) in b[j..].iter_mut().zip(&v) {
                *bi -= s * vi;
            }
        }
    }
    let diag: Vec<f64> = (0..p).map(|j| a[j][j].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = dmin / dmax;
    if rcond < 1e-13 {
        return Err(Error::IllConditioned(format!("reciprocal condition {rcond:e}")));
    }
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = b[j];
        for k in j + 1..p {
            s -= a[k][j] * coef[k];
        }
        coef[j] = s / a[j][j];
    }
    let residual = b[p..].iter().map(|v| v * v).sum::<f64>().sqrt();
    for (c, s) in coef.iter_mut().zip(&scales) {
        *c /= s;
    }
    Ok((coef, residual, rcond))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_roundtrip() {
        let a = SymTridiag { diag: vec![4.0, 5.0, 6.0, 7.0], off: vec![1.0, -2.0, 0.5] };
        let x = vec![1.0, -1.0, 2.0, 0.25];
        let b = a.matvec(&x);
        let y = a.factor_spd().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn spd_rejects_indefinite() {
        let a = SymTridiag { diag: vec![1.0, -1.0], off: vec![0.0] };
        assert!(a.factor_spd().is_err());
    }

    #[test]
    fn pivoting_solver_handles_zero_diagonal() {
        // [[0,1,0],[1,0,1],[0,1,1]]
        let sub = [1.0, 1.0];
        let diag = [0.0, 0.0, 1.0];
        let sup = [1.0, 1.0];
        let x = [2.0, -1.0, 3.0];
        let rhs = [x[1], x[0] + x[2], x[1] + x[2]];
        let y = solve_tridiag(&sub, &diag, &sup, &rhs).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14, "{y:?}");
        }
    }

    #[test]
    fn pivoting_solver_random_nonsymmetric() {
        let n = 9;
        let sub: Vec<f64> = (0..n - 1).map(|i| ((i * 7 % 5) as f64) - 2.5).collect();
        let sup: Vec<f64> = (0..n - 1).map(|i| ((i * 3 % 4) as f64) - 1.0).collect();
        let diag: Vec<f64> = (0..n).map(|i| ((i * 5 % 3) as f64) - 0.5).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = diag[i] * x[i];
            if i > 0 {
                rhs[i] += sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                rhs[i] += sup[i] * x[i + 1];
            }
        }
        let y = solve_tridiag(&sub, &diag, &sup, &rhs).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn least_squares_recovers_exact_model() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-3).collect();
        let cols = vec![vec![1.0; 10], xs.clone(), xs.iter().map(|x| x.powf(1.5)).collect()];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x + 0.5 * x.powf(1.5)).collect();
        let (c, res, _) = least_squares(&cols, &y).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12);
        assert!((c[1] + 3.0).abs() < 1e-8);
        assert!((c[2] - 0.5).abs() < 1e-6);
        assert!(res < 1e-12);
    }

    #[test]
    fn least_squares_rejects_collinear() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        assert!(least_squares(&cols, &[1.0, 1.0, 1.0]).is_err());
    }
}
