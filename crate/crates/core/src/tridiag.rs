//! Tridiagonal linear systems: LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// A tridiagonal matrix stored by diagonals: `lower[i] = A[i+1][i]`,
/// `diag[i] = A[i][i]`, `upper[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Factorizes `A - shift I`.
    pub fn factor_shifted(&self, shift: f64) -> Result<TridiagLu> {
        let mut m = self.clone();
        for d in &mut m.diag {
            *d -= shift;
        }
        TridiagLu::new(m)
    }

    pub fn factor(&self) -> Result<TridiagLu> {
        TridiagLu::new(self.clone())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self.factor()?;
        Ok(lu.solve(rhs))
    }
}

/// `P A = L U` where `U` has two superdiagonals, as in LAPACK `gttrf`.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn new(a: Tridiagonal) -> Result<Self> {
        let n = a.len();
        let Tridiagonal { lower: mut dl, diag: mut d, upper: mut du } = a;
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::ConvergenceFailure(format!("singular tridiagonal matrix at row {i}")));
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            return Err(Error::ConvergenceFailure(format!("singular tridiagonal matrix at row {}", n - 1)));
        }
        Ok(TridiagLu { dl, d, du, du2, swapped })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        if n == 0 {
            return b;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        b
    }
}
