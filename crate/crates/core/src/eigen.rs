//! Eigenpairs of a real symmetric tridiagonal matrix: Sturm-sequence
//! bisection for the eigenvalues, inverse iteration for the vectors.

use crate::error::{Error, Result};
use crate::tridiag::Tridiagonal;

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Decreasing.
    pub values: Vec<f64>,
    /// Unit Euclidean norm, one per value.
    pub vectors: Vec<Vec<f64>>,
    /// Inverse-iteration sweeps used for each vector.
    pub sweeps: Vec<usize>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if off.len() + 1 != diag.len() {
            return Err(Error::InvalidSpec(format!(
                "off-diagonal has {} entries for a diagonal of {}",
                off.len(),
                diag.len()
            )));
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_tridiagonal(&self) -> Tridiagonal {
        Tridiagonal { lower: self.off.clone(), diag: self.diag.clone(), upper: self.off.clone() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.to_tridiagonal().mul_vec(x)
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (negative pivots of
    /// `T - x I = L D L^T`).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.len();
        let tiny = f64::MIN_POSITIVE / f64::EPSILON;
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let e2 = if i > 0 { self.off[i - 1] * self.off[i - 1] } else { 0.0 };
            q = self.diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection.
    fn bisect_eigenvalue(&self, j: usize, lo: f64, hi: f64) -> f64 {
        let (mut a, mut b) = (lo, hi);
        let scale = lo.abs().max(hi.abs());
        for _ in 0..2000 {
            let m = 0.5 * (a + b);
            if b - a <= 2.0 * f64::EPSILON * (a.abs().max(b.abs())) + 4.0 * f64::MIN_POSITIVE || m <= a || m >= b {
                break;
            }
            if b - a <= 1e-3 * f64::EPSILON * scale {
                break;
            }
            if self.count_below(m) > j {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    /// The `k` largest eigenpairs, eigenvalues decreasing.
    pub fn largest(&self, k: usize) -> Result<EigenPairs> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::InvalidSpec(format!("requested {k} eigenpairs of a {n} x {n} matrix")));
        }
        let (glo, ghi) = self.gershgorin();
        let pad = 1e-12 * glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
        let (glo, ghi) = (glo - pad, ghi + pad);
        let norm = glo.abs().max(ghi.abs());
        let mut values = Vec::with_capacity(k);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut sweeps = Vec::with_capacity(k);
        for i in 0..k {
            let lambda = self.bisect_eigenvalue(n - 1 - i, glo, ghi);
            let (v, used) = self.inverse_iteration(lambda, norm, &vectors)?;
            values.push(lambda);
            vectors.push(v);
            sweeps.push(used);
        }
        Ok(EigenPairs { values, vectors, sweeps })
    }

    /// Eigenvector for the (already accurate) eigenvalue `lambda`, kept
    /// orthogonal to `previous`.
    fn inverse_iteration(&self, lambda: f64, norm: f64, previous: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
        let n = self.len();
        let perturb = 4.0 * f64::EPSILON * norm.max(f64::MIN_POSITIVE);
        let a = self.to_tridiagonal();
        let lu = match a.factor_shifted(lambda + perturb) {
            Ok(lu) => lu,
            Err(_) => a.factor_shifted(lambda + 16.0 * perturb)?,
        };
        // deterministic start vector with no special structure
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
        normalize(&mut v);
        let tol = 1e3 * f64::EPSILON * norm * (n as f64).sqrt();
        let mut residual = f64::INFINITY;
        for sweep in 1..=50 {
            let mut w = lu.solve(&v);
            for p in previous {
                let c = dot(&w, p);
                for (wi, pi) in w.iter_mut().zip(p) {
                    *wi -= c * pi;
                }
            }
            if normalize(&mut w) == 0.0 {
                return Err(Error::ConvergenceFailure(format!(
                    "inverse iteration collapsed at lambda = {lambda} after {sweep} sweeps"
                )));
            }
            let tv = self.mul_vec(&w);
            residual = tv.iter().zip(&w).map(|(t, x)| (t - lambda * x).powi(2)).sum::<f64>().sqrt();
            let change = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let flipped = v.iter().zip(&w).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            v = w;
            if residual <= tol && change.min(flipped) <= 1e-10 {
                return Ok((v, sweep));
            }
        }
        if residual <= 1e3 * tol {
            return Ok((v, 50));
        }
        Err(Error::ConvergenceFailure(format!(
            "inverse iteration for lambda = {lambda} stalled after 50 sweeps, residual {residual:e} (tolerance {tol:e})"
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = dot(v, v).sqrt();
    if nrm > 0.0 && nrm.is_finite() {
        for x in v.iter_mut() {
            *x /= nrm;
        }
        nrm
    } else {
        0.0
    }
}
