//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Intervals live in a max-heap keyed on their error estimate; the worst one
//! is bisected until the summed error meets the tolerance. Caller-supplied
//! break points seed the initial partition, which is how the steady and
//! family integrands tell the integrator where they get steep.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// One 15-point Kronrod evaluation with the QUADPACK error heuristic.
fn qk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` (either orientation). Interior `breaks`
/// outside the open interval are ignored.
pub fn integrate_with_breaks(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut points = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    points.extend(inner);
    points.push(hi);

    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in points.windows(2) {
        let (value, error) = qk15(&mut f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Piece { a: w[0], b: w[1], value, error });
    }
    if !total.is_finite() {
        return Err(Error::QuadratureFailure { estimate: total, error: total_err });
    }

    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure { estimate: sign * total, error: total_err });
        }
        let worst = heap.pop().expect("heap holds at least one piece");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            if total_err <= 10.0 * tol {
                heap.push(worst);
                break;
            }
            return Err(Error::QuadratureFailure { estimate: sign * total, error: total_err });
        }
        let (v1, e1) = qk15(&mut f, worst.a, mid);
        let (v2, e2) = qk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        // re-sum periodically to keep cancellation from drifting the running totals
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    if !value.is_finite() {
        return Err(Error::QuadratureFailure { estimate: value, error });
    }
    Ok(QuadResult { value: sign * value, error, intervals: heap.len() })
}

pub fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_with_breaks(f, a, b, &[], opts)
}

/// Composite Simpson rule on `panels` (even) equal panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 10.5 - 9.0, max_relative = 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let opts = QuadOptions::default();
        let a = integrate(f64::exp, 0.0, 1.0, opts).unwrap().value;
        let b = integrate(f64::exp, 1.0, 0.0, opts).unwrap().value;
        assert_eq!(a, -b);
        assert_relative_eq!(a, std::f64::consts::E - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn square_root_endpoint() {
        let r = integrate(|x| (1.0 - x * x).sqrt(), -1.0, 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn inverse_square_root_singularity() {
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn narrow_peak_with_break_point() {
        // Lorentzian of width 1e-7 centred on 0.3
        let d: f64 = 1e-14;
        let f = |x: f64| 1.0 / ((x - 0.3) * (x - 0.3) + d);
        let exact = ((0.7) / d.sqrt()).atan() / d.sqrt() + ((0.3) / d.sqrt()).atan() / d.sqrt();
        let r = integrate_with_breaks(f, 0.0, 1.0, &[0.3], QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, exact, max_relative = 1e-10);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = simpson(f64::sin, 0.0, std::f64::consts::PI, 1000);
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn divergent_integrand_reports_failure() {
        let opts = QuadOptions { max_intervals: 200, ..QuadOptions::default() };
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, opts);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
