//! Adaptive Gauss–Kronrod quadrature on finite intervals, plus
//! Gauss–Legendre rules used for fixed-node time integrals.
//!
//! The adaptive driver bisects the interval with the largest error estimate
//! until the requested tolerance is met. Workspaces are created per call, so
//! concurrent use needs no synchronization.

use core::fmt;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Kronrod 15-point nodes on [0, 1] side (symmetric about 0).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Kronrod weights matching `XGK`.
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

/// Embedded 7-point Gauss weights (odd-indexed Kronrod nodes).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadError {
    /// The error estimate did not reach the tolerance within the interval
    /// budget.
    NonConvergence { estimate: f64, requested: f64 },
    /// Non-finite integrand value encountered.
    BadIntegrand(f64),
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonConvergence { estimate, requested } => write!(
                f,
                "quadrature error estimate {estimate:e} did not reach requested {requested:e}"
            ),
            Self::BadIntegrand(x) => write!(f, "integrand returned a non-finite value at {x}"),
        }
    }
}

impl std::error::Error for QuadError {}

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error of the quadrature itself.
    pub abs_err: f64,
    /// Certified bound on mass ignored beyond the truncation point, when the
    /// caller integrated a tail-cut domain. Zero for plain finite integrals.
    pub tail_bound: f64,
    pub evals: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// One K15 application on [a, b]: returns (value, error estimate, resabs).
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::BadIntegrand(center));
    }
    let mut result_kronrod = fc * WGK[7];
    let mut result_gauss = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];

    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for (j, &x) in XGK[..7].iter().enumerate() {
        let x1 = center - half * x;
        let x2 = center + half * x;
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite() {
            return Err(QuadError::BadIntegrand(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::BadIntegrand(x2));
        }
        fv[j] = f1;
        fv[14 - j] = f2;
        result_kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = result_kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for (j, &v) in fv.iter().enumerate() {
        if j != 7 {
            let w = WGK[j.min(14 - j)];
            resasc += w * (v - mean).abs();
        }
    }

    let value = result_kronrod * half;
    let resasc = resasc * half.abs();
    let resabs = resabs * half.abs();
    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * resabs;
    if err < round_off {
        err = round_off;
    }
    Ok((value, err))
}

/// Adaptive integration of `f` over the finite interval [a, b]. The initial
/// subdivision uses 16 uniform panels so that isolated narrow features are
/// seen before the error-driven refinement starts.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<QuadResult, QuadError> {
    let breaks: Vec<f64> = (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).collect();
    integrate_with_breaks(f, &breaks, rel_tol, abs_tol, max_panels)
}

/// Adaptive integration seeded with caller-supplied panel boundaries
/// (sorted, deduplicated). Peaked kernel integrands pass breakpoints
/// clustered around their known maxima.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<QuadResult, QuadError> {
    if breaks.len() < 2 || breaks.first() == breaks.last() {
        return Ok(QuadResult::default());
    }
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    let mut total_value = 0.0f64;
    let mut total_err = 0.0f64;
    for pair in breaks.windows(2) {
        if pair[1] <= pair[0] {
            continue;
        }
        let (v, e) = qk15(&f, pair[0], pair[1])?;
        evals += 15;
        total_value += v;
        total_err += e;
        heap.push(Panel { a: pair[0], b: pair[1], value: v, err: e });
    }

    while total_err > abs_tol.max(rel_tol * total_value.abs()) && heap.len() < max_panels {
        let worst = heap.pop().expect("heap cannot be empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating point resolution; stop refining.
            heap.push(worst);
            break;
        }
        let (v1, e1) = qk15(&f, worst.a, mid)?;
        let (v2, e2) = qk15(&f, mid, worst.b)?;
        evals += 30;
        total_value += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2 });
    }

    // Recompute the totals from the panels to shed accumulated cancellation.
    total_value = heap.iter().map(|p| p.value).sum();
    total_err = heap.iter().map(|p| p.err).sum();

    if total_err > abs_tol.max(rel_tol * total_value.abs()) * 100.0 {
        return Err(QuadError::NonConvergence {
            estimate: total_err,
            requested: abs_tol.max(rel_tol * total_value.abs()),
        });
    }
    Ok(QuadResult { value: total_value, abs_err: total_err, tail_bound: 0.0, evals })
}

/// Sorted, deduplicated panel boundaries covering [lo, hi] with extra nodes
/// clustered around each (center, width) feature of the integrand.
pub fn peak_breaks(features: &[(f64, f64)], lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    for i in 1..8 {
        pts.push(lo + (hi - lo) * i as f64 / 8.0);
    }
    for &(center, width) in features {
        for m in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
            let x = center + m * width;
            if x > lo && x < hi {
                pts.push(x);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    pts
}

/// Non-adaptive K15 sweep over consecutive panels given by `breakpoints`.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
) -> Result<QuadResult, QuadError> {
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for pair in breakpoints.windows(2) {
        let (v, e) = qk15(&f, pair[0], pair[1])?;
        value += v;
        err += e;
        evals += 15;
    }
    Ok(QuadResult { value, abs_err: err, tail_bound: 0.0, evals })
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence. Deterministic to the last bit for a given `n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((-x, w));
        if n - 1 - i != i {
            rule.push((x, w));
        }
    }
    rule.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    rule
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Maps the [-1, 1] rule onto [a, b].
pub fn scale_rule(rule: &[(f64, f64)], a: f64, b: f64) -> Vec<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.iter().map(|&(x, w)| (c + h * x, w * h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        // K15 integrates degree-22 polynomials exactly; x^8 over [0,2] is easy.
        let r = integrate(|x| x.powi(8), 0.0, 2.0, 1e-13, 0.0, 100).unwrap();
        assert!((r.value - 2.0f64.powi(9) / 9.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-12, 0.0, 500).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn peaked_integrand_needs_adaptivity() {
        // Narrow Gaussian away from the center of the interval.
        let s = 1e-3;
        let r = integrate(
            |x: f64| (-(x - 0.1234f64).powi(2) / (2.0 * s * s)).exp(),
            0.0,
            10.0,
            1e-10,
            1e-300,
            4000,
        )
        .unwrap();
        let exact = (2.0 * std::f64::consts::PI).sqrt() * s;
        assert!((r.value - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn endpoint_singularity_integrable() {
        // ∫₀¹ x^{-1/2} dx = 2; nodes never touch the endpoint.
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 1e-12, 5000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn gauss_legendre_rule_integrates_polynomials() {
        let rule = gauss_legendre(16);
        assert_eq!(rule.len(), 16);
        // Degree 31 exactness: check x^30 over [-1, 1].
        let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(30)).sum();
        assert!((got - 2.0 / 31.0).abs() < 1e-14);
        // Weights sum to the interval length.
        let wsum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((wsum - 2.0).abs() < 1e-13);
    }

    #[test]
    fn scaled_rule_matches_adaptive() {
        let rule = gauss_legendre(24);
        let scaled = scale_rule(&rule, 0.0, 3.0);
        let by_rule: f64 = scaled.iter().map(|&(x, w)| w * (x).sin()).sum();
        let exact = 1.0 - 3.0f64.cos();
        assert!((by_rule - exact).abs() < 1e-13);
    }
}
