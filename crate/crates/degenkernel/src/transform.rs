//! Change of variables from general coefficients (a, b) to the model
//! operator: the increasing map φ with inverse ψ, the drift index ν, the
//! residual drift d̃ (vanishing at 0), the gauge factor θ and the bounded
//! potential V, together with numerical validation of the admissibility
//! conditions on (a, b).
//!
//! Built bundles are immutable and cheap to share across threads; bundle
//! construction itself is single-threaded.

use core::fmt;
use std::sync::Arc;

use crate::expr::Expr;
use crate::model_kernel::ModelIndex;
use crate::quad::{self, QuadError};

pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion and drift coefficients a(x) > 0, b(x) on (0, ∞), with optional
/// analytic derivatives (numeric differentiation is the fallback).
#[derive(Clone)]
pub struct Coefficients {
    pub a: CoefFn,
    pub b: CoefFn,
    pub a_prime: Option<CoefFn>,
    pub b_prime: Option<CoefFn>,
    preset: Option<Preset>,
}

#[derive(Clone)]
enum Preset {
    Power { alpha: f64 },
    PowerDrift { alpha: f64, beta: f64, phi: CoefFn, phi_prime: CoefFn },
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.preset {
            Some(Preset::Power { alpha }) => write!(f, "Coefficients(power, alpha={alpha})"),
            Some(Preset::PowerDrift { alpha, beta, .. }) => {
                write!(f, "Coefficients(power+drift, alpha={alpha}, beta={beta})")
            }
            None => write!(f, "Coefficients(general)"),
        }
    }
}

impl Coefficients {
    /// The power family a = x^α, b ≡ 0 with every transform quantity in
    /// closed form. Requires α ∈ [0, 2) for kernel construction (α = 2 is
    /// accepted by the boundary classifier only).
    pub fn power(alpha: f64) -> Self {
        Self {
            a: Arc::new(move |x: f64| x.powf(alpha)),
            b: Arc::new(|_| 0.0),
            a_prime: Some(Arc::new(move |x: f64| {
                if alpha == 0.0 {
                    0.0
                } else {
                    alpha * x.powf(alpha - 1.0)
                }
            })),
            b_prime: Some(Arc::new(|_| 0.0)),
            preset: Some(Preset::Power { alpha }),
        }
    }

    /// The drifted power family a = x^α, b = x^β φ(x), with β ≥ 1 and φ
    /// smooth, bounded, decaying, nonzero at 0.
    pub fn power_drift(alpha: f64, beta: f64, phi: CoefFn, phi_prime: CoefFn) -> Self {
        let phi_b = phi.clone();
        let phi_d = phi.clone();
        let phi_dp = phi_prime.clone();
        Self {
            a: Arc::new(move |x: f64| x.powf(alpha)),
            b: Arc::new(move |x: f64| x.powf(beta) * phi_b(x)),
            a_prime: Some(Arc::new(move |x: f64| {
                if alpha == 0.0 {
                    0.0
                } else {
                    alpha * x.powf(alpha - 1.0)
                }
            })),
            b_prime: Some(Arc::new(move |x: f64| {
                beta * x.powf(beta - 1.0) * phi_d(x) + x.powf(beta) * phi_dp(x)
            })),
            preset: Some(Preset::PowerDrift { alpha, beta, phi, phi_prime }),
        }
    }

    pub fn from_callables(
        a: CoefFn,
        b: CoefFn,
        a_prime: Option<CoefFn>,
        b_prime: Option<CoefFn>,
    ) -> Self {
        Self { a, b, a_prime, b_prime, preset: None }
    }

    /// Coefficients from parsed expressions; derivatives fall back to
    /// central differences of the expressions.
    pub fn from_exprs(a: &Expr, b: &Expr) -> Self {
        let ae = a.clone();
        let be = b.clone();
        let ad = a.clone();
        let bd = b.clone();
        Self {
            a: Arc::new(move |x: f64| ae.eval(x).unwrap_or(f64::NAN)),
            b: Arc::new(move |x: f64| be.eval(x).unwrap_or(f64::NAN)),
            a_prime: Some(Arc::new(move |x: f64| {
                let h = (Expr::default_diff_step(x)).min(0.5 * x);
                ad.diff_num(x, h).unwrap_or(f64::NAN)
            })),
            b_prime: Some(Arc::new(move |x: f64| {
                let h = (Expr::default_diff_step(x)).min(0.5 * x);
                bd.diff_num(x, h).unwrap_or(f64::NAN)
            })),
            preset: None,
        }
    }

    pub fn a(&self, x: f64) -> f64 {
        (self.a)(x)
    }

    pub fn b(&self, x: f64) -> f64 {
        (self.b)(x)
    }

    pub fn a_prime(&self, x: f64) -> f64 {
        match &self.a_prime {
            Some(f) => f(x),
            None => {
                let h = Expr::default_diff_step(x).min(0.5 * x);
                ((self.a)(x + h) - (self.a)(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn b_prime(&self, x: f64) -> f64 {
        match &self.b_prime {
            Some(f) => f(x),
            None => {
                let h = Expr::default_diff_step(x).min(0.5 * x);
                ((self.b)(x + h) - (self.b)(x - h)) / (2.0 * h)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformError {
    /// ∫₀ a^{-1/2} diverges (the diffusion vanishes too fast at 0).
    Condition1Violated(String),
    /// The drift limit does not stabilize.
    Condition2NonConvergent(String),
    /// ν ≥ 1: entrance boundary, outside the constructible regime.
    NuOutOfRange(f64),
    /// ψ requested outside the covered range.
    PsiOutOfRange(f64),
    /// Coefficient evaluation failed (domain error / non-finite).
    BadCoefficient(f64),
    Quad(QuadError),
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Condition1Violated(d) => write!(f, "Condition 1 violated: {d}"),
            Self::Condition2NonConvergent(d) => write!(f, "Condition 2 violated: {d}"),
            Self::NuOutOfRange(v) => write!(
                f,
                "nu = {v} >= 1: 0 is an entrance boundary, kernel construction unsupported"
            ),
            Self::PsiOutOfRange(z) => write!(f, "psi({z}) outside the covered range"),
            Self::BadCoefficient(x) => write!(f, "coefficient evaluation failed near x = {x}"),
            Self::Quad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TransformError {}

impl From<QuadError> for TransformError {
    fn from(e: QuadError) -> Self {
        Self::Quad(e)
    }
}

const CACHE_LO: f64 = 1e-8;
const CACHE_HI: f64 = 1e4;
const CACHE_NODES: usize = 512;

/// Monotone accumulated-integral cache on a fixed log grid.
struct IntegralCache {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl IntegralCache {
    fn node_below(&self, x: f64) -> Option<usize> {
        if x < self.nodes[0] {
            return None;
        }
        let mut lo = 0usize;
        let mut hi = self.nodes.len() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.nodes[mid] <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    }
}

/// The assembled transform: φ, ψ, ν, d̃, θ, V and the estimated sup of |V|.
pub struct TransformBundle {
    coeffs: Coefficients,
    nu: ModelIndex,
    /// Condition-2 limit (= ν - 1/2); d(x) is centered by it.
    drift_limit: f64,
    /// Detected vanishing order of a at 0 (endpoint substitution exponent).
    vanish_order: f64,
    /// Cache of the inner integral I(x) = ∫₀^x a^{-1/2}. None for presets.
    inner: Option<IntegralCache>,
    /// Cache of ∫_{CACHE_LO}^z d̃(u)/(2u) du on the same grid.
    theta_integral: Option<IntegralCache>,
    v_sup: f64,
    preset: Option<Preset>,
}

impl fmt::Debug for TransformBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransformBundle(nu={}, v_sup={})", self.nu.get(), self.v_sup)
    }
}

/// Detects α̂ with a(x) ~ x^α̂ near 0 from two small samples.
fn detect_vanish_order(coeffs: &Coefficients) -> Result<f64, TransformError> {
    let x1 = 1e-6;
    let x2 = 4e-6;
    let a1 = coeffs.a(x1);
    let a2 = coeffs.a(x2);
    if !(a1 > 0.0) || !(a2 > 0.0) || !a1.is_finite() || !a2.is_finite() {
        return Err(TransformError::BadCoefficient(x1));
    }
    let order = (a2 / a1).ln() / (x2 / x1).ln();
    Ok(order.clamp(0.0, 4.0))
}

/// ∫₀^x a(s)^{-1/2} ds with the endpoint handled by s = σ^p, p = 2/(2-α̂).
fn inner_integral_from_zero(
    coeffs: &Coefficients,
    x: f64,
    vanish_order: f64,
) -> Result<f64, TransformError> {
    let p = (2.0 / (2.0 - vanish_order.min(1.9))).clamp(1.0, 16.0);
    let f = |sigma: f64| {
        if sigma <= 0.0 {
            return 0.0;
        }
        let s = sigma.powf(p);
        let a = coeffs.a(s);
        if a > 0.0 && a.is_finite() {
            p * sigma.powf(p - 1.0) / a.sqrt()
        } else {
            f64::NAN
        }
    };
    let r = quad::integrate(f, 0.0, x.powf(1.0 / p), 1e-12, 1e-300, 4000)?;
    Ok(r.value)
}

/// Divergence probe for Condition 1: octave sums of ∫ a^{-1/2} toward 0.
fn condition1_diverges_at_zero(coeffs: &Coefficients) -> bool {
    let mut increments = Vec::new();
    let mut sum = 0.0f64;
    for k in 0..48 {
        let hi = 2.0f64.powi(-k);
        let lo = hi / 2.0;
        let f = |s: f64| {
            let a = coeffs.a(s);
            if a > 0.0 && a.is_finite() {
                a.sqrt().recip()
            } else {
                f64::NAN
            }
        };
        let inc = match quad::integrate(f, lo, hi, 1e-10, 1e-14, 400) {
            Ok(r) => r.value,
            Err(_) => return true,
        };
        sum += inc;
        increments.push(inc);
    }
    // Integrable iff the octave increments decay geometrically; persistent
    // non-decay means the head integral diverges.
    let n = increments.len();
    let tail = &increments[n - 10..];
    let non_decaying = tail.windows(2).all(|p| p[1] > 0.999 * p[0]);
    non_decaying && sum > 1e-12
}

fn eval_drift_ratio(coeffs: &Coefficients, inner_at: f64, x: f64) -> f64 {
    let a = coeffs.a(x);
    (2.0 * coeffs.b(x) - coeffs.a_prime(x)) / (4.0 * a.sqrt()) * inner_at
}

/// Iterated Aitken extrapolation of g(x_j) along the geometric grid
/// x_j = x0 2^{-j}; six levels, convergence when consecutive extrapolants
/// agree to 1e-8.
fn extrapolate_limit(values: &[f64]) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let mut table: Vec<f64> = values.to_vec();
    let mut best = *table.last().unwrap();
    for _level in 0..6 {
        if table.len() < 3 {
            break;
        }
        let mut next = Vec::with_capacity(table.len() - 2);
        for w in table.windows(3) {
            let denom = w[2] - 2.0 * w[1] + w[0];
            if denom.abs() < 1e-300 {
                next.push(w[2]);
            } else {
                next.push(w[2] - (w[2] - w[1]).powi(2) / denom);
            }
        }
        let cand = *next.last().unwrap();
        if (cand - best).abs() < 1e-8 * (1.0 + best.abs()) {
            return Some(cand);
        }
        best = cand;
        table = next;
    }
    // Accept when the raw sequence itself has visibly stabilized.
    let n = values.len();
    if (values[n - 1] - values[n - 2]).abs() < 1e-9 * (1.0 + values[n - 1].abs())
        && (values[n - 2] - values[n - 3]).abs() < 1e-9 * (1.0 + values[n - 2].abs())
    {
        return Some(values[n - 1]);
    }
    None
}

impl TransformBundle {
    pub fn build(coeffs: Coefficients) -> Result<Self, TransformError> {
        if let Some(preset) = coeffs.preset.clone() {
            return Self::build_preset(coeffs, preset);
        }
        let vanish_order = detect_vanish_order(&coeffs)?;
        if condition1_diverges_at_zero(&coeffs) {
            return Err(TransformError::Condition1Violated(
                "octave sums of a^{-1/2} toward 0 do not decay".into(),
            ));
        }

        let nodes: Vec<f64> = (0..CACHE_NODES)
            .map(|j| {
                let s = j as f64 / (CACHE_NODES - 1) as f64;
                CACHE_LO * (CACHE_HI / CACHE_LO).powf(s)
            })
            .collect();
        let head = inner_integral_from_zero(&coeffs, nodes[0], vanish_order)?;
        let mut values = Vec::with_capacity(nodes.len());
        values.push(head);
        for j in 1..nodes.len() {
            let f = |s: f64| {
                let a = coeffs.a(s);
                if a > 0.0 && a.is_finite() {
                    a.sqrt().recip()
                } else {
                    f64::NAN
                }
            };
            let inc = quad::integrate(f, nodes[j - 1], nodes[j], 1e-12, 1e-300, 600)?;
            values.push(values[j - 1] + inc.value);
        }
        let inner = IntegralCache { nodes, values };

        let mut partial = Self {
            coeffs,
            nu: ModelIndex::new(0.0).expect("0 < 1"),
            drift_limit: 0.0,
            vanish_order,
            inner: Some(inner),
            theta_integral: None,
            v_sup: 0.0,
            preset: None,
        };

        // Condition-2 limit by extrapolation along x_j = 0.5 * 2^{-j}.
        let mut samples = Vec::new();
        for j in 0..40 {
            let x = 0.5 * 2.0f64.powi(-j);
            let i_at = partial.inner_value(x)?;
            let g = eval_drift_ratio(&partial.coeffs, i_at, x);
            if !g.is_finite() {
                return Err(TransformError::BadCoefficient(x));
            }
            samples.push(g);
        }
        let limit = extrapolate_limit(&samples).ok_or_else(|| {
            TransformError::Condition2NonConvergent(format!(
                "drift ratio samples do not stabilize (last: {:.6e})",
                samples.last().unwrap()
            ))
        })?;
        let nu_val = 0.5 + limit;
        if nu_val >= 1.0 - 1e-9 {
            return Err(TransformError::NuOutOfRange(nu_val));
        }
        partial.nu = ModelIndex::new(nu_val).expect("checked < 1");
        partial.drift_limit = limit;

        partial.build_theta_cache()?;

        // Sup of |V| over a log grid, padded 25% so the downstream series
        // bounds remain bounds.
        let mut vmax = 0.0f64;
        for j in 0..200 {
            let z = 1e-6 * (1e9f64).powf(j as f64 / 199.0);
            let v = partial.v_potential(z)?;
            vmax = vmax.max(v.abs());
        }
        partial.v_sup = vmax * 1.25;
        Ok(partial)
    }

    fn build_preset(coeffs: Coefficients, preset: Preset) -> Result<Self, TransformError> {
        let (alpha, v_sup) = match &preset {
            Preset::Power { alpha } => (*alpha, 0.0),
            Preset::PowerDrift { alpha, beta, phi, phi_prime } => {
                let mut vmax = 0.0f64;
                for j in 0..400 {
                    let x = 1e-6 * (1e9f64).powf(j as f64 / 399.0);
                    let lam = drift_potential_lambda(*alpha, *beta, phi, phi_prime, x);
                    vmax = vmax.max(lam.abs());
                }
                (*alpha, vmax * 1.25)
            }
        };
        if alpha >= 2.0 {
            return Err(TransformError::Condition1Violated(format!(
                "alpha = {alpha} >= 2: inner integral diverges at 0"
            )));
        }
        if alpha < 0.0 {
            return Err(TransformError::BadCoefficient(alpha));
        }
        let nu_val = (1.0 - alpha) / (2.0 - alpha);
        Ok(Self {
            coeffs,
            nu: ModelIndex::new(nu_val).expect("alpha in [0,2) gives nu < 1"),
            drift_limit: nu_val - 0.5,
            vanish_order: alpha,
            inner: None,
            theta_integral: None,
            v_sup,
            preset: Some(preset),
        })
    }

    fn build_theta_cache(&mut self) -> Result<(), TransformError> {
        // Eager nodes stop where ψ stays within the coefficient cache (the
        // map z = φ(x) compresses or stretches the grid); beyond that θ is
        // extended on demand.
        let inner = self.inner.as_ref().expect("numeric path");
        let z_cap = 0.25 * inner.values.last().unwrap().powi(2);
        let nodes: Vec<f64> =
            inner.nodes.iter().copied().filter(|&z| z <= z_cap).collect();
        let mut values = Vec::with_capacity(nodes.len());
        // Head below the first node: |d̃(u)| ≲ slope·u keeps the integrand
        // bounded, so the head mass is O(CACHE_LO) and is dropped.
        values.push(0.0);
        for j in 1..nodes.len() {
            let f = |u: f64| match self.d_tilde(u) {
                Ok(d) => d / (2.0 * u),
                Err(_) => f64::NAN,
            };
            let inc = quad::integrate(f, nodes[j - 1], nodes[j], 1e-11, 1e-16, 300)?;
            values.push(values[j - 1] + inc.value);
        }
        self.theta_integral = Some(IntegralCache { nodes, values });
        Ok(())
    }

    /// I(x) = ∫₀^x a^{-1/2}, from the cache plus a short remainder integral.
    fn inner_value(&self, x: f64) -> Result<f64, TransformError> {
        let cache = self.inner.as_ref().expect("numeric path only");
        match cache.node_below(x) {
            None => inner_integral_from_zero(&self.coeffs, x, self.vanish_order),
            Some(j) => {
                let f = |s: f64| {
                    let a = self.coeffs.a(s);
                    if a > 0.0 && a.is_finite() {
                        a.sqrt().recip()
                    } else {
                        f64::NAN
                    }
                };
                let rem = quad::integrate(f, cache.nodes[j], x, 1e-12, 1e-300, 600)?;
                Ok(cache.values[j] + rem.value)
            }
        }
    }

    pub fn nu(&self) -> ModelIndex {
        self.nu
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn v_sup(&self) -> f64 {
        self.v_sup
    }

    /// True when the potential V vanishes identically (power preset), in
    /// which case the perturbation series collapses to its first term.
    pub fn has_trivial_potential(&self) -> bool {
        matches!(self.preset, Some(Preset::Power { .. }))
    }

    /// φ(x) = ¼ (∫₀^x a^{-1/2})².
    pub fn phi(&self, x: f64) -> Result<f64, TransformError> {
        match &self.preset {
            Some(Preset::Power { alpha }) | Some(Preset::PowerDrift { alpha, .. }) => {
                Ok(x.powf(2.0 - alpha) / (2.0 - alpha).powi(2))
            }
            None => Ok(0.25 * self.inner_value(x)?.powi(2)),
        }
    }

    /// φ'(x) = ½ (∫₀^x a^{-1/2}) a(x)^{-1/2}, from the defining formula
    /// rather than differencing.
    pub fn phi_prime(&self, x: f64) -> Result<f64, TransformError> {
        match &self.preset {
            Some(Preset::Power { alpha }) | Some(Preset::PowerDrift { alpha, .. }) => {
                Ok(x.powf(1.0 - alpha) / (2.0 - alpha))
            }
            None => Ok(0.5 * self.inner_value(x)? / self.coeffs.a(x).sqrt()),
        }
    }

    /// ψ(z), the inverse of φ, by bracketed bisection plus Newton polish.
    pub fn psi(&self, z: f64) -> Result<f64, TransformError> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(TransformError::PsiOutOfRange(z));
        }
        if let Some(Preset::Power { alpha } | Preset::PowerDrift { alpha, .. }) = &self.preset {
            return Ok(((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha)));
        }
        let cache = self.inner.as_ref().expect("numeric path only");
        let target = 2.0 * z.sqrt(); // solve I(x) = 2√z
        let (mut lo, mut hi) = match cache
            .values
            .binary_search_by(|v| v.partial_cmp(&target).expect("finite cache values"))
        {
            Ok(j) => return Ok(cache.nodes[j]),
            Err(0) => {
                // Below the cached range: descend by halving until the
                // bracket straddles the target.
                let mut hi = cache.nodes[0];
                let mut lo = hi / 2.0;
                loop {
                    if self.inner_value(lo)? <= target {
                        break (lo, hi);
                    }
                    hi = lo;
                    lo /= 2.0;
                    if lo < 1e-290 {
                        return Err(TransformError::PsiOutOfRange(z));
                    }
                }
            }
            Err(j) if j >= cache.nodes.len() => {
                // Beyond the cached range: extend the bracket by doubling.
                let mut lo = *cache.nodes.last().unwrap();
                let mut hi = 2.0 * lo;
                loop {
                    if self.inner_value(hi)? >= target {
                        break (lo, hi);
                    }
                    lo = hi;
                    hi *= 2.0;
                    if hi > 1e30 {
                        return Err(TransformError::PsiOutOfRange(z));
                    }
                }
            }
            Err(j) => (cache.nodes[j - 1], cache.nodes[j]),
        };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.inner_value(x)? - target;
            if fx.abs() < 1e-13 * target.max(1e-290) {
                break;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            // Newton step where it stays inside the bracket, bisection
            // otherwise; monotonicity makes the bracket safe.
            let deriv = 1.0 / self.coeffs.a(x).sqrt();
            let newton = x - fx / deriv;
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < f64::EPSILON * hi {
                break;
            }
        }
        Ok(x)
    }

    /// d̃(z) = d(ψ(z)), the residual drift after centering by the
    /// Condition-2 limit; vanishes as z ↘ 0.
    pub fn d_tilde(&self, z: f64) -> Result<f64, TransformError> {
        match &self.preset {
            Some(Preset::Power { .. }) => Ok(0.0),
            Some(Preset::PowerDrift { alpha, beta, phi, .. }) => {
                let x = ((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha));
                Ok(x.powf(beta + 1.0 - alpha) * phi(x) / (2.0 - alpha))
            }
            None => {
                let x = self.psi(z)?;
                let i_at = 2.0 * z.sqrt();
                Ok(eval_drift_ratio(&self.coeffs, i_at, x) - self.drift_limit)
            }
        }
    }

    /// d̃'(z) by central differences (the analytic route would need a'').
    pub fn d_tilde_prime(&self, z: f64) -> Result<f64, TransformError> {
        let h = (1e-5 * z.max(1e-3)).min(0.5 * z);
        Ok((self.d_tilde(z + h)? - self.d_tilde(z - h)?) / (2.0 * h))
    }

    /// θ(z) = exp(-∫₀^z d̃(u)/(2u) du).
    pub fn theta(&self, z: f64) -> Result<f64, TransformError> {
        match &self.preset {
            Some(Preset::Power { .. }) => Ok(1.0),
            Some(Preset::PowerDrift { alpha, beta, phi, .. }) => {
                // θ(φ(x)) = exp(-½ ∫₀^x u^{β-α} φ(u) du); smooth integrand
                // since β ≥ 1 > α - 1.
                let x = ((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha));
                let bma = beta - alpha;
                let f = |u: f64| if u > 0.0 { u.powf(bma) * phi(u) } else { 0.0 };
                let r = quad::integrate(f, 0.0, x, 1e-12, 1e-300, 2000)?;
                Ok((-0.5 * r.value).exp())
            }
            None => {
                let cache = self.theta_integral.as_ref().expect("built");
                let integral = match cache.node_below(z) {
                    // Below the grid the integrand is bounded by the slope of
                    // d̃, so the remaining mass is O(z); treated as zero.
                    None => 0.0,
                    Some(j) => {
                        let f = |u: f64| match self.d_tilde(u) {
                            Ok(d) => d / (2.0 * u),
                            Err(_) => f64::NAN,
                        };
                        let rem = quad::integrate(f, cache.nodes[j], z, 1e-11, 1e-16, 300)?;
                        cache.values[j] + rem.value
                    }
                };
                Ok((-integral).exp())
            }
        }
    }

    /// V(z) = -d̃²/(4z) - d̃'/2 + (1-ν) d̃/(2z), bounded under Condition 3.
    pub fn v_potential(&self, z: f64) -> Result<f64, TransformError> {
        match &self.preset {
            Some(Preset::Power { .. }) => Ok(0.0),
            Some(Preset::PowerDrift { alpha, beta, phi, phi_prime }) => {
                let x = ((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha));
                Ok(drift_potential_lambda(*alpha, *beta, phi, phi_prime, x))
            }
            None => {
                let d = self.d_tilde(z)?;
                let dp = self.d_tilde_prime(z)?;
                Ok(-d * d / (4.0 * z) - dp / 2.0 + (1.0 - self.nu.get()) * d / (2.0 * z))
            }
        }
    }
}

/// Λ(x) = -x^{2β-α} φ²/4 - (β-α) x^{β-1} φ/2 - x^β φ'/2, the potential of the
/// drifted power family in the original variable: V(φ(x)) = Λ(x).
pub fn drift_potential_lambda(
    alpha: f64,
    beta: f64,
    phi: &CoefFn,
    phi_prime: &CoefFn,
    x: f64,
) -> f64 {
    let p = phi(x);
    -x.powf(2.0 * beta - alpha) * p * p / 4.0 - (beta - alpha) * x.powf(beta - 1.0) * p / 2.0
        - x.powf(beta) * phi_prime(x) / 2.0
}

// ---------------------------------------------------------------------------
// Condition validation report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum CheckOutcome {
    Pass,
    /// Finite on every sampled point; a grid can only falsify a global sup.
    NotFalsifiedOnGrid,
    Fail(String),
    Indeterminate(String),
}

impl CheckOutcome {
    pub fn is_acceptable(&self) -> bool {
        matches!(self, CheckOutcome::Pass | CheckOutcome::NotFalsifiedOnGrid)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionReport {
    pub condition1_integrable_at_zero: CheckOutcome,
    pub condition1_divergent_at_infinity: CheckOutcome,
    pub condition2_limit: Option<f64>,
    pub condition2: CheckOutcome,
    pub nu: Option<f64>,
    pub condition3_drift_growth: CheckOutcome,
    pub condition3_drift_derivative: CheckOutcome,
    pub all_pass: bool,
}

/// Numerical validation of the three admissibility conditions on (a, b).
/// Failures are report entries, not errors.
pub fn validate_conditions(coeffs: &Coefficients) -> ConditionReport {
    let mut report = ConditionReport {
        condition1_integrable_at_zero: CheckOutcome::Pass,
        condition1_divergent_at_infinity: CheckOutcome::Pass,
        condition2_limit: None,
        condition2: CheckOutcome::Pass,
        nu: None,
        condition3_drift_growth: CheckOutcome::Indeterminate("not reached".into()),
        condition3_drift_derivative: CheckOutcome::Indeterminate("not reached".into()),
        all_pass: false,
    };

    if condition1_diverges_at_zero(coeffs) {
        report.condition1_integrable_at_zero =
            CheckOutcome::Fail("octave sums of ∫ a^{-1/2} toward 0 do not decay".into());
    }

    // Condition 1, growth side: ∫₁^∞ a^{-1/2} must diverge.
    {
        let mut incs = Vec::new();
        let mut ok = true;
        for k in 0..40 {
            let lo = 2.0f64.powi(k);
            let hi = 2.0 * lo;
            let f = |s: f64| {
                let a = coeffs.a(s);
                if a > 0.0 && a.is_finite() {
                    a.sqrt().recip()
                } else {
                    f64::NAN
                }
            };
            match quad::integrate(f, lo, hi, 1e-9, 1e-14, 200) {
                Ok(r) => incs.push(r.value),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            report.condition1_divergent_at_infinity =
                CheckOutcome::Indeterminate("coefficient not evaluable at large x".into());
        } else {
            let n = incs.len();
            let tail_sum: f64 = incs[n - 10..].iter().sum();
            let decaying = incs[n - 10..].windows(2).all(|p| p[1] < 0.7 * p[0]);
            if decaying || tail_sum < 1e-10 {
                report.condition1_divergent_at_infinity = CheckOutcome::Fail(
                    "∫₁^∞ a^{-1/2} appears finite (a grows too fast at infinity)".into(),
                );
            }
        }
    }

    if !report.condition1_integrable_at_zero.is_acceptable() {
        return report;
    }

    // Condition 2: existence of the drift limit, and ν < 1.
    let probe = (|| -> Result<(f64, f64), TransformError> {
        let vanish = detect_vanish_order(coeffs)?;
        let mut samples = Vec::new();
        for j in 0..40 {
            let x = 0.5 * 2.0f64.powi(-j);
            let i_at = inner_integral_from_zero(coeffs, x, vanish)?;
            let g = eval_drift_ratio(coeffs, i_at, x);
            if !g.is_finite() {
                return Err(TransformError::BadCoefficient(x));
            }
            samples.push(g);
        }
        let limit = extrapolate_limit(&samples).ok_or_else(|| {
            TransformError::Condition2NonConvergent("samples do not stabilize".into())
        })?;
        Ok((limit, 0.5 + limit))
    })();

    match probe {
        Ok((limit, nu)) => {
            report.condition2_limit = Some(limit);
            report.nu = Some(nu);
            if nu >= 1.0 - 1e-9 {
                report.condition2 = CheckOutcome::Fail(format!(
                    "limit {limit:.6} gives nu = {nu:.6} >= 1 (entrance boundary)"
                ));
            }
        }
        Err(e) => {
            report.condition2 = CheckOutcome::Fail(e.to_string());
        }
    }

    if !report.condition2.is_acceptable() {
        return report;
    }

    // Condition 3: sampled sup of |d|/√φ and |d'|/φ'.
    match TransformBundle::build(coeffs.clone()) {
        Ok(bundle) => {
            let mut ratio_max = 0.0f64;
            let mut dratio_max = 0.0f64;
            let mut bad = false;
            for j in 0..120 {
                let x = 1e-5 * (1e8f64).powf(j as f64 / 119.0);
                let (Ok(phi), Ok(phip)) = (bundle.phi(x), bundle.phi_prime(x)) else {
                    bad = true;
                    break;
                };
                let Ok(d) = bundle.d_tilde(phi) else {
                    bad = true;
                    break;
                };
                let h = 1e-4 * x.max(1e-2);
                let dprime = match (bundle.phi(x + h), bundle.phi(x - h)) {
                    (Ok(pp), Ok(pm)) => match (bundle.d_tilde(pp), bundle.d_tilde(pm)) {
                        (Ok(dp), Ok(dm)) => (dp - dm) / (2.0 * h),
                        _ => f64::NAN,
                    },
                    _ => f64::NAN,
                };
                if !d.is_finite() || !dprime.is_finite() {
                    bad = true;
                    break;
                }
                ratio_max = ratio_max.max(d.abs() / phi.sqrt());
                dratio_max = dratio_max.max(dprime.abs() / phip);
            }
            if bad {
                report.condition3_drift_growth =
                    CheckOutcome::Indeterminate("transform not evaluable on the grid".into());
                report.condition3_drift_derivative = report.condition3_drift_growth.clone();
            } else {
                report.condition3_drift_growth = if ratio_max < 1e6 {
                    CheckOutcome::NotFalsifiedOnGrid
                } else {
                    CheckOutcome::Fail(format!("|d|/√φ reached {ratio_max:.3e} on the grid"))
                };
                report.condition3_drift_derivative = if dratio_max < 1e6 {
                    CheckOutcome::NotFalsifiedOnGrid
                } else {
                    CheckOutcome::Fail(format!("|d'|/φ' reached {dratio_max:.3e} on the grid"))
                };
            }
        }
        Err(e) => {
            report.condition3_drift_growth = CheckOutcome::Indeterminate(e.to_string());
            report.condition3_drift_derivative = CheckOutcome::Indeterminate(e.to_string());
        }
    }

    report.all_pass = report.condition1_integrable_at_zero.is_acceptable()
        && report.condition1_divergent_at_infinity.is_acceptable()
        && report.condition2.is_acceptable()
        && report.condition3_drift_growth.is_acceptable()
        && report.condition3_drift_derivative.is_acceptable();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn general_power(alpha: f64) -> Coefficients {
        Coefficients::from_callables(
            Arc::new(move |x: f64| x.powf(alpha)),
            Arc::new(|_| 0.0),
            Some(Arc::new(move |x: f64| alpha * x.powf(alpha - 1.0))),
            Some(Arc::new(|_| 0.0)),
        )
    }

    #[test]
    fn phi_power_family_closed_form() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let bundle = TransformBundle::build(general_power(alpha)).unwrap();
            for &x in &[1e-3f64, 0.3, 1.0, 10.0] {
                let expected = x.powf(2.0 - alpha) / (2.0 - alpha).powi(2);
                let got = bundle.phi(x).unwrap();
                assert!(
                    rel_err(got, expected) < 1e-10,
                    "alpha={alpha} x={x}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn phi_constant_coefficient() {
        // a ≡ 1: φ(x) = x²/4 and ψ(z) = 2√z.
        let c = Coefficients::from_callables(
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Some(Arc::new(|_| 0.0)),
            Some(Arc::new(|_| 0.0)),
        );
        let bundle = TransformBundle::build(c).unwrap();
        for &x in &[1e-3, 1.0, 10.0] {
            assert!(rel_err(bundle.phi(x).unwrap(), x * x / 4.0) < 1e-11, "x={x}");
        }
        for &z in &[1e-4, 0.25, 9.0] {
            assert!(rel_err(bundle.psi(z).unwrap(), 2.0 * z.sqrt()) < 1e-10, "z={z}");
        }
        assert!((bundle.nu().get() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn phi_linear_coefficient_is_identity_map() {
        // a = x: inner integral 2√x, φ(x) = x.
        let bundle = TransformBundle::build(general_power(1.0)).unwrap();
        for &x in &[1e-3, 0.7, 5.0] {
            assert!(rel_err(bundle.phi(x).unwrap(), x) < 1e-10, "x={x}");
        }
    }

    #[test]
    fn psi_round_trip() {
        let bundle = TransformBundle::build(general_power(1.5)).unwrap();
        for &x in &[1e-3, 1.0, 10.0] {
            let z = bundle.phi(x).unwrap();
            let back = bundle.psi(z).unwrap();
            assert!((back - x).abs() / x < 1e-10, "x={x} back={back}");
        }
    }

    #[test]
    fn psi_power_family_closed_form() {
        let alpha = 0.5;
        let bundle = TransformBundle::build(general_power(alpha)).unwrap();
        for &z in &[1e-3, 0.8, 20.0] {
            let expected = ((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha));
            assert!(rel_err(bundle.psi(z).unwrap(), expected) < 1e-10, "z={z}");
        }
    }

    #[test]
    fn nu_power_family() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let bundle = TransformBundle::build(general_power(alpha)).unwrap();
            let expected = (1.0 - alpha) / (2.0 - alpha);
            assert!(
                (bundle.nu().get() - expected).abs() < 1e-8,
                "alpha={alpha}: {} vs {expected}",
                bundle.nu().get()
            );
        }
    }

    #[test]
    fn nu_linear_with_half_drift() {
        // a = x, b ≡ 1/2: 2b - a' ≡ 0, so the limit vanishes and ν = 1/2.
        let c = Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|_| 0.5),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|_| 0.0)),
        );
        let bundle = TransformBundle::build(c).unwrap();
        assert!((bundle.nu().get() - 0.5).abs() < 1e-9);
        assert!(bundle.d_tilde(0.7).unwrap().abs() < 1e-9);
        assert!((bundle.theta(0.7).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn power_family_trivial_gauge() {
        let bundle = TransformBundle::build(general_power(1.5)).unwrap();
        assert!(bundle.d_tilde(0.5).unwrap().abs() < 1e-9);
        assert!((bundle.theta(0.5).unwrap() - 1.0).abs() < 1e-8);
        assert!(bundle.v_potential(0.5).unwrap().abs() < 1e-6);
        assert!((bundle.theta(1e-6).unwrap() - 1.0).abs() < 1e-8, "theta(0+) = 1");
    }

    #[test]
    fn drift_family_potential_matches_lambda() {
        // a = x, b = x² e^{-x} through the *numeric* path; V(φ(x)) must match
        // the analytic Λ(x) of the drifted power family.
        let c = Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|x: f64| x * x * (-x).exp()),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|x: f64| (2.0 * x - x * x) * (-x).exp())),
        );
        let bundle = TransformBundle::build(c).unwrap();
        assert!(bundle.nu().get().abs() < 1e-8, "nu should be 0, got {}", bundle.nu().get());
        let phi: CoefFn = Arc::new(|x: f64| (-x).exp());
        let phip: CoefFn = Arc::new(|x: f64| -(-x).exp());
        for &x in &[0.3, 1.0, 2.5] {
            let z = bundle.phi(x).unwrap();
            let v = bundle.v_potential(z).unwrap();
            let lam = drift_potential_lambda(1.0, 2.0, &phi, &phip, x);
            assert!((v - lam).abs() < 2e-5, "x={x}: V={v} vs Λ={lam}");
        }
    }

    #[test]
    fn preset_and_numeric_paths_agree() {
        let preset = TransformBundle::build(Coefficients::power(1.5)).unwrap();
        let numeric = TransformBundle::build(general_power(1.5)).unwrap();
        for &x in &[0.01, 0.5, 3.0] {
            assert!(rel_err(preset.phi(x).unwrap(), numeric.phi(x).unwrap()) < 1e-9);
            assert!(rel_err(preset.phi_prime(x).unwrap(), numeric.phi_prime(x).unwrap()) < 1e-9);
        }
        assert!((preset.nu().get() - numeric.nu().get()).abs() < 1e-8);
    }

    #[test]
    fn condition1_failure_detected() {
        // a = x²: ∫ ds/s diverges at 0.
        let err = TransformBundle::build(general_power(2.0)).unwrap_err();
        assert!(matches!(err, TransformError::Condition1Violated(_)), "{err}");
        let report = validate_conditions(&general_power(2.0));
        assert!(!report.condition1_integrable_at_zero.is_acceptable());
        assert!(!report.all_pass);
    }

    #[test]
    fn entrance_boundary_rejected() {
        // a = x, b ≡ 1: the limit is 1/2, so ν = 1 and the construction must
        // refuse.
        let c = Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|_| 1.0),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|_| 0.0)),
        );
        let err = TransformBundle::build(c.clone()).unwrap_err();
        assert!(matches!(err, TransformError::NuOutOfRange(v) if (v - 1.0).abs() < 1e-6));
        let report = validate_conditions(&c);
        assert!(!report.condition2.is_acceptable());
        assert!((report.nu.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conditions_pass_for_power_family() {
        for &alpha in &[0.25, 1.0, 1.75] {
            let report = validate_conditions(&general_power(alpha));
            assert!(report.all_pass, "alpha={alpha}: {report:?}");
        }
    }

    #[test]
    fn d_tilde_vanishes_at_zero_on_cache_tail() {
        let c = Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|x: f64| x * x * (-x).exp()),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|x: f64| (2.0 * x - x * x) * (-x).exp())),
        );
        let bundle = TransformBundle::build(c).unwrap();
        let mut prev = f64::INFINITY;
        for &z in &[1e-2, 1e-4, 1e-6] {
            let d = bundle.d_tilde(z).unwrap().abs();
            assert!(d < prev, "d̃ should decay toward 0: z={z} d={d}");
            prev = d;
        }
        assert!(prev < 1e-6);
    }
}
