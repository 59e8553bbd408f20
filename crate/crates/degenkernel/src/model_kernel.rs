//! The explicit model kernels: `q_σ` solving `∂t v = z ∂²z v + σ ∂z v` with
//! absorption at 0, its zero-flux companion `q_ν^*`, the extended family
//! `Q_{ν+k}`, exact z-derivative recurrences, total mass, upper bounds, the
//! convolution identity, and solutions `v_g` of the model equation.
//!
//! Two interchangeable representations are maintained for `q_σ`:
//!
//! * the power series `(z^{1-σ}/t^{2-σ}) e^{-(z+w)/t} Σ_n (zw)^n / (t^{2n} n! Γ(n+2-σ))`,
//! * the Bessel form `z^{(1-σ)/2} w^{(σ-1)/2} t^{-1} e^{-(z+w)/t} I_{1-σ}(2√(zw)/t)`.
//!
//! Both are computed in scaled form (the exponential prefactor folded into
//! the Gaussian factor `e^{-(√z-√w)²/t}`) so that `zw/t² ≫ 1` never overflows.

use core::fmt;

use crate::quad::{self, QuadError, QuadResult};
use crate::specfun::{self, EvalTolerance, SpecFunError};

/// Drift index ν of the model operator `L_ν = z ∂²z + ν ∂z`, restricted to
/// ν < 1 (the attainable-boundary regime).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelIndex(f64);

impl ModelIndex {
    pub fn new(nu: f64) -> Result<Self, KernelError> {
        if !nu.is_finite() || nu >= 1.0 {
            return Err(KernelError::IndexOutOfRange(nu));
        }
        Ok(Self(nu))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Some(N) when ν = -N for a nonnegative integer N.
    pub fn as_nonpositive_integer(self) -> Option<i64> {
        let r = self.0.round();
        if (self.0 - r).abs() < 1e-12 && r <= 0.0 {
            Some(-r as i64)
        } else {
            None
        }
    }
}

/// Evaluation point (z, w, t) with all coordinates strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub z: f64,
    pub w: f64,
    pub t: f64,
}

impl KernelPoint {
    pub fn new(z: f64, w: f64, t: f64) -> Result<Self, KernelError> {
        if !(z > 0.0 && w > 0.0 && t > 0.0) || !(z.is_finite() && w.is_finite() && t.is_finite()) {
            return Err(KernelError::InvalidPoint { z, w, t });
        }
        Ok(Self { z, w, t })
    }

    pub fn swapped(self) -> Self {
        Self { z: self.w, w: self.z, t: self.t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    /// σ hit the excluded set {2, 3, ...} (within 1e-8).
    ExcludedSigma(f64),
    /// ν ≥ 1 or non-finite.
    IndexOutOfRange(f64),
    InvalidPoint { z: f64, w: f64, t: f64 },
    /// (ν, k) outside the admissible set of the derivative identities.
    InadmissibleOrder { nu: f64, k: u32 },
    SpecFun(SpecFunError),
    Quad(QuadError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExcludedSigma(s) => {
                write!(f, "sigma = {s} is in (or within 1e-8 of) the excluded set {{2, 3, ...}}")
            }
            Self::IndexOutOfRange(v) => write!(f, "model index nu = {v} must be finite and < 1"),
            Self::InvalidPoint { z, w, t } => {
                write!(f, "kernel point ({z}, {w}, {t}) must have z, w, t > 0")
            }
            Self::InadmissibleOrder { nu, k } => {
                write!(f, "derivative order k = {k} not admissible for nu = {nu}")
            }
            Self::SpecFun(e) => write!(f, "{e}"),
            Self::Quad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for KernelError {}

impl From<SpecFunError> for KernelError {
    fn from(e: SpecFunError) -> Self {
        Self::SpecFun(e)
    }
}

impl From<QuadError> for KernelError {
    fn from(e: QuadError) -> Self {
        Self::Quad(e)
    }
}

fn reject_excluded_sigma(sigma: f64) -> Result<(), KernelError> {
    if sigma >= 1.5 {
        let m = sigma.round();
        if m >= 2.0 && (sigma - m).abs() < 1e-8 {
            return Err(KernelError::ExcludedSigma(sigma));
        }
    }
    Ok(())
}

/// Binomial coefficient as f64; exact for the small orders used here.
pub(crate) fn binom(k: u32, j: u32) -> f64 {
    let mut c = 1.0f64;
    for i in 0..j.min(k - j) {
        c = c * (k - i) as f64 / (i + 1) as f64;
    }
    c
}

// ---------------------------------------------------------------------------
// q_sigma: Bessel-form and series-form evaluation
// ---------------------------------------------------------------------------

/// `q_σ(z, w, t)` via the scaled Bessel representation. Valid for any
/// σ ∉ {2, 3, ...}; strictly positive when σ < 1.
pub fn q_sigma(sigma: f64, pt: KernelPoint, tol: &EvalTolerance) -> Result<f64, KernelError> {
    reject_excluded_sigma(sigma)?;
    let KernelPoint { z, w, t } = pt;
    let u = 2.0 * (z * w).sqrt() / t;
    let gauss = (z.sqrt() - w.sqrt()).powi(2) / t;
    let ratio = (0.5 * (1.0 - sigma) * (z.ln() - w.ln())).exp();
    let scaled = specfun::bessel_i_scaled(1.0 - sigma, u, tol)?;
    Ok(ratio / t * (-gauss).exp() * scaled)
}

/// ln q_σ for σ < 1, where the kernel is strictly positive. Stays finite-
/// precision when the plain value would underflow.
pub fn log_q_sigma(sigma: f64, pt: KernelPoint, tol: &EvalTolerance) -> Result<f64, KernelError> {
    if sigma >= 1.0 {
        return Err(KernelError::ExcludedSigma(sigma));
    }
    let KernelPoint { z, w, t } = pt;
    let u = 2.0 * (z * w).sqrt() / t;
    let gauss = (z.sqrt() - w.sqrt()).powi(2) / t;
    let ln_scaled = specfun::bessel_i_ln_scaled(1.0 - sigma, u, tol)?;
    Ok(0.5 * (1.0 - sigma) * (z.ln() - w.ln()) - t.ln() - gauss + ln_scaled)
}

/// `q_σ` via direct summation of the defining power series, with base-2
/// exponent carrying so `zw/t²` up to ~1e6 stays in range. Serves as the
/// independent route for the representation-consistency check.
pub fn q_sigma_series(
    sigma: f64,
    pt: KernelPoint,
    tol: &EvalTolerance,
) -> Result<f64, KernelError> {
    let (sign, log_abs) = q_sigma_series_log(sigma, pt, tol)?;
    Ok(sign * log_abs.exp())
}

/// (sign, ln |q_σ|) by the series route.
pub fn q_sigma_series_log(
    sigma: f64,
    pt: KernelPoint,
    tol: &EvalTolerance,
) -> Result<(f64, f64), KernelError> {
    reject_excluded_sigma(sigma)?;
    let KernelPoint { z, w, t } = pt;
    let xi = z * w / (t * t);
    let (mantissa, log_scale) = series_sum_scaled(sigma, xi, tol)?;
    let ln_pref = (1.0 - sigma) * z.ln() - (2.0 - sigma) * t.ln() - (z + w) / t;
    Ok((mantissa.signum(), ln_pref + log_scale + mantissa.abs().ln()))
}

/// Σ_n ξ^n / (n! Γ(n+2-σ)) as (mantissa, natural-log scale offset).
fn series_sum_scaled(
    sigma: f64,
    xi: f64,
    tol: &EvalTolerance,
) -> Result<(f64, f64), KernelError> {
    let rescale = 2.0f64.powi(-512);
    let rescale_ln = 512.0 * std::f64::consts::LN_2;
    let mut term = 1.0 / specfun::gamma(2.0 - sigma)?;
    let mut sum = term;
    let mut log_scale = 0.0f64;
    let hump = xi.sqrt();
    let max_terms = tol.max_terms.max((2.0 * hump) as usize + 200);
    for n in 0..max_terms {
        let nf = n as f64;
        term *= xi / ((nf + 1.0) * (nf + 2.0 - sigma));
        sum += term;
        if sum.abs() > 1e280 || term.abs() > 1e280 {
            sum *= rescale;
            term *= rescale;
            log_scale += rescale_ln;
        }
        if nf > hump && term.abs() < tol.rel_tol * sum.abs().max(1e-300) {
            return Ok((sum, log_scale));
        }
    }
    Err(KernelError::SpecFun(SpecFunError::NonConvergence("q_sigma power series")))
}

/// The zero-flux companion kernel
/// `q_ν^*(z,w,t) = w^{ν-1} t^{-ν} e^{-(z+w)/t} Σ_n (zw)^n / (t^{2n} n! Γ(ν+n))`,
/// equivalently `z^{(1-ν)/2} w^{(ν-1)/2} t^{-1} e^{-(z+w)/t} I_{ν-1}(2√(zw)/t)`.
/// Solves the model equation but with the flux condition
/// `lim_{z↘0} z^ν ∂z v = 0` instead of absorption.
pub fn q_star(nu: ModelIndex, pt: KernelPoint, tol: &EvalTolerance) -> Result<f64, KernelError> {
    let KernelPoint { z, w, t } = pt;
    let u = 2.0 * (z * w).sqrt() / t;
    let gauss = (z.sqrt() - w.sqrt()).powi(2) / t;
    let ratio = (0.5 * (1.0 - nu.0) * (z.ln() - w.ln())).exp();
    let scaled = specfun::bessel_i_scaled(nu.0 - 1.0, u, tol)?;
    Ok(ratio / t * (-gauss).exp() * scaled)
}

// ---------------------------------------------------------------------------
// The extended family Q_{ν+k} and derivative identities
// ---------------------------------------------------------------------------

/// `Q_{ν+k}(z, w, t)`: equal to `q_{ν+k}(z, w, t)` except when ν is a
/// non-positive integer and k ≥ 2 - ν, where the definition continues as
/// `q_{2-ν-k}(w, z, t)`.
pub fn q_extended(
    nu: ModelIndex,
    k: u32,
    pt: KernelPoint,
    tol: &EvalTolerance,
) -> Result<f64, KernelError> {
    match nu.as_nonpositive_integer() {
        Some(n) if (k as i64) >= 2 + n => {
            let sigma = 2.0 - nu.0 - k as f64;
            q_sigma(sigma, pt.swapped(), tol)
        }
        _ => q_sigma(nu.0 + k as f64, pt, tol),
    }
}

/// `∂_z^k q_ν(z,w,t) = t^{-k} Σ_{j=0}^k C(k,j) (-1)^{k-j} Q_{ν+j}(z,w,t)`.
pub fn dzk_q(
    nu: ModelIndex,
    k: u32,
    pt: KernelPoint,
    tol: &EvalTolerance,
) -> Result<f64, KernelError> {
    let mut acc = 0.0f64;
    for j in 0..=k {
        let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += binom(k, j) * sign * q_extended(nu, j, pt, tol)?;
    }
    Ok(acc / pt.t.powi(k as i32))
}

/// `S_k(z,w,t) = Σ_{m=0}^k C(k,m) Q_{ν+m}(z,w,t)`, the comparison function in
/// the derivative bounds.
pub fn s_k(
    nu: ModelIndex,
    k: u32,
    pt: KernelPoint,
    tol: &EvalTolerance,
) -> Result<f64, KernelError> {
    // Every summand must be a nonnegative kernel: true for -ν ∈ ℕ (the
    // flipped branch keeps σ ≤ 1) and for non-integer ν with ν + k < 2.
    if nu.as_nonpositive_integer().is_none() && nu.0 + k as f64 >= 2.0 {
        return Err(KernelError::InadmissibleOrder { nu: nu.0, k });
    }
    let mut acc = 0.0f64;
    for m in 0..=k {
        acc += binom(k, m) * q_extended(nu, m, pt, tol)?;
    }
    Ok(acc)
}

/// Admissibility of (ν, k) for the derivative/convolution identities:
/// ν non-integer with k ≤ [1-ν], or -ν a nonnegative integer (any k).
pub fn check_admissible(nu: ModelIndex, k: u32) -> Result<(), KernelError> {
    if nu.as_nonpositive_integer().is_some() {
        return Ok(());
    }
    let cap = (1.0 - nu.0).floor() as i64;
    if (k as i64) <= cap {
        Ok(())
    } else {
        Err(KernelError::InadmissibleOrder { nu: nu.0, k })
    }
}

// ---------------------------------------------------------------------------
// Mass, bounds, tails
// ---------------------------------------------------------------------------

/// Total surviving mass `∫₀^∞ q_ν(z,w,t) dw = γ(1-ν, z/t) / Γ(1-ν) ∈ (0,1)`.
pub fn total_mass(nu: ModelIndex, z: f64, t: f64, tol: &EvalTolerance) -> Result<f64, KernelError> {
    if !(z > 0.0 && t > 0.0) {
        return Err(KernelError::InvalidPoint { z, w: 1.0, t });
    }
    Ok(specfun::reg_lower_gamma(1.0 - nu.0, z / t, tol)?)
}

/// The explicit pointwise upper bound on `q_σ`: the Gaussian-type bound
/// `(z^{1-σ}/t^{2-σ}) e^{-(√z-√w)²/t}` for σ < 1, and the two-term variant
/// for σ ∈ [1, ∞) \ {2, 3, ...}.
pub fn q_upper_bound(sigma: f64, pt: KernelPoint) -> Result<f64, KernelError> {
    reject_excluded_sigma(sigma)?;
    let KernelPoint { z, w, t } = pt;
    let gauss = (z.sqrt() - w.sqrt()).powi(2) / t;
    if sigma < 1.0 {
        // For σ ∈ (0,1) the series comparison against e^{2√ξ} needs the
        // constant 1/Γ(2-σ) (> 1 there), since Γ(n+2-σ)/n! attains its
        // minimum Γ(2-σ) at n = 0.
        let c = (1.0 / specfun::gamma(2.0 - sigma)?).max(1.0);
        return Ok(c * ((1.0 - sigma) * z.ln() - (2.0 - sigma) * t.ln() - gauss).exp());
    }
    let m = (sigma - 2.0).floor();
    let mut fact = 1.0f64; // (m + 2)!
    let mut i = 2.0;
    while i <= m + 2.0 {
        fact *= i;
        i += 1.0;
    }
    let g = specfun::gamma(4.0 - sigma + m)?;
    let pre1 = ((1.0 - sigma) * z.ln() - (2.0 - sigma) * t.ln() - (z + w) / t).exp();
    let hump = (z * w / (t * t)).max(1.0).powf(m + 1.0);
    let term1 = pre1 * hump * fact / g;
    let term2 = ((3.0 - sigma + m) * z.ln() - (4.0 - sigma + m) * t.ln() - gauss).exp();
    Ok(term1 + term2)
}

/// Truncation point W for forward-variable integrals of `q_ν(z, ·, t)`,
/// together with the certified kernel-mass bound beyond W, derived from the
/// Gaussian-type pointwise bound.
pub fn tail_cut(nu: ModelIndex, z: f64, t: f64, abs_tol: f64) -> (f64, f64) {
    let pref = ((1.0 - nu.0) * z.ln() - (2.0 - nu.0) * t.ln()).exp();
    let scale = t + (std::f64::consts::PI * t * z).sqrt();
    let target = (abs_tol / (pref * scale).max(1e-300)).max(1e-300);
    let big_l = (-target.ln()).max(0.0) + 5.0;
    let w_cut = (z.sqrt() + (t * big_l).sqrt()).powi(2);
    (w_cut, tail_mass_bound(nu, z, t, w_cut))
}

/// Certified bound on `∫_W^∞ q_ν(z,w,t) dw` from the pointwise estimate:
/// with δ = √W - √z, the tail is at most
/// `(z^{1-ν}/t^{2-ν}) [ t e^{-δ²/t} + √(πt) √z erfc(δ/√t) ]`.
pub fn tail_mass_bound(nu: ModelIndex, z: f64, t: f64, w_cut: f64) -> f64 {
    let delta = w_cut.sqrt() - z.sqrt();
    if delta <= 0.0 {
        return f64::INFINITY;
    }
    let pref = ((1.0 - nu.0) * z.ln() - (2.0 - nu.0) * t.ln()).exp();
    let tol = EvalTolerance::default();
    let erfc = specfun::reg_upper_gamma(0.5, delta * delta / t, &tol).unwrap_or(0.0);
    pref * (t * (-delta * delta / t).exp() + (std::f64::consts::PI * t * z).sqrt() * erfc)
}

// ---------------------------------------------------------------------------
// Solutions of the model equation
// ---------------------------------------------------------------------------

/// `v_g(z,t) = ∫₀^∞ q_ν(z,w,t) g(w) dw` by adaptive quadrature over a
/// tail-cut domain; the ignored tail is certified in `tail_bound` (scaled by
/// the sampled magnitude of g beyond the cut).
pub fn v_g<G: Fn(f64) -> f64>(
    nu: ModelIndex,
    g: G,
    z: f64,
    t: f64,
    tol: &EvalTolerance,
) -> Result<QuadResult, KernelError> {
    let (w_cut, tail) = tail_cut(nu, z, t, tol.abs_tol.max(1e-16));
    let integrand = |w: f64| match q_sigma(nu.0, KernelPoint { z, w, t }, tol) {
        Ok(q) => q * g(w),
        Err(_) => f64::NAN,
    };
    let breaks = quad::peak_breaks(&[(z, (z * t).sqrt())], 0.0, w_cut);
    let mut r =
        quad::integrate_with_breaks(integrand, &breaks, tol.rel_tol.max(1e-12), 1e-305, 3000)?;
    let g_beyond = [1.0, 1.5, 2.0, 4.0]
        .iter()
        .map(|&m| g(w_cut * m).abs())
        .fold(0.0f64, f64::max);
    r.tail_bound = tail * g_beyond.max(1.0);
    Ok(r)
}

/// `∂_z^k v_g(z,t) = ∫₀^∞ Q_{ν+k}(z,w,t) g^{(k)}(w) dw`, valid when the lower
/// derivatives of g vanish at 0 (the caller supplies g^{(k)} directly).
pub fn dzk_v_g<G: Fn(f64) -> f64>(
    nu: ModelIndex,
    k: u32,
    g_k: G,
    z: f64,
    t: f64,
    tol: &EvalTolerance,
) -> Result<QuadResult, KernelError> {
    let (w_cut, tail) = tail_cut(nu, z.max(1.0), t, tol.abs_tol.max(1e-16));
    let integrand = |w: f64| match q_extended(nu, k, KernelPoint { z, w, t }, tol) {
        Ok(q) => q * g_k(w),
        Err(_) => f64::NAN,
    };
    let breaks = quad::peak_breaks(&[(z, (z * t).sqrt())], 0.0, 2.0 * w_cut);
    let mut r =
        quad::integrate_with_breaks(integrand, &breaks, tol.rel_tol.max(1e-11), 1e-305, 3000)?;
    r.tail_bound = tail;
    Ok(r)
}

// ---------------------------------------------------------------------------
// Convolution identity
// ---------------------------------------------------------------------------

/// Left side of the convolution identity:
/// `∫₀^∞ Q_{ν+k}(z,ξ,t) Q_{ν+l}(ξ,w,s) dξ` by quadrature.
pub fn conv_q(
    nu: ModelIndex,
    k: u32,
    l: u32,
    z: f64,
    w: f64,
    t: f64,
    s: f64,
    tol: &EvalTolerance,
) -> Result<QuadResult, KernelError> {
    check_conv_admissible(nu, k, l)?;
    let (cut_a, _) = tail_cut(nu, z, t, 1e-18);
    let (cut_b, _) = tail_cut(nu, w, s, 1e-18);
    let w_cut = cut_a.max(cut_b);
    let integrand = |xi: f64| {
        if xi <= 0.0 {
            return 0.0;
        }
        let a = q_extended(nu, k, KernelPoint { z, w: xi, t }, tol);
        let b = q_extended(nu, l, KernelPoint { z: xi, w, t: s }, tol);
        match (a, b) {
            (Ok(a), Ok(b)) => a * b,
            _ => f64::NAN,
        }
    };
    let breaks =
        quad::peak_breaks(&[(z, (z * t).sqrt()), (w, (w * s).sqrt())], 0.0, w_cut);
    Ok(quad::integrate_with_breaks(integrand, &breaks, tol.rel_tol.max(1e-11), 1e-305, 3000)?)
}

/// Right side of the convolution identity:
/// `(t+s)^{-(k-l)} Σ_j C(k-l, j) t^j s^{k-l-j} Q_{ν+l+j}(z,w,t+s)`.
pub fn conv_q_closed(
    nu: ModelIndex,
    k: u32,
    l: u32,
    z: f64,
    w: f64,
    t: f64,
    s: f64,
    tol: &EvalTolerance,
) -> Result<f64, KernelError> {
    check_conv_admissible(nu, k, l)?;
    let pt = KernelPoint::new(z, w, t + s)?;
    let d = k - l;
    let mut acc = 0.0f64;
    for j in 0..=d {
        acc += binom(d, j)
            * t.powi(j as i32)
            * s.powi((d - j) as i32)
            * q_extended(nu, l + j, pt, tol)?;
    }
    Ok(acc / (t + s).powi(d as i32))
}

fn check_conv_admissible(nu: ModelIndex, k: u32, l: u32) -> Result<(), KernelError> {
    if l > k {
        return Err(KernelError::InadmissibleOrder { nu: nu.0, k: l });
    }
    check_admissible(nu, k)
}
