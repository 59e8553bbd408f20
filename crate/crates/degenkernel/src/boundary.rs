//! Feller classification of the boundary 0 from the scale measure S and the
//! speed measure M: computes S₀, M₀, Σ, N by integrating toward 0 on a
//! geometric node sequence, detects convergence versus divergence from the
//! octave increments, and maps the finiteness pattern to the boundary type.

use core::fmt;

use crate::quad;
use crate::transform::Coefficients;
use serde::Serialize;

/// Verdict for one of the four defining limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LimitValue {
    Finite { value: f64 },
    Infinite { evidence: String },
    /// Partial sums neither stabilize nor clearly diverge within the node
    /// budget; reported, never guessed.
    Indeterminate { evidence: String },
}

impl LimitValue {
    pub fn is_finite(&self) -> Option<bool> {
        match self {
            LimitValue::Finite { .. } => Some(true),
            LimitValue::Infinite { .. } => Some(false),
            LimitValue::Indeterminate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryType {
    Regular,
    Exit,
    Entrance,
    Natural,
    Indeterminate,
}

impl fmt::Display for BoundaryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryType::Regular => "regular",
            BoundaryType::Exit => "exit",
            BoundaryType::Entrance => "entrance",
            BoundaryType::Natural => "natural",
            BoundaryType::Indeterminate => "indeterminate",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub x0: f64,
    pub s0: LimitValue,
    pub m0: LimitValue,
    pub sigma: LimitValue,
    pub n: LimitValue,
    pub boundary_type: BoundaryType,
    pub note: Option<String>,
}

/// Octave-level increment verdict. Increments that persistently fail to
/// decay signal a divergent integral (infinitely many octaves remain, each
/// contributing at least as much); geometric decay over the last octaves
/// allows a tail estimate from the observed ratio. Mixed behavior is
/// reported as indeterminate rather than guessed.
fn judge(increments: &[f64], partial: f64) -> LimitValue {
    if increments.iter().any(|v| !v.is_finite()) {
        return LimitValue::Infinite { evidence: "increment overflow".into() };
    }
    let n = increments.len();
    let tail = &increments[n.saturating_sub(10)..];
    let ratios: Vec<f64> = tail
        .windows(2)
        .map(|p| if p[0].abs() > 0.0 { p[1] / p[0] } else { 0.0 })
        .collect();
    let all_non_decaying = ratios.iter().all(|&r| r > 0.999) && tail[0].abs() > 0.0;
    if all_non_decaying || (partial.abs() > 1e8 && ratios.iter().all(|&r| r > 0.5)) {
        return LimitValue::Infinite {
            evidence: format!(
                "last-octave increments do not decay (last = {:.3e}, partial sum = {:.3e})",
                tail.last().unwrap(),
                partial
            ),
        };
    }
    let ratio_max = ratios.iter().cloned().fold(0.0f64, f64::max);
    if ratio_max < 0.999 {
        let rem = tail.last().unwrap().abs() * ratio_max / (1.0 - ratio_max);
        return LimitValue::Finite { value: partial + rem.copysign(*tail.last().unwrap()) };
    }
    LimitValue::Indeterminate {
        evidence: format!(
            "increments neither stabilize nor diverge within 60 octaves (partial {partial:.3e})"
        ),
    }
}

/// Classifies the boundary at 0 for the diffusion with generator
/// a(x) ∂²x + b(x) ∂x, anchored at x0 > 0.
pub fn classify(coeffs: &Coefficients, x0: f64) -> ClassificationReport {
    const OCTAVES: usize = 60;
    const SUBS: usize = 4; // quarter-octave resolution

    // Geometric node sequence from x0 down to x0 · 2^{-60}.
    let n_nodes = OCTAVES * SUBS + 1;
    let nodes: Vec<f64> = (0..n_nodes).map(|j| x0 * 2.0f64.powf(-(j as f64) / SUBS as f64)).collect();

    // Pass 1: cumulative exponent E(node) = ∫_node^{x0} b/a and the segment
    // integrals of s = exp(E) and 1/(2 a s), with E interpolated linearly in
    // ln u inside a segment.
    let mut e_at = vec![0.0f64; n_nodes];
    let mut s_inc = vec![0.0f64; n_nodes - 1];
    let mut m_inc = vec![0.0f64; n_nodes - 1];
    let ba = |u: f64| {
        let a = coeffs.a(u);
        if a > 0.0 && a.is_finite() {
            coeffs.b(u) / a
        } else {
            f64::NAN
        }
    };
    for j in 0..n_nodes - 1 {
        let (hi, lo) = (nodes[j], nodes[j + 1]);
        let seg = quad::integrate(ba, lo, hi, 1e-10, 1e-14, 200)
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
        e_at[j + 1] = (e_at[j] + seg).min(705.0);
        let (e_hi, e_lo) = (e_at[j], e_at[j + 1]);
        let (ln_hi, ln_lo) = (hi.ln(), lo.ln());
        let e_of = move |u: f64| {
            let t = (u.ln() - ln_lo) / (ln_hi - ln_lo);
            e_lo + (e_hi - e_lo) * t
        };
        s_inc[j] = quad::integrate(|u| e_of(u).exp(), lo, hi, 1e-9, 1e-300, 100)
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
        m_inc[j] = quad::integrate(
            |u| {
                let a = coeffs.a(u);
                if a > 0.0 && a.is_finite() {
                    (-e_of(u)).exp() / (2.0 * a)
                } else {
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-9,
            1e-300,
            100,
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    }

    // Cumulative S(x0) - S(node) and M(x0) - M(node).
    let mut s_cum = vec![0.0f64; n_nodes];
    let mut m_cum = vec![0.0f64; n_nodes];
    for j in 0..n_nodes - 1 {
        s_cum[j + 1] = s_cum[j] + s_inc[j];
        m_cum[j + 1] = m_cum[j] + m_inc[j];
    }

    // Pass 2: Σ and N segment integrals. The measure reached at u inside a
    // segment is the cumulative value at the segment top plus a short
    // partial integral; the exponent E is interpolated linearly in ln u.
    let mut sig_inc = vec![0.0f64; n_nodes - 1];
    let mut n_inc = vec![0.0f64; n_nodes - 1];
    for j in 0..n_nodes - 1 {
        let (hi, lo) = (nodes[j], nodes[j + 1]);
        let (ln_hi, ln_lo) = (hi.ln(), lo.ln());
        let (e_hi, e_lo) = (e_at[j], e_at[j + 1]);
        let e_of = move |u: f64| {
            let t = (u.ln() - ln_lo) / (ln_hi - ln_lo);
            e_lo + (e_hi - e_lo) * t
        };
        let m_density = |u: f64| {
            let a = coeffs.a(u);
            if a > 0.0 && a.is_finite() {
                (-e_of(u)).exp() / (2.0 * a)
            } else {
                f64::NAN
            }
        };
        let s_density = |u: f64| e_of(u).exp();
        let m_at = |u: f64| {
            m_cum[j]
                + quad::integrate_panels(m_density, &[u, hi]).map(|r| r.value).unwrap_or(f64::NAN)
        };
        let s_at = |u: f64| {
            s_cum[j]
                + quad::integrate_panels(s_density, &[u, hi]).map(|r| r.value).unwrap_or(f64::NAN)
        };
        sig_inc[j] = quad::integrate(|u| m_at(u) * s_density(u), lo, hi, 1e-9, 1e-300, 60)
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
        n_inc[j] = quad::integrate(|u| s_at(u) * m_density(u), lo, hi, 1e-9, 1e-300, 60)
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
    }

    // Collapse quarter-octave increments into octaves and judge them.
    let octave_sums = |inc: &[f64]| -> Vec<f64> {
        inc.chunks(SUBS).map(|c| c.iter().sum()).collect()
    };
    let s_oct = octave_sums(&s_inc);
    let m_oct = octave_sums(&m_inc);
    let sig_oct = octave_sums(&sig_inc);
    let n_oct = octave_sums(&n_inc);

    let s0 = judge(&s_oct, s_oct.iter().sum());
    let m0 = judge(&m_oct, m_oct.iter().sum());
    let sigma = judge(&sig_oct, sig_oct.iter().sum());
    let n = judge(&n_oct, n_oct.iter().sum());

    let boundary_type = match (sigma.is_finite(), n.is_finite()) {
        (Some(true), Some(true)) => BoundaryType::Regular,
        (Some(true), Some(false)) => BoundaryType::Exit,
        (Some(false), Some(true)) => BoundaryType::Entrance,
        (Some(false), Some(false)) => BoundaryType::Natural,
        _ => BoundaryType::Indeterminate,
    };
    let note = match boundary_type {
        BoundaryType::Entrance => Some(
            "entrance boundary: classification only, kernel construction unsupported".into(),
        ),
        BoundaryType::Indeterminate => {
            Some("one or more limits indeterminate within the node budget".into())
        }
        _ => None,
    };

    ClassificationReport { x0, s0, m0, sigma, n, boundary_type, note }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Coefficients;

    fn classify_power(alpha: f64, x0: f64) -> BoundaryType {
        classify(&Coefficients::power(alpha), x0).boundary_type
    }

    #[test]
    fn natural_boundary_at_alpha_two() {
        let report = classify(&Coefficients::power(2.0), 1.0);
        assert_eq!(report.boundary_type, BoundaryType::Natural);
        assert_eq!(report.s0.is_finite(), Some(true));
        assert_eq!(report.m0.is_finite(), Some(false));
    }

    #[test]
    fn exit_boundary_for_strong_degeneracy() {
        for &alpha in &[1.0, 1.25, 1.5, 1.75] {
            assert_eq!(classify_power(alpha, 1.0), BoundaryType::Exit, "alpha={alpha}");
        }
    }

    #[test]
    fn regular_boundary_for_mild_degeneracy() {
        for &alpha in &[0.0, 0.25, 0.5, 0.75] {
            assert_eq!(classify_power(alpha, 1.0), BoundaryType::Regular, "alpha={alpha}");
        }
    }

    #[test]
    fn verdicts_independent_of_anchor() {
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let kinds: Vec<BoundaryType> =
                [0.5, 1.0, 2.0].iter().map(|&x0| classify_power(alpha, x0)).collect();
            assert!(
                kinds.windows(2).all(|p| p[0] == p[1]),
                "alpha={alpha}: {kinds:?}"
            );
        }
    }

    #[test]
    fn entrance_boundary_detected_and_flagged() {
        // a = x, b ≡ 1: Σ diverges, N converges.
        let c = Coefficients::from_callables(
            std::sync::Arc::new(|x: f64| x),
            std::sync::Arc::new(|_| 1.0),
            Some(std::sync::Arc::new(|_| 1.0)),
            Some(std::sync::Arc::new(|_| 0.0)),
        );
        let report = classify(&c, 1.0);
        assert_eq!(report.boundary_type, BoundaryType::Entrance);
        assert!(report.note.as_deref().unwrap().contains("unsupported"));
    }

    #[test]
    fn nu_sign_consistency() {
        // ν ∈ (0,1) (alpha < 1) goes with a regular boundary, ν ≤ 0
        // (alpha ∈ [1,2)) with an exit boundary.
        for &alpha in &[0.25, 0.75] {
            assert_eq!(classify_power(alpha, 1.0), BoundaryType::Regular);
        }
        for &alpha in &[1.0, 1.5] {
            assert_eq!(classify_power(alpha, 1.0), BoundaryType::Exit);
        }
    }

    #[test]
    fn finite_values_match_closed_forms() {
        // a ≡ 1, b ≡ 0, x0 = 1: S0 = 1, M0 = 1/2, Σ = N = 1/4.
        let report = classify(&Coefficients::power(0.0), 1.0);
        let LimitValue::Finite { value: s0 } = report.s0 else { panic!("{:?}", report.s0) };
        let LimitValue::Finite { value: m0 } = report.m0 else { panic!("{:?}", report.m0) };
        let LimitValue::Finite { value: sig } = report.sigma else { panic!() };
        let LimitValue::Finite { value: n } = report.n else { panic!() };
        assert!((s0 - 1.0).abs() < 1e-6, "{s0}");
        assert!((m0 - 0.5).abs() < 1e-6, "{m0}");
        assert!((sig - 0.25).abs() < 1e-4, "{sig}");
        assert!((n - 0.25).abs() < 1e-4, "{n}");
    }
}
