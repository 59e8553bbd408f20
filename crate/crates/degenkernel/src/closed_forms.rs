//! Every kernel with an explicit printed formula: the power-family kernel
//! p_α with its mass-loss expressions, the drifted-power variant built from
//! the Λ potential, and the textbook reference kernels (heat with either
//! boundary condition, the geometric diffusion, and the linear-diffusion
//! pair). These serve as golden cross-checks for the assembled pipeline.

use std::str::FromStr;
use std::sync::Arc;

use crate::duhamel::{self, DuhamelTable, KernelValue, PotentialKernel};
use crate::model_kernel::{KernelError, ModelIndex};
use crate::quad;
use crate::specfun::{self, EvalTolerance, SpecFunError};
use crate::transform::CoefFn;

fn check_alpha(alpha: f64) -> Result<(), KernelError> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(KernelError::IndexOutOfRange(alpha));
    }
    Ok(())
}

/// The fundamental solution of ∂t u = x^α ∂²x u with absorption at 0,
/// α ∈ (0,2):
/// p_α(x,y,t) = x^{1/2} y^{1/2-α} / (t(2-α)) · e^{-(x^{2-α}+y^{2-α})/((2-α)²t)}
///              · I_{1/(2-α)}(2 (xy)^{1-α/2} / ((2-α)² t)),
/// evaluated in scaled form.
pub fn p_alpha(alpha: f64, x: f64, y: f64, t: f64) -> Result<f64, KernelError> {
    check_alpha(alpha)?;
    if !(x > 0.0 && y > 0.0 && t > 0.0) {
        return Err(KernelError::InvalidPoint { z: x, w: y, t });
    }
    let tol = EvalTolerance::default();
    let c = 2.0 - alpha;
    let u = 2.0 * (x * y).powf(1.0 - alpha / 2.0) / (c * c * t);
    // -(x^{2-α}+y^{2-α})/((2-α)² t) + u = -(x^{(2-α)/2} - y^{(2-α)/2})²/((2-α)² t)
    let gauss = (x.powf(c / 2.0) - y.powf(c / 2.0)).powi(2) / (c * c * t);
    let scaled = specfun::bessel_i_scaled(1.0 / c, u, &tol)?;
    Ok(x.sqrt() * y.powf(0.5 - alpha) / (t * c) * (-gauss).exp() * scaled)
}

/// Mass absorbed by time t: m_α(x,t) = Q(η, T) with η = 1/(2-α) and
/// T = x^{2-α}/((2-α)² t) (regularized upper incomplete gamma).
pub fn mass_loss(alpha: f64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_alpha(alpha)?;
    let eta = 1.0 / (2.0 - alpha);
    let big_t = x.powf(2.0 - alpha) / ((2.0 - alpha).powi(2) * t);
    Ok(specfun::reg_upper_gamma(eta, big_t, &EvalTolerance::default())?)
}

/// ln m_α(x,t), usable far into the regime where the mass loss underflows.
pub fn mass_loss_log(alpha: f64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_alpha(alpha)?;
    let eta = 1.0 / (2.0 - alpha);
    let big_t = x.powf(2.0 - alpha) / ((2.0 - alpha).powi(2) * t);
    Ok(specfun::ln_reg_upper_gamma(eta, big_t, &EvalTolerance::default())?)
}

/// Leading asymptotic expansion of the mass loss as α ↗ 2:
/// x^{α-1} e^{-T} / (Γ(η) ((2-α)²t)^{(α-1)/(2-α)}) · (1 + (2-α) t / x^{2-α}).
pub fn mass_loss_asymptotic(alpha: f64, x: f64, t: f64) -> Result<f64, KernelError> {
    Ok(mass_loss_asymptotic_log(alpha, x, t)?.exp())
}

/// ln of [`mass_loss_asymptotic`].
pub fn mass_loss_asymptotic_log(alpha: f64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_alpha(alpha)?;
    let c = 2.0 - alpha;
    let eta = 1.0 / c;
    let big_t = x.powf(c) / (c * c * t);
    Ok((alpha - 1.0) * x.ln() - big_t - specfun::ln_gamma(eta)
        - (alpha - 1.0) / c * (c * c * t).ln()
        + (1.0 + c * t / x.powf(c)).ln())
}

/// The drifted power family ∂t u = x^α ∂²x u + x^β φ(x) ∂x u via the series
/// around p_{α,0}(x,y,t) = p_α(x,y,t) e^{½∫_x^y u^{β-α} φ(u) du} with the
/// potential Λ(x) = -x^{2β-α}φ²/4 - (β-α)x^{β-1}φ/2 - x^βφ'/2.
pub struct DriftVariant {
    alpha: f64,
    beta: f64,
    phi: CoefFn,
    lambda_sup: f64,
    pk: PotentialKernel,
}

impl DriftVariant {
    /// Validates the hypotheses on φ numerically (bounded with bounded first
    /// derivative on a grid, decaying at infinity, nonzero limit at 0) and
    /// assembles the series configuration.
    pub fn new(
        alpha: f64,
        beta: f64,
        phi: CoefFn,
        phi_prime: CoefFn,
        order: u32,
    ) -> Result<Self, KernelError> {
        check_alpha(alpha)?;
        if !(beta >= 1.0) {
            return Err(KernelError::IndexOutOfRange(beta));
        }
        let mut phi_max = 0.0f64;
        for j in 0..200 {
            let x = 1e-4 * (1e6f64).powf(j as f64 / 199.0);
            let p = phi(x);
            let dp = phi_prime(x);
            if !p.is_finite() || !dp.is_finite() {
                return Err(KernelError::SpecFun(SpecFunError::Domain(
                    "drift shape φ not finite on the validation grid",
                )));
            }
            phi_max = phi_max.max(p.abs());
        }
        if phi_max > 1e-12 && phi(1e-6).abs() < 1e-3 * phi_max {
            return Err(KernelError::SpecFun(SpecFunError::Domain(
                "drift shape φ must have a nonzero limit at 0",
            )));
        }
        if phi(100.0).abs() > 1e-3 * phi_max.max(1e-300) {
            return Err(KernelError::SpecFun(SpecFunError::Domain(
                "drift shape φ must decay at infinity",
            )));
        }

        let nu = ModelIndex::new((1.0 - alpha) / (2.0 - alpha)).expect("alpha in (0,2)");
        // Λ in the model variable: V(z) = Λ(ψ(z)) with the analytic ψ.
        let lam_phi = phi.clone();
        let lam_phip = phi_prime.clone();
        let v: CoefFn = Arc::new(move |z: f64| {
            let x = ((2.0 - alpha).powi(2) * z).powf(1.0 / (2.0 - alpha));
            crate::transform::drift_potential_lambda(alpha, beta, &lam_phi, &lam_phip, x)
        });
        let mut lambda_sup = 0.0f64;
        for j in 0..400 {
            let x = 1e-6 * (1e9f64).powf(j as f64 / 399.0);
            lambda_sup = lambda_sup.max(
                crate::transform::drift_potential_lambda(alpha, beta, &phi, &phi_prime, x).abs(),
            );
        }
        lambda_sup *= 1.25;
        let pk = PotentialKernel::new(nu, v, lambda_sup, order);
        Ok(Self { alpha, beta, phi, lambda_sup, pk })
    }

    pub fn lambda_sup(&self) -> f64 {
        self.lambda_sup
    }

    /// ½ ∫_x^y u^{β-α} φ(u) du, sign-aware when x > y.
    fn half_exponent(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        let (lo, hi, sign) = if x <= y { (x, y, 1.0) } else { (y, x, -1.0) };
        let bma = self.beta - self.alpha;
        let phi = &self.phi;
        let r = quad::integrate(
            |u: f64| if u > 0.0 { u.powf(bma) * phi(u) } else { 0.0 },
            lo,
            hi,
            1e-12,
            1e-300,
            2000,
        )?;
        Ok(0.5 * sign * r.value)
    }

    /// Base kernel p_{α,0}(x,y,t) = p_α(x,y,t) e^{½∫_x^y u^{β-α}φ(u)du}.
    pub fn base_kernel(&self, x: f64, y: f64, t: f64) -> Result<f64, KernelError> {
        Ok(p_alpha(self.alpha, x, y, t)? * self.half_exponent(x, y)?.exp())
    }

    /// Order-k partial sum of the series with its ratio-bound certificates.
    pub fn p(&self, x: f64, y: f64, t: f64) -> Result<KernelValue, KernelError> {
        let c = 2.0 - self.alpha;
        let zx = x.powf(c) / (c * c);
        let zy = y.powf(c) / (c * c);
        let table = DuhamelTable::build(&self.pk, zy, t)?;
        let qv = table.qv(zx, t)?;
        // Gauge and measure factors in the original variable.
        let gauge = self.half_exponent(x, y)?.exp();
        let phip_y = y.powf(1.0 - self.alpha) / c;
        let value = qv * gauge * phip_y;
        Ok(KernelValue {
            value,
            truncation_bound: duhamel::truncation_tail(t, self.lambda_sup, self.pk.order),
            quadrature_estimate: table.quadrature_estimate() * value.abs(),
        })
    }
}

/// The explicitly printed reference kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKernel {
    /// Heat equation on (0,∞), absorbing: (πt)^{-1/2} e^{-(x²+y²)/(4t)} sinh(xy/(2t)).
    HeatDirichlet,
    /// Heat equation, reflecting: cosh in place of sinh.
    HeatNeumann,
    /// a = x²: the geometric diffusion density (natural boundary, no loss).
    GeometricAlpha2,
    /// a = x, b = 1/2 with absorption: y^{-1/2}(πt)^{-1/2} e^{-(x+y)/t} sinh(2√(xy)/t).
    Example4Dirichlet,
    /// a = x, b = 1/2 without boundary condition: cosh in place of sinh.
    Example4Free,
}

impl FromStr for ReferenceKernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heat_dirichlet" => Ok(Self::HeatDirichlet),
            "heat_neumann" => Ok(Self::HeatNeumann),
            "geometric_alpha2" => Ok(Self::GeometricAlpha2),
            "example4_dirichlet" => Ok(Self::Example4Dirichlet),
            "example4_free" => Ok(Self::Example4Free),
            other => Err(format!(
                "unknown reference kernel `{other}` (expected heat_dirichlet, heat_neumann, \
                 geometric_alpha2, example4_dirichlet, example4_free)"
            )),
        }
    }
}

/// Evaluates a reference kernel, with the sinh/cosh products folded into
/// difference-of-Gaussians form to avoid overflow.
pub fn reference_kernel(
    which: ReferenceKernel,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64, KernelError> {
    if !(x > 0.0 && y > 0.0 && t > 0.0) {
        return Err(KernelError::InvalidPoint { z: x, w: y, t });
    }
    let sqrt_pi_t = (std::f64::consts::PI * t).sqrt();
    Ok(match which {
        ReferenceKernel::HeatDirichlet => {
            ((-(x - y).powi(2) / (4.0 * t)).exp() - (-(x + y).powi(2) / (4.0 * t)).exp())
                / (2.0 * sqrt_pi_t)
        }
        ReferenceKernel::HeatNeumann => {
            ((-(x - y).powi(2) / (4.0 * t)).exp() + (-(x + y).powi(2) / (4.0 * t)).exp())
                / (2.0 * sqrt_pi_t)
        }
        ReferenceKernel::GeometricAlpha2 => {
            (x * y / (4.0 * std::f64::consts::PI * t)).sqrt() / (y * y)
                * (-(y.ln() - x.ln()).powi(2) / (4.0 * t) - t / 4.0).exp()
        }
        ReferenceKernel::Example4Dirichlet => {
            ((-(x.sqrt() - y.sqrt()).powi(2) / t).exp()
                - (-(x.sqrt() + y.sqrt()).powi(2) / t).exp())
                / (2.0 * y.sqrt() * sqrt_pi_t)
        }
        ReferenceKernel::Example4Free => {
            ((-(x.sqrt() - y.sqrt()).powi(2) / t).exp()
                + (-(x.sqrt() + y.sqrt()).powi(2) / t).exp())
                / (2.0 * y.sqrt() * sqrt_pi_t)
        }
    })
}
