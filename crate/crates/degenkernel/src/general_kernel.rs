//! Assembly of the fundamental solution of the original problem from the
//! transform bundle and the perturbation series:
//! p(x,y,t) = q_ν^V(φ(x), φ(y), t) · θ(φ(x))/θ(φ(y)) · φ'(y),
//! plus the closed-form approximants with certified ratio bounds, solutions
//! u_f, and the consistency residuals (weighted symmetry, semigroup
//! composition, backward/forward equations, derivative bounds).

use std::sync::Arc;

use crate::duhamel::{self, DuhamelTable, KernelValue, PotentialKernel};
use crate::model_kernel::{self, KernelError, KernelPoint};
use crate::quad;
use crate::specfun::EvalTolerance;
use crate::transform::{TransformBundle, TransformError};

#[derive(Debug)]
pub enum GeneralKernelError {
    Transform(TransformError),
    Kernel(KernelError),
}

impl core::fmt::Display for GeneralKernelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Transform(e) => write!(f, "{e}"),
            Self::Kernel(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for GeneralKernelError {}

impl From<TransformError> for GeneralKernelError {
    fn from(e: TransformError) -> Self {
        Self::Transform(e)
    }
}

impl From<KernelError> for GeneralKernelError {
    fn from(e: KernelError) -> Self {
        Self::Kernel(e)
    }
}

type Result<T> = core::result::Result<T, GeneralKernelError>;

/// The assembled kernel: an immutable transform bundle plus the potential
/// configuration of the series. Evaluations are pure; share freely.
pub struct GeneralKernel {
    bundle: Arc<TransformBundle>,
    pk: PotentialKernel,
}

impl GeneralKernel {
    /// Wires the potential of the bundle into a series configuration of the
    /// given truncation order. A trivial potential (power family) collapses
    /// the series to its first term regardless of `order`.
    pub fn new(bundle: TransformBundle, order: u32) -> Self {
        let bundle = Arc::new(bundle);
        let vb = bundle.clone();
        let effective_order = if bundle.has_trivial_potential() { 0 } else { order };
        let pk = PotentialKernel::new(
            bundle.nu(),
            Arc::new(move |z: f64| vb.v_potential(z).unwrap_or(f64::NAN)),
            bundle.v_sup(),
            effective_order,
        );
        Self { bundle, pk }
    }

    pub fn bundle(&self) -> &TransformBundle {
        &self.bundle
    }

    pub fn potential(&self) -> &PotentialKernel {
        &self.pk
    }

    fn tol(&self) -> EvalTolerance {
        self.pk.tol
    }

    /// p(x, y, t) with the series truncation bound carried through
    /// multiplicatively and the quadrature estimate reported separately.
    pub fn p(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        let zx = self.bundle.phi(x)?;
        let zy = self.bundle.phi(y)?;
        let gauge = self.bundle.theta(zx)? / self.bundle.theta(zy)? * self.bundle.phi_prime(y)?;
        let kv = duhamel::q_nu_v(&self.pk, KernelPoint::new(zx, zy, t)?)?;
        Ok(KernelValue {
            value: kv.value * gauge,
            truncation_bound: kv.truncation_bound,
            quadrature_estimate: kv.quadrature_estimate * gauge.abs(),
        })
    }

    /// A reusable series table for sweeps p(x, ·fixed y·, t ≤ horizon).
    pub fn p_table(&self, y: f64, horizon: f64) -> Result<PSlice<'_>> {
        let zy = self.bundle.phi(y)?;
        let table = DuhamelTable::build(&self.pk, zy, horizon)?;
        Ok(PSlice { gk: self, y, zy, table })
    }

    /// The zeroth approximant: q_ν in place of q_ν^V, same gauge factors.
    pub fn p_approx(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let zx = self.bundle.phi(x)?;
        let zy = self.bundle.phi(y)?;
        let gauge = self.bundle.theta(zx)? / self.bundle.theta(zy)? * self.bundle.phi_prime(y)?;
        let q = model_kernel::q_sigma(
            self.bundle.nu().get(),
            KernelPoint::new(zx, zy, t)?,
            &self.tol(),
        )?;
        Ok(q * gauge)
    }

    /// The order-k partial-series approximant.
    pub fn p_approx_k(&self, k: u32, x: f64, y: f64, t: f64) -> Result<f64> {
        let zx = self.bundle.phi(x)?;
        let zy = self.bundle.phi(y)?;
        let gauge = self.bundle.theta(zx)? / self.bundle.theta(zy)? * self.bundle.phi_prime(y)?;
        let table = DuhamelTable::build(&self.pk, zy, t)?;
        Ok(table.partial_sum(k, zx, t)? * gauge)
    }

    /// u_f(x,t) = ∫₀^∞ p(x,y,t) f(y) dy, evaluated in the transformed
    /// variable as θ(φx) ∫ q^V(φx, w, t) f(ψ(w))/θ(w) dw with a certified
    /// kernel tail cut.
    pub fn u_f<F: Fn(f64) -> f64>(&self, f: F, x: f64, t: f64) -> Result<KernelValue> {
        let zx = self.bundle.phi(x)?;
        let nu = self.bundle.nu();
        let table = DuhamelTable::build(&self.pk, zx, t)?;
        let theta_x = self.bundle.theta(zx)?;
        let (w_cut, tail) = model_kernel::tail_cut(nu, zx, t, 1e-16);
        let integrand = |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            // q^V(zx, w, t) via the weighted flip onto the table slot.
            let qv = match table.qv(w, t) {
                Ok(v) => v * (zx / w).powf(1.0 - nu.get()),
                Err(_) => return f64::NAN,
            };
            let (Ok(psi_w), Ok(theta_w)) = (self.bundle.psi(w), self.bundle.theta(w)) else {
                return f64::NAN;
            };
            qv * f(psi_w) / theta_w
        };
        let breaks = quad::peak_breaks(&[(zx, (zx * t).sqrt())], 0.0, w_cut);
        let r = quad::integrate_with_breaks(integrand, &breaks, 1e-10, 1e-300, 3000)
            .map_err(KernelError::from)?;
        let tilt = (t * self.pk.v_sup).exp();
        Ok(KernelValue {
            value: theta_x * r.value,
            truncation_bound: duhamel::truncation_tail(t, self.pk.v_sup, self.pk.order),
            quadrature_estimate: theta_x * (r.abs_err + tail * tilt),
        })
    }

    /// |m(y) p(x,y,t) - m(x) p(y,x,t)| with m(u) = φ(u)^{1-ν} θ(φ(u))²/φ'(u).
    pub fn symmetry_residual(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let m = |u: f64| -> Result<f64> {
            let zu = self.bundle.phi(u)?;
            Ok(zu.powf(1.0 - self.bundle.nu().get()) * self.bundle.theta(zu)?.powi(2)
                / self.bundle.phi_prime(u)?)
        };
        let lhs = m(y)? * self.p(x, y, t)?.value;
        let rhs = m(x)? * self.p(y, x, t)?.value;
        Ok((lhs - rhs).abs())
    }

    /// |p(x,y,t+s) - ∫ p(x,u,t) p(u,y,s) du|.
    pub fn ck_residual(&self, x: f64, y: f64, t: f64, s: f64) -> Result<f64> {
        let nu = self.bundle.nu().get();
        let zx = self.bundle.phi(x)?;
        let zy = self.bundle.phi(y)?;
        let theta_x = self.bundle.theta(zx)?;
        let theta_y = self.bundle.theta(zy)?;
        let phip_y = self.bundle.phi_prime(y)?;
        // Work in the transformed variable w = φ(u):
        // ∫ p(x,u,t) p(u,y,s) du
        //   = θx/θy φ'(y) ∫ q^V(zx, w, t) q^V(w, zy, s) dw.
        let table_x = DuhamelTable::build(&self.pk, zx, t)?;
        let table_y = DuhamelTable::build(&self.pk, zy, s)?;
        let integrand = |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            let left = match table_x.qv(w, t) {
                Ok(v) => v * (zx / w).powf(1.0 - nu),
                Err(_) => return f64::NAN,
            };
            let right = match table_y.qv(w, s) {
                Ok(v) => v,
                Err(_) => return f64::NAN,
            };
            left * right
        };
        let (cut_a, _) = model_kernel::tail_cut(self.bundle.nu(), zx, t, 1e-16);
        let (cut_b, _) = model_kernel::tail_cut(self.bundle.nu(), zy, s, 1e-16);
        let breaks = quad::peak_breaks(
            &[(zx, (zx * t).sqrt()), (zy, (zy * s).sqrt())],
            0.0,
            cut_a.max(cut_b),
        );
        let folded = quad::integrate_with_breaks(integrand, &breaks, 1e-9, 1e-300, 3000)
            .map_err(KernelError::from)?
            .value
            * theta_x / theta_y
            * phip_y;
        let direct = self.p(x, y, t + s)?.value;
        Ok((direct - folded).abs())
    }

    /// |(∂t - a(x)∂²x - b(x)∂x) p| by central differences with step h.
    pub fn pde_residual_backward(&self, x: f64, y: f64, t: f64, h: f64) -> Result<f64> {
        let slice = self.p_table(y, t + 2.0 * h)?;
        let px = |xx: f64, tt: f64| slice.p(xx, tt);
        let dt = (px(x, t + h)? - px(x, t - h)?) / (2.0 * h);
        let dx = (px(x + h, t)? - px(x - h, t)?) / (2.0 * h);
        let dxx = (px(x + h, t)? - 2.0 * px(x, t)? + px(x - h, t)?) / (h * h);
        let a = self.bundle.coefficients().a(x);
        let b = self.bundle.coefficients().b(x);
        Ok((dt - a * dxx - b * dx).abs())
    }

    /// |∂t p - ∂²y(a(y) p) + ∂y(b(y) p)| by central differences with step h.
    pub fn pde_residual_forward(&self, x: f64, y: f64, t: f64, h: f64) -> Result<f64> {
        let zx = self.bundle.phi(x)?;
        let table = DuhamelTable::build(&self.pk, zx, t + 2.0 * h)?;
        let nu = self.bundle.nu().get();
        let theta_x = self.bundle.theta(zx)?;
        let p_at = |yy: f64, tt: f64| -> Result<f64> {
            let zy = self.bundle.phi(yy)?;
            let qv = table.qv(zy, tt)? * (zx / zy).powf(1.0 - nu);
            Ok(qv * theta_x / self.bundle.theta(zy)? * self.bundle.phi_prime(yy)?)
        };
        let coeff = self.bundle.coefficients();
        let ap = |yy: f64, tt: f64| -> Result<f64> { Ok(coeff.a(yy) * p_at(yy, tt)?) };
        let bp = |yy: f64, tt: f64| -> Result<f64> { Ok(coeff.b(yy) * p_at(yy, tt)?) };
        let dt = (p_at(y, t + h)? - p_at(y, t - h)?) / (2.0 * h);
        let dyy_ap = (ap(y + h, t)? - 2.0 * ap(y, t)? + ap(y - h, t)?) / (h * h);
        let dy_bp = (bp(y + h, t)? - bp(y - h, t)?) / (2.0 * h);
        Ok((dt - dyy_ap + dy_bp).abs())
    }

    /// Verifies the Bell/Touchard product bound on |∂_x^k p| over a grid
    /// (x, y) ∈ (0, M)² at fixed t.
    pub fn p_derivative_bound_check(&self, k: u32, m_cap: f64, t: f64) -> Result<PBoundReport> {
        let nu = self.bundle.nu();
        model_kernel::check_admissible(nu, k).map_err(GeneralKernelError::from)?;
        let c_theta = self.sup_derivatives(k, m_cap, true)?;
        let c_phi = self.sup_derivatives(k, m_cap, false)?;
        let c_k_v = duhamel::estimate_c_k_v(&self.pk.v, k, 120);
        let touchard = touchard_poly(k, c_phi);
        let mut report = PBoundReport {
            pass: true,
            worst_x: 0.0,
            worst_y: 0.0,
            worst_margin: f64::INFINITY,
            c_theta,
            c_phi,
            c_k_v,
        };
        let grid: Vec<f64> = (1..=5).map(|i| m_cap * i as f64 / 5.2).collect();
        for &y in &grid {
            let zy = self.bundle.phi(y)?;
            let slice = self.p_table(y, t)?;
            for &x in &grid {
                let h = (1e-3 * x).max(1e-5).min(x / (k as f64 + 1.0) / 2.0);
                let p = |xx: f64| slice.p(xx, t);
                let lhs = match k {
                    0 => p(x)?.abs(),
                    1 => ((p(x + h)? - p(x - h)?) / (2.0 * h)).abs(),
                    2 => ((p(x + h)? - 2.0 * p(x)? + p(x - h)?) / (h * h)).abs(),
                    3 => ((p(x + 2.0 * h)? - 2.0 * p(x + h)? + 2.0 * p(x - h)?
                        - p(x - 2.0 * h)?)
                        / (2.0 * h * h * h))
                        .abs(),
                    _ => {
                        return Err(GeneralKernelError::Kernel(
                            KernelError::InadmissibleOrder { nu: nu.get(), k },
                        ))
                    }
                };
                let zx = self.bundle.phi(x)?;
                let s_k =
                    model_kernel::s_k(nu, k, KernelPoint::new(zx, zy, t)?, &self.tol())?;
                let rhs = c_theta
                    * touchard.max(1.0)
                    * (3.0f64.powi(k as i32) * c_k_v * t).exp()
                    * (1.0 / t + k as f64 + 1.0).powi(k as i32)
                    * s_k
                    * self.bundle.phi_prime(y)?.abs()
                    / self.bundle.theta(zy)?;
                let margin = rhs - lhs;
                if margin < report.worst_margin {
                    report.worst_margin = margin;
                    report.worst_x = x;
                    report.worst_y = y;
                }
                if lhs > rhs * (1.0 + 1e-9) {
                    report.pass = false;
                }
            }
        }
        Ok(report)
    }

    /// max_{j≤k} sup over (0, M) of |θ^{(j)}(φ(·))| or |φ^{(j)}|, by nested
    /// central differences on a grid, padded 25%.
    fn sup_derivatives(&self, k: u32, m_cap: f64, theta_side: bool) -> Result<f64> {
        let mut c = 0.0f64;
        for i in 1..=40 {
            let x = m_cap * i as f64 / 40.5;
            let h = (1e-3 * x).max(1e-5).min(x / 8.0);
            let base: Vec<f64> = (-3i32..=3)
                .map(|m| -> Result<f64> {
                    let u = x + m as f64 * h;
                    if theta_side {
                        Ok(self.bundle.theta(self.bundle.phi(u)?)?)
                    } else {
                        self.bundle.phi(u).map_err(Into::into)
                    }
                })
                .collect::<Result<_>>()?;
            let mut stencil = base;
            c = c.max(stencil[3].abs());
            for _ in 0..k {
                for i in 0..stencil.len() - 2 {
                    stencil[i] = (stencil[i + 2] - stencil[i]) / (2.0 * h);
                }
                stencil.truncate(stencil.len() - 2);
                c = c.max(stencil[stencil.len() / 2].abs());
            }
        }
        Ok(c * 1.25)
    }
}

/// One built series slice: p(x, ·y·, τ) for any x and τ up to the horizon.
pub struct PSlice<'a> {
    gk: &'a GeneralKernel,
    y: f64,
    zy: f64,
    table: DuhamelTable,
}

impl PSlice<'_> {
    pub fn p(&self, x: f64, t: f64) -> Result<f64> {
        let zx = self.gk.bundle.phi(x)?;
        let gauge = self.gk.bundle.theta(zx)? / self.gk.bundle.theta(self.zy)?
            * self.gk.bundle.phi_prime(self.y)?;
        Ok(self.table.qv(zx, t)? * gauge)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PBoundReport {
    pub pass: bool,
    pub worst_x: f64,
    pub worst_y: f64,
    /// Smallest rhs - lhs margin over the grid (negative on failure).
    pub worst_margin: f64,
    pub c_theta: f64,
    pub c_phi: f64,
    pub c_k_v: f64,
}

/// Stirling numbers of the second kind, S(n, j).
fn stirling2(n: u32, j: u32) -> f64 {
    if j == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if j > n {
        return 0.0;
    }
    let mut row = vec![0.0f64; (n + 1) as usize];
    row[0] = 1.0;
    for m in 1..=n {
        let mut next = vec![0.0f64; (n + 1) as usize];
        for jj in 1..=m {
            next[jj as usize] =
                jj as f64 * row[jj as usize] + row[(jj - 1) as usize];
        }
        row = next;
    }
    row[j as usize]
}

/// The k-th Touchard polynomial 𝔗_k(x) = Σ_{j=1}^k S(k,j) x^j (equal-argument
/// Bell polynomial sum).
pub fn touchard_poly(k: u32, x: f64) -> f64 {
    (1..=k).map(|j| stirling2(k, j) * x.powi(j as i32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms;
    use crate::transform::Coefficients;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn heat_kernel() -> GeneralKernel {
        let c = Coefficients::from_callables(
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Some(Arc::new(|_| 0.0)),
            Some(Arc::new(|_| 0.0)),
        );
        GeneralKernel::new(TransformBundle::build(c).unwrap(), 0)
    }

    fn example4_kernel() -> GeneralKernel {
        let c = Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|_| 0.5),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|_| 0.0)),
        );
        GeneralKernel::new(TransformBundle::build(c).unwrap(), 0)
    }

    #[test]
    fn heat_pipeline_collapses_to_dirichlet_kernel() {
        let gk = heat_kernel();
        for &(x, y, t) in &[(1.0, 1.0, 1.0), (0.3, 1.7, 0.4), (2.0, 0.5, 1.5)] {
            let got = gk.p(x, y, t).unwrap().value;
            let expected = closed_forms::reference_kernel(
                closed_forms::ReferenceKernel::HeatDirichlet,
                x,
                y,
                t,
            )
            .unwrap();
            assert!(rel_err(got, expected) < 1e-9, "({x},{y},{t}): {got} vs {expected}");
        }
    }

    #[test]
    fn example4_pipeline_collapses_to_sinh_kernel() {
        let gk = example4_kernel();
        for &(x, y, t) in &[(1.0, 1.0, 1.0), (0.4, 1.1, 0.3), (2.5, 0.8, 1.2)] {
            let got = gk.p(x, y, t).unwrap().value;
            let expected = closed_forms::reference_kernel(
                closed_forms::ReferenceKernel::Example4Dirichlet,
                x,
                y,
                t,
            )
            .unwrap();
            assert!(rel_err(got, expected) < 1e-9, "({x},{y},{t}): {got} vs {expected}");
        }
    }

    #[test]
    fn power_pipeline_collapses_to_p_alpha() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let gk =
                GeneralKernel::new(TransformBundle::build(Coefficients::power(alpha)).unwrap(), 0);
            for &(x, y, t) in &[(0.7, 1.2, 0.5), (0.1, 0.1, 0.1), (3.0, 2.0, 1.8)] {
                let got = gk.p(x, y, t).unwrap().value;
                let expected = closed_forms::p_alpha(alpha, x, y, t).unwrap();
                assert!(
                    rel_err(got, expected) < 1e-10,
                    "alpha={alpha} ({x},{y},{t}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn u_f_constant_initial_data_is_survival() {
        // f ≡ 1, a = x^α: u_f = 1 - mass loss.
        let alpha = 1.5;
        let gk =
            GeneralKernel::new(TransformBundle::build(Coefficients::power(alpha)).unwrap(), 0);
        for &(x, t) in &[(1.0, 0.5), (0.5, 1.0)] {
            let got = gk.u_f(|_| 1.0, x, t).unwrap().value;
            let expected = 1.0 - closed_forms::mass_loss(alpha, x, t).unwrap();
            assert!((got - expected).abs() < 1e-8, "({x},{t}): {got} vs {expected}");
        }
    }

    #[test]
    fn u_f_heat_is_erf() {
        let gk = heat_kernel();
        for &(x, t) in &[(1.0, 1.0), (0.5, 0.25)] {
            let got = gk.u_f(|_| 1.0, x, t).unwrap().value;
            let expected = crate::specfun::erf(x / (2.0 * t.sqrt()));
            assert!((got - expected).abs() < 1e-8, "({x},{t}): {got} vs {expected}");
        }
    }

    #[test]
    fn u_f_vanishes_at_the_boundary() {
        let gk = heat_kernel();
        let v1 = gk.u_f(|_| 1.0, 0.1, 0.5).unwrap().value;
        let v2 = gk.u_f(|_| 1.0, 0.01, 0.5).unwrap().value;
        assert!(v2 < v1 && v2 < 0.02, "{v1} {v2}");
    }

    #[test]
    fn u_f_probabilistic_range_and_monotonicity() {
        let gk =
            GeneralKernel::new(TransformBundle::build(Coefficients::power(1.0)).unwrap(), 0);
        let mut prev = 1.0f64;
        for &t in &[0.2, 0.5, 1.0, 2.0] {
            let v = gk.u_f(|_| 1.0, 1.0, t).unwrap().value;
            assert!(v > 0.0 && v < 1.0, "t={t}: {v}");
            assert!(v <= prev + 1e-10, "survival must not increase in t");
            prev = v;
        }
    }

    #[test]
    fn symmetry_residual_power_family() {
        let gk =
            GeneralKernel::new(TransformBundle::build(Coefficients::power(1.5)).unwrap(), 0);
        assert_eq!(gk.symmetry_residual(1.0, 1.0, 0.5).unwrap(), 0.0);
        let r = gk.symmetry_residual(0.3, 1.1, 0.5).unwrap();
        assert!(r < 1e-9, "{r}");
    }

    #[test]
    fn ck_residual_power_family() {
        let gk =
            GeneralKernel::new(TransformBundle::build(Coefficients::power(1.5)).unwrap(), 0);
        let r = gk.ck_residual(1.0, 1.0, 0.3, 0.4).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn pde_residuals_decay_quadratically() {
        let gk = heat_kernel();
        let rb1 = gk.pde_residual_backward(1.2, 0.9, 0.8, 1e-2).unwrap();
        let rb2 = gk.pde_residual_backward(1.2, 0.9, 0.8, 5e-3).unwrap();
        let order_b = (rb1 / rb2).log2();
        assert!(order_b > 1.8, "backward order {order_b} ({rb1} {rb2})");
        let rf1 = gk.pde_residual_forward(1.2, 0.9, 0.8, 1e-2).unwrap();
        let rf2 = gk.pde_residual_forward(1.2, 0.9, 0.8, 5e-3).unwrap();
        let order_f = (rf1 / rf2).log2();
        assert!(order_f > 1.8, "forward order {order_f} ({rf1} {rf2})");
    }

    #[test]
    fn ratio_bounds_hold_for_drift_family() {
        // a = x, b = x² e^{-x}: |p/p_approx - 1| ≤ e^{‖V‖t} - 1, and the
        // partial sums obey the order-k tail bound.
        let coeffs = Coefficients::power_drift(
            1.0,
            2.0,
            Arc::new(|x: f64| (-x).exp()),
            Arc::new(|x: f64| -(-x).exp()),
        );
        let gk = GeneralKernel::new(TransformBundle::build(coeffs).unwrap(), 4);
        let v_sup = gk.bundle().v_sup();
        for &(x, y, t) in &[(0.5, 1.0, 0.5), (1.5, 0.7, 1.0), (2.5, 2.0, 0.8)] {
            let p = gk.p(x, y, t).unwrap();
            let p0 = gk.p_approx(x, y, t).unwrap();
            let ratio = (p.value / p0 - 1.0).abs();
            let bound = (v_sup * t).exp() - 1.0;
            assert!(ratio <= bound + 1e-7, "({x},{y},{t}): ratio {ratio} bound {bound}");
            for k in 0..=2u32 {
                let pk_val = gk.p_approx_k(k, x, y, t).unwrap();
                let tail = (p.value - pk_val).abs() / p0;
                let tail_bound = duhamel::truncation_tail(t, v_sup, k);
                assert!(
                    tail <= tail_bound + 1e-6,
                    "order {k} at ({x},{y},{t}): {tail} > {tail_bound}"
                );
            }
        }
    }

    #[test]
    fn derivative_bound_check_drift_family_near_boundary() {
        let coeffs = Coefficients::power_drift(
            1.0,
            2.0,
            Arc::new(|x: f64| (-x).exp()),
            Arc::new(|x: f64| -(-x).exp()),
        );
        let gk = GeneralKernel::new(TransformBundle::build(coeffs).unwrap(), 4);
        for k in 0..=1u32 {
            let report = gk.p_derivative_bound_check(k, 0.5, 0.5).unwrap();
            assert!(
                report.pass,
                "k={k}: worst margin {} at ({}, {})",
                report.worst_margin, report.worst_x, report.worst_y
            );
        }
    }

    #[test]
    fn touchard_values() {
        // 𝔗_k(1) = Σ_{j≥1} S(k,j) = Bell(k): 1, 2, 5, 15 for k = 1..4.
        assert_eq!(touchard_poly(1, 1.0), 1.0);
        assert_eq!(touchard_poly(2, 1.0), 2.0);
        assert_eq!(touchard_poly(3, 1.0), 5.0);
        assert_eq!(touchard_poly(4, 1.0), 15.0);
        // 𝔗_2(x) = x + x².
        assert_eq!(touchard_poly(2, 3.0), 12.0);
    }
}
