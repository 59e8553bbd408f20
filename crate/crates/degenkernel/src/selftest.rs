//! The built-in verification suite: every consistency property the library
//! promises, run at pinned tolerances with one pass/fail verdict per
//! criterion. The `selftest` subcommand and the acceptance integration test
//! both drive [`run`].

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::closed_forms::{self, ReferenceKernel};
use crate::duhamel::{self, DuhamelTable, PotentialKernel};
use crate::general_kernel::GeneralKernel;
use crate::model_kernel::{self, KernelPoint, ModelIndex};
use crate::quad;
use crate::sde::{self, SimConfig};
use crate::specfun::EvalTolerance;
use crate::transform::{Coefficients, TransformBundle};
use crate::{boundary, expr};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    /// Worst observed value of the criterion's figure of merit.
    pub measured: f64,
    /// The pinned budget the figure of merit is compared against.
    pub budget: f64,
    pub detail: String,
    pub runtime_ms: u128,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:02} {:<28} measured={:>12.5e} budget={:>10.3e} ({} ms) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.budget,
            self.runtime_ms,
            self.detail
        )
    }
}

const TOL: EvalTolerance = EvalTolerance { rel_tol: 1e-12, abs_tol: 1e-300, max_terms: 500 };

const NU_SET: [f64; 6] = [-1.5, -1.0, -0.3, 0.0, 0.4, 0.7];

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Deterministic sample-point generator (fixed stream per criterion).
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

fn drift_family_potential() -> PotentialKernel {
    // a = x, b = x² e^{-x}: ν = 0 with the analytic Λ potential.
    let bundle = TransformBundle::build(Coefficients::power_drift(
        1.0,
        2.0,
        Arc::new(|x: f64| (-x).exp()),
        Arc::new(|x: f64| -(-x).exp()),
    ))
    .expect("drift family is admissible");
    let v_sup = bundle.v_sup();
    let b = Arc::new(bundle);
    let vb = b.clone();
    PotentialKernel::new(
        b.nu(),
        Arc::new(move |z: f64| vb.v_potential(z).unwrap_or(f64::NAN)),
        v_sup,
        4,
    )
}

fn heat_coefficients() -> Coefficients {
    Coefficients::from_callables(
        Arc::new(|_| 1.0),
        Arc::new(|_| 0.0),
        Some(Arc::new(|_| 0.0)),
        Some(Arc::new(|_| 0.0)),
    )
}

fn example4_coefficients() -> Coefficients {
    Coefficients::from_callables(
        Arc::new(|x: f64| x),
        Arc::new(|_| 0.5),
        Some(Arc::new(|_| 1.0)),
        Some(Arc::new(|_| 0.0)),
    )
}

type Criterion = (u32, &'static str, fn() -> (bool, f64, f64, String));

const CRITERIA: [Criterion; 14] = [
    (1, "representation-consistency", c01_representation),
    (2, "kernel-symmetry", c02_symmetry),
    (3, "total-mass", c03_total_mass),
    (4, "chapman-kolmogorov", c04_ck),
    (5, "pde-residual-order", c05_pde_order),
    (6, "derivative-recurrence", c06_derivative_recurrence),
    (7, "convolution-identity", c07_convolution),
    (8, "constant-potential-series", c08_constant_potential),
    (9, "pipeline-collapse", c09_pipeline_collapse),
    (10, "mass-loss", c10_mass_loss),
    (11, "monte-carlo-oracle", c11_monte_carlo),
    (12, "boundary-classification", c12_classification),
    (13, "derivative-bounds", c13_derivative_bounds),
    (14, "determinism", c14_determinism),
];

/// Runs every criterion whose name contains `filter` (all when absent),
/// in ascending id order.
pub fn run(filter: Option<&str>) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for (id, name, f) in CRITERIA {
        if let Some(pat) = filter {
            if !name.contains(pat) {
                continue;
            }
        }
        let started = Instant::now();
        let (pass, measured, budget, detail) = f();
        out.push(CriterionResult {
            id,
            name,
            pass,
            measured,
            budget,
            detail,
            runtime_ms: started.elapsed().as_millis(),
        });
    }
    out
}

// -- 1 ----------------------------------------------------------------------

fn c01_representation() -> (bool, f64, f64, String) {
    let started = Instant::now();
    let zs = log_grid(1e-4, 10.0, 12);
    let ts = log_grid(1e-2, 5.0, 6);
    let mut worst = 0.0f64;
    for &nu in &NU_SET {
        for &z in &zs {
            for &w in &zs {
                for &t in &ts {
                    let pt = KernelPoint { z, w, t };
                    let (sign, log_series) = match model_kernel::q_sigma_series_log(nu, pt, &TOL) {
                        Ok(v) => v,
                        Err(e) => return (false, f64::INFINITY, 1e-10, e.to_string()),
                    };
                    let log_bessel = match model_kernel::log_q_sigma(nu, pt, &TOL) {
                        Ok(v) => v,
                        Err(e) => return (false, f64::INFINITY, 1e-10, e.to_string()),
                    };
                    let rel = if sign <= 0.0 {
                        f64::INFINITY
                    } else {
                        ((log_series - log_bessel).exp() - 1.0).abs()
                    };
                    worst = worst.max(rel);
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-10 && secs < 5.0;
    (pass, worst, 1e-10, format!("12x12x6 log grid, 6 indices, {secs:.2}s (< 5s)"))
}

// -- 2 ----------------------------------------------------------------------

fn c02_symmetry() -> (bool, f64, f64, String) {
    let zs = log_grid(1e-4, 10.0, 12);
    let ts = log_grid(1e-2, 5.0, 6);
    let mut worst = 0.0f64;
    for &nu in &NU_SET {
        for &z in &zs {
            for &w in &zs {
                for &t in &ts {
                    let lhs = w.powf(1.0 - nu)
                        * model_kernel::q_sigma(nu, KernelPoint { z, w, t }, &TOL).unwrap_or(f64::NAN);
                    let rhs = z.powf(1.0 - nu)
                        * model_kernel::q_sigma(nu, KernelPoint { z: w, w: z, t }, &TOL)
                            .unwrap_or(f64::NAN);
                    let scale = lhs.abs().max(rhs.abs());
                    if scale > 1e-280 {
                        worst = worst.max((lhs - rhs).abs() / scale);
                    }
                }
            }
        }
    }
    (worst <= 1e-12, worst, 1e-12, "weighted symmetry on the criterion-1 grid".into())
}

// -- 3 ----------------------------------------------------------------------

fn c03_total_mass() -> (bool, f64, f64, String) {
    let mut worst = 0.0f64;
    for &nu in &NU_SET {
        let idx = ModelIndex::new(nu).unwrap();
        for &z in &[0.3, 1.0, 4.0] {
            for &t in &[0.2, 1.0] {
                let formula = match model_kernel::total_mass(idx, z, t, &TOL) {
                    Ok(v) => v,
                    Err(e) => return (false, f64::INFINITY, 1e-10, e.to_string()),
                };
                let quadrature = match model_kernel::v_g(idx, |_| 1.0, z, t, &TOL) {
                    Ok(r) => r.value,
                    Err(e) => return (false, f64::INFINITY, 1e-10, e.to_string()),
                };
                worst = worst.max((formula - quadrature).abs());
            }
        }
    }
    (worst <= 1e-10, worst, 1e-10, "gamma formula vs kernel quadrature, 6 indices".into())
}

// -- 4 ----------------------------------------------------------------------

fn c04_ck() -> (bool, f64, f64, String) {
    let mut worst_plain = 0.0f64;
    let mut gen = Lcg(20240801);
    for &nu in &NU_SET {
        let idx = ModelIndex::new(nu).unwrap();
        for _ in 0..20 {
            let z = gen.in_range(0.1, 3.0);
            let w = gen.in_range(0.1, 3.0);
            let t = gen.in_range(0.1, 1.0);
            let s = gen.in_range(0.1, 1.0);
            let folded = match model_kernel::conv_q(idx, 0, 0, z, w, t, s, &TOL) {
                Ok(r) => r.value,
                Err(e) => return (false, f64::INFINITY, 1e-6, e.to_string()),
            };
            let direct =
                model_kernel::q_sigma(nu, KernelPoint { z, w, t: t + s }, &TOL).unwrap_or(f64::NAN);
            worst_plain = worst_plain.max((folded - direct).abs());
        }
    }
    if worst_plain > 1e-6 {
        return (false, worst_plain, 1e-6, "plain-kernel semigroup residual".into());
    }

    // Potential-kernel semigroup property at order 4 for the drift family.
    let pk = drift_family_potential();
    let nu = pk.nu.get();
    let mut worst_v = 0.0f64;
    for &(z, w, t, s) in &[(0.9, 1.2, 0.45, 0.35), (0.5, 0.8, 0.3, 0.3), (1.5, 0.6, 0.5, 0.4)] {
        let table_z = DuhamelTable::build(&pk, z, t).unwrap();
        let table_w = DuhamelTable::build(&pk, w, s).unwrap();
        let direct = DuhamelTable::build(&pk, w, t + s)
            .unwrap()
            .qv(z, t + s)
            .unwrap_or(f64::NAN);
        let integrand = |xi: f64| {
            if xi <= 0.0 {
                return 0.0;
            }
            let left = (z / xi).powf(1.0 - nu) * table_z.qv(xi, t).unwrap_or(f64::NAN);
            left * table_w.qv(xi, s).unwrap_or(f64::NAN)
        };
        let breaks = quad::peak_breaks(
            &[(z, (z * t).sqrt()), (w, (w * s).sqrt())],
            0.0,
            (w.sqrt() + 11.0 * (t + s).sqrt()).powi(2),
        );
        let folded =
            quad::integrate_with_breaks(integrand, &breaks, 1e-8, 1e-300, 2500).unwrap().value;
        worst_v = worst_v.max((folded - direct).abs());
    }
    let pass = worst_v <= 1e-4;
    (
        pass,
        worst_plain.max(worst_v),
        1e-4,
        format!("plain residual {worst_plain:.2e} (<=1e-6), series residual {worst_v:.2e} (<=1e-4)"),
    )
}

// -- 5 ----------------------------------------------------------------------

fn c05_pde_order() -> (bool, f64, f64, String) {
    let hs = [1e-2, 5e-3, 2.5e-3];
    let mut min_order = f64::INFINITY;
    let mut detail = String::new();

    let record = |label: &str, residuals: [f64; 3], min_order: &mut f64, detail: &mut String| {
        let o1 = (residuals[0] / residuals[1]).log2();
        let o2 = (residuals[1] / residuals[2]).log2();
        let o = o1.min(o2);
        if o < *min_order {
            *min_order = o;
            *detail = format!("slowest: {label} (orders {o1:.2}, {o2:.2})");
        }
    };

    // Plain model kernel, backward and forward.
    for &nu in &[-1.0, 0.4] {
        let (z, w, t) = (1.2, 0.9, 0.8);
        let q = |zz: f64, ww: f64, tt: f64| {
            model_kernel::q_sigma(nu, KernelPoint { z: zz, w: ww, t: tt }, &TOL).unwrap()
        };
        let back = |h: f64| {
            let dt = (q(z, w, t + h) - q(z, w, t - h)) / (2.0 * h);
            let dz = (q(z + h, w, t) - q(z - h, w, t)) / (2.0 * h);
            let dzz = (q(z + h, w, t) - 2.0 * q(z, w, t) + q(z - h, w, t)) / (h * h);
            (dt - z * dzz - nu * dz).abs()
        };
        let fwd = |h: f64| {
            let dt = (q(z, w, t + h) - q(z, w, t - h)) / (2.0 * h);
            let dw = (q(z, w + h, t) - q(z, w - h, t)) / (2.0 * h);
            let dww = (q(z, w + h, t) - 2.0 * q(z, w, t) + q(z, w - h, t)) / (h * h);
            (dt - w * dww - (2.0 - nu) * dw).abs()
        };
        record(
            &format!("q backward nu={nu}"),
            [back(hs[0]), back(hs[1]), back(hs[2])],
            &mut min_order,
            &mut detail,
        );
        record(
            &format!("q forward nu={nu}"),
            [fwd(hs[0]), fwd(hs[1]), fwd(hs[2])],
            &mut min_order,
            &mut detail,
        );
    }

    // Constant-potential series kernel: (∂t - L_ν - c) q^V = 0. The order-k
    // partial sum obeys (∂t - L - V) S_k = -V q_{ν,k}, so the truncation
    // order must be high enough that this intrinsic residual sits below the
    // finest h² term, and the quadrature rule dense enough to match; the
    // study therefore runs at order 8 on a dense rule through the smooth
    // per-point evaluation path.
    {
        let c = 0.5;
        let nu = 0.0;
        let mut pk =
            PotentialKernel::new(ModelIndex::new(nu).unwrap(), Arc::new(move |_| c), c.abs(), 8);
        pk.grid = crate::duhamel::SeriesGrid {
            xi_nodes: 24,
            tau_nodes: 12,
            time_gl: 28,
            rho_panels: 48,
            rho_gl: 10,
        };
        let (z, w, t) = (1.1, 0.9, 0.7);
        let table = DuhamelTable::build(&pk, w, t + 2.5e-2).unwrap();
        let qv = |zz: f64, tt: f64| table.qv_direct(zz, tt).unwrap();
        let back = |h: f64| {
            let dt = (qv(z, t + h) - qv(z, t - h)) / (2.0 * h);
            let dz = (qv(z + h, t) - qv(z - h, t)) / (2.0 * h);
            let dzz = (qv(z + h, t) - 2.0 * qv(z, t) + qv(z - h, t)) / (h * h);
            (dt - z * dzz - nu * dz - c * qv(z, t)).abs()
        };
        record(
            "q^V backward (constant V)",
            [back(hs[0]), back(hs[1]), back(hs[2])],
            &mut min_order,
            &mut detail,
        );
    }

    // Assembled kernels in the closed-form families.
    let families: Vec<(&str, GeneralKernel)> = vec![
        ("heat", GeneralKernel::new(TransformBundle::build(heat_coefficients()).unwrap(), 0)),
        (
            "example4",
            GeneralKernel::new(TransformBundle::build(example4_coefficients()).unwrap(), 0),
        ),
        (
            "p_alpha(1.5)",
            GeneralKernel::new(TransformBundle::build(Coefficients::power(1.5)).unwrap(), 0),
        ),
    ];
    for (label, gk) in &families {
        let (x, y, t) = (1.2, 0.9, 0.8);
        let back: Vec<f64> =
            hs.iter().map(|&h| gk.pde_residual_backward(x, y, t, h).unwrap()).collect();
        record(&format!("p backward {label}"), [back[0], back[1], back[2]], &mut min_order, &mut detail);
        let fwd: Vec<f64> =
            hs.iter().map(|&h| gk.pde_residual_forward(x, y, t, h).unwrap()).collect();
        record(&format!("p forward {label}"), [fwd[0], fwd[1], fwd[2]], &mut min_order, &mut detail);
    }

    (min_order >= 1.9, min_order, 1.9, detail)
}

// -- 6 ----------------------------------------------------------------------

fn c06_derivative_recurrence() -> (bool, f64, f64, String) {
    let mut worst = 0.0f64;
    for &nu in &[-1.0, -0.5, 0.4] {
        let idx = ModelIndex::new(nu).unwrap();
        for &(z, w, t) in &[(0.9, 1.3, 0.7), (1.5, 0.6, 0.5)] {
            for k in 1..=3u32 {
                let pt = KernelPoint { z, w, t };
                let exact = model_kernel::dzk_q(idx, k, pt, &TOL).unwrap();
                let q = |zz: f64| {
                    model_kernel::q_sigma(nu, KernelPoint { z: zz, w, t }, &TOL).unwrap()
                };
                let fd = |h: f64| match k {
                    1 => (q(z + h) - q(z - h)) / (2.0 * h),
                    2 => (q(z + h) - 2.0 * q(z) + q(z - h)) / (h * h),
                    _ => {
                        (q(z + 2.0 * h) - 2.0 * q(z + h) + 2.0 * q(z - h) - q(z - 2.0 * h))
                            / (2.0 * h * h * h)
                    }
                };
                let h = 0.02 * z.max(1.0);
                // Richardson extrapolation of the O(h²) stencils.
                let richardson = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
                worst = worst.max((richardson - exact).abs() / exact.abs().max(1e-300));
            }
        }
    }
    (worst <= 1e-6, worst, 1e-6, "k <= 3, both branches of the extended family".into())
}

// -- 7 ----------------------------------------------------------------------

fn c07_convolution() -> (bool, f64, f64, String) {
    let cases: [(f64, u32, u32); 6] = [
        (0.4, 0, 0),
        (-1.5, 1, 0),
        (-1.5, 1, 1),
        (-1.5, 2, 1),
        (-2.0, 2, 1),
        (-1.0, 1, 0),
    ];
    let mut worst = 0.0f64;
    for &(nu, k, l) in &cases {
        let idx = ModelIndex::new(nu).unwrap();
        for &(z, w, t, s) in &[(0.7, 1.3, 0.4, 0.6), (1.1, 0.5, 0.3, 0.5)] {
            let lhs = match model_kernel::conv_q(idx, k, l, z, w, t, s, &TOL) {
                Ok(r) => r.value,
                Err(e) => return (false, f64::INFINITY, 1e-6, e.to_string()),
            };
            let rhs = model_kernel::conv_q_closed(idx, k, l, z, w, t, s, &TOL).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    (worst <= 1e-6, worst, 1e-6, "(k,l) in {(0,0),(1,0),(1,1),(2,1)}".into())
}

// -- 8 ----------------------------------------------------------------------

fn c08_constant_potential() -> (bool, f64, f64, String) {
    let mut worst_ratio = 0.0f64; // violation measured as fraction of budget
    let mut detail = String::new();
    for &c in &[-1.0, 0.5] {
        let pk = PotentialKernel::new(
            ModelIndex::new(0.0).unwrap(),
            Arc::new(move |_| c),
            c.abs(),
            6,
        );
        for &w in &[0.3, 1.0, 3.0] {
            for &t in &[0.5, 1.0] {
                let table = DuhamelTable::build(&pk, w, t).unwrap();
                for &z in &[0.3, 1.0, 3.0] {
                    let q = model_kernel::q_sigma(0.0, KernelPoint { z, w, t }, &TOL).unwrap();
                    let exact = (c * t).exp() * q;
                    let qv = table.qv(z, t).unwrap();
                    // Exactness within the certified budget.
                    let budget =
                        duhamel::truncation_tail(t, c.abs(), 6) * q + 1e-7 * q.max(1e-12);
                    let frac = (qv - exact).abs() / budget;
                    if frac > worst_ratio {
                        worst_ratio = frac;
                        detail = format!("exactness at c={c} z={z} w={w} t={t}");
                    }
                    // Ratio bound. For constant c > 0 this is an equality
                    // (|q^V/q - 1| = e^{ct} - 1 exactly), so a sliver of
                    // headroom keeps quadrature jitter from reading as a
                    // violation.
                    let ratio = (qv / q - 1.0).abs();
                    let rb = (t * c.abs()).exp() - 1.0;
                    let frac = ratio / (rb * (1.0 + 1e-7) + 1e-12);
                    if frac > worst_ratio {
                        worst_ratio = frac;
                        detail = format!("ratio bound at c={c} z={z} w={w} t={t}");
                    }
                    // Order-k tail bounds.
                    for k in 0..6u32 {
                        let partial = table.partial_sum(k, z, t).unwrap();
                        let tail = (qv - partial).abs() / q;
                        let tb = duhamel::truncation_tail(t, c.abs(), k);
                        let frac = tail / (tb * (1.0 + 1e-6) + 1e-9);
                        if frac > worst_ratio {
                            worst_ratio = frac;
                            detail = format!("order-{k} tail at c={c} z={z} w={w} t={t}");
                        }
                    }
                }
            }
        }
    }
    (worst_ratio <= 1.0, worst_ratio, 1.0, format!("worst budget fraction: {detail}"))
}

// -- 9 ----------------------------------------------------------------------

fn c09_pipeline_collapse() -> (bool, f64, f64, String) {
    let started = Instant::now();
    let xs = log_grid(0.05, 5.0, 6);
    let ts = log_grid(0.05, 2.0, 4);
    let mut worst = 0.0f64;
    let mut run_family = |gk: &GeneralKernel,
                          closed: &dyn Fn(f64, f64, f64) -> f64,
                          label: &str|
     -> Result<(), String> {
        for &x in &xs {
            for &y in &xs {
                for &t in &ts {
                    let got = gk.p(x, y, t).map_err(|e| format!("{label}: {e}"))?.value;
                    let expected = closed(x, y, t);
                    let scale = expected.abs().max(1e-280);
                    worst = worst.max((got - expected).abs() / scale);
                }
            }
        }
        Ok(())
    };

    let heat = GeneralKernel::new(TransformBundle::build(heat_coefficients()).unwrap(), 0);
    if let Err(e) = run_family(
        &heat,
        &|x, y, t| closed_forms::reference_kernel(ReferenceKernel::HeatDirichlet, x, y, t).unwrap(),
        "heat",
    ) {
        return (false, f64::INFINITY, 1e-8, e);
    }
    let ex4 = GeneralKernel::new(TransformBundle::build(example4_coefficients()).unwrap(), 0);
    if let Err(e) = run_family(
        &ex4,
        &|x, y, t| {
            closed_forms::reference_kernel(ReferenceKernel::Example4Dirichlet, x, y, t).unwrap()
        },
        "example4",
    ) {
        return (false, f64::INFINITY, 1e-8, e);
    }
    for &alpha in &[0.5, 1.0, 1.5] {
        let gk = GeneralKernel::new(TransformBundle::build(Coefficients::power(alpha)).unwrap(), 0);
        if let Err(e) = run_family(
            &gk,
            &|x, y, t| closed_forms::p_alpha(alpha, x, y, t).unwrap(),
            &format!("p_alpha({alpha})"),
        ) {
            return (false, f64::INFINITY, 1e-8, e);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && secs < 60.0;
    (pass, worst, 1e-8, format!("5 families, 6x6x4 grid each, {secs:.1}s (< 60s)"))
}

// -- 10 ---------------------------------------------------------------------

fn c10_mass_loss() -> (bool, f64, f64, String) {
    // Formula vs kernel deficit.
    let mut worst = 0.0f64;
    for &alpha in &[0.5, 1.0, 1.5] {
        for &(x, t) in &[(1.0f64, 0.7f64), (0.5, 1.0)] {
            let c = 2.0 - alpha;
            let z = x.powf(c) / (c * c);
            let (w_cut, _) =
                model_kernel::tail_cut(ModelIndex::new((1.0 - alpha) / c).unwrap(), z, t, 1e-14);
            let y_cut = (c * c * w_cut).powf(1.0 / c);
            let integral = quad::integrate(
                |y| {
                    if y <= 0.0 {
                        0.0
                    } else {
                        closed_forms::p_alpha(alpha, x, y, t).unwrap_or(f64::NAN)
                    }
                },
                0.0,
                y_cut,
                1e-11,
                1e-300,
                4000,
            )
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
            let formula = closed_forms::mass_loss(alpha, x, t).unwrap();
            worst = worst.max((formula - (1.0 - integral)).abs());
        }
    }
    if worst > 1e-8 {
        return (false, worst, 1e-8, "mass loss vs kernel deficit".into());
    }

    // α = 1 closed form.
    let mut worst_exp = 0.0f64;
    for &(x, t) in &[(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)] {
        let m = closed_forms::mass_loss(1.0, x, t).unwrap();
        worst_exp = worst_exp.max((m - (-x / t).exp()).abs());
    }
    if worst_exp > 1e-12 {
        return (false, worst_exp, 1e-12, "alpha = 1 exponential form".into());
    }

    // α ↗ 2 asymptotics: the pinned envelope demands the ratio within
    // 1 ± 5(2-α), monotone toward 1. The true deficit is
    // 1 - ratio = [(η-1) ln T - ln Γ(η)]/T + O(1/T) ~ 2(2-α) ln(1/(2-α)),
    // which exceeds the linear envelope at α = 1.99 (0.0553 > 0.05); the
    // check is reported faithfully rather than loosened.
    let mut prev = 0.0f64;
    let mut worst_ratio_gap = 0.0f64;
    for &alpha in &[1.9, 1.95, 1.99] {
        let c = 2.0 - alpha;
        let big_t = 1.0f64.powf(c) / (c * c);
        let ratio = -closed_forms::mass_loss_log(alpha, 1.0, 1.0).unwrap() / big_t;
        if ratio <= prev {
            return (false, ratio, 1.0, format!("ratio not monotone at alpha={alpha}"));
        }
        let gap = (ratio - 1.0).abs() / (5.0 * c);
        worst_ratio_gap = worst_ratio_gap.max(gap);
        prev = ratio;
    }
    let pass = worst_ratio_gap <= 1.0;
    (
        pass,
        worst_ratio_gap,
        1.0,
        format!(
            "deficit {worst:.1e} (<=1e-8), exp form {worst_exp:.1e} (<=1e-12), linear-envelope \
             fraction {worst_ratio_gap:.3}; the true approach rate carries a ln(1/(2-alpha)) \
             factor the linear envelope omits, so 1.105 at alpha=1.99 is the exact outcome"
        ),
    )
}

// -- 11 ---------------------------------------------------------------------

fn c11_monte_carlo() -> (bool, f64, f64, String) {
    let started = Instant::now();
    let make_cfg = |seed: u64| SimConfig {
        dt: 1e-4,
        n_paths: 200_000,
        seed,
        bins: 50,
        ..Default::default()
    };
    let mut worst_sigmas = 0.0f64;
    let mut min_bin_fraction = 1.0f64;
    let mut detail = String::new();

    // Expected bin masses from a kernel density over the survivor bins.
    let bin_check = |hist: &sde::Histogram,
                     n_paths: u64,
                     density: &dyn Fn(f64) -> f64,
                     total_mass: f64|
     -> (f64, usize, usize) {
        let bins = hist.masses.len() - 1;
        let mut checked = 0usize;
        let mut ok = 0usize;
        let mut covered = 0.0f64;
        for i in 0..bins {
            let (lo, hi) = (hist.edges[i], hist.edges[i + 1]);
            let expected =
                quad::integrate(density, lo, hi, 1e-8, 1e-12, 600).map(|r| r.value).unwrap_or(0.0);
            covered += expected;
            if expected * n_paths as f64 >= 0.5 {
                checked += 1;
                let se = (expected * (1.0 - expected) / n_paths as f64).sqrt();
                if (hist.masses[i] - expected).abs() <= 4.0 * se {
                    ok += 1;
                }
            }
        }
        // Overflow bin carries the remaining survivor mass.
        let expected_overflow = (total_mass - covered).max(0.0);
        if expected_overflow * n_paths as f64 >= 0.5 {
            checked += 1;
            let se = (expected_overflow * (1.0 - expected_overflow) / n_paths as f64).sqrt();
            if (hist.masses[bins] - expected_overflow).abs() <= 4.0 * se {
                ok += 1;
            }
        }
        (ok as f64 / checked.max(1) as f64, ok, checked)
    };

    // (a) Model kernel: ν = 0, z = 1, t = 1.
    {
        let cfg = make_cfg(42);
        let r = sde::simulate_model(0.0, None::<&fn(f64) -> f64>, 1.0, 1.0, &cfg).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        let sigmas = (r.survival - expected).abs() / r.survival_se;
        worst_sigmas = worst_sigmas.max(sigmas);
        let mass =
            model_kernel::total_mass(ModelIndex::new(0.0).unwrap(), 1.0, 1.0, &TOL).unwrap();
        let (frac, ok, checked) = bin_check(
            &r.histogram,
            r.n_paths,
            &|y| {
                if y <= 0.0 {
                    0.0
                } else {
                    model_kernel::q_sigma(0.0, KernelPoint { z: 1.0, w: y, t: 1.0 }, &TOL)
                        .unwrap_or(0.0)
                }
            },
            mass,
        );
        min_bin_fraction = min_bin_fraction.min(frac);
        detail.push_str(&format!("model {sigmas:.2}σ bins {ok}/{checked}; "));
    }

    // (b) Heat kernel: x = 1, t = 1.
    {
        let bundle = TransformBundle::build(Coefficients::power(0.0)).unwrap();
        let cfg = make_cfg(43);
        let r = sde::simulate_general(&bundle, 1.0, 1.0, &cfg).unwrap();
        let expected = crate::specfun::erf(0.5);
        let sigmas = (r.survival - expected).abs() / r.survival_se;
        worst_sigmas = worst_sigmas.max(sigmas);
        let (frac, ok, checked) = bin_check(
            &r.histogram,
            r.n_paths,
            &|y| {
                if y <= 0.0 {
                    0.0
                } else {
                    closed_forms::reference_kernel(ReferenceKernel::HeatDirichlet, 1.0, y, 1.0)
                        .unwrap_or(0.0)
                }
            },
            expected,
        );
        min_bin_fraction = min_bin_fraction.min(frac);
        detail.push_str(&format!("heat {sigmas:.2}σ bins {ok}/{checked}; "));
    }

    // (c) Power family α = 1.5: x = 1, t = 0.5.
    {
        let bundle = TransformBundle::build(Coefficients::power(1.5)).unwrap();
        let cfg = make_cfg(44);
        let r = sde::simulate_general(&bundle, 1.0, 0.5, &cfg).unwrap();
        let expected = 1.0 - closed_forms::mass_loss(1.5, 1.0, 0.5).unwrap();
        let sigmas = (r.survival - expected).abs() / r.survival_se;
        worst_sigmas = worst_sigmas.max(sigmas);
        let (frac, ok, checked) = bin_check(
            &r.histogram,
            r.n_paths,
            &|y| {
                if y <= 0.0 {
                    0.0
                } else {
                    closed_forms::p_alpha(1.5, 1.0, y, 0.5).unwrap_or(0.0)
                }
            },
            expected,
        );
        min_bin_fraction = min_bin_fraction.min(frac);
        detail.push_str(&format!("alpha=1.5 {sigmas:.2}σ bins {ok}/{checked}; "));
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = worst_sigmas <= 4.0 && min_bin_fraction >= 0.95 && secs < 180.0;
    (
        pass,
        worst_sigmas,
        4.0,
        format!("{detail}bin pass fraction {min_bin_fraction:.3} (>=0.95), {secs:.0}s (< 180s)"),
    )
}

// -- 12 ---------------------------------------------------------------------

fn c12_classification() -> (bool, f64, f64, String) {
    let mut failures = 0u32;
    let mut detail = String::new();
    for i in 0..=8 {
        let alpha = 0.25 * i as f64;
        let expected = if alpha < 1.0 {
            boundary::BoundaryType::Regular
        } else if alpha < 2.0 {
            boundary::BoundaryType::Exit
        } else {
            boundary::BoundaryType::Natural
        };
        let mut kinds = Vec::new();
        for &x0 in &[0.5, 1.0, 2.0] {
            kinds.push(boundary::classify(&Coefficients::power(alpha), x0).boundary_type);
        }
        let consistent = kinds.windows(2).all(|p| p[0] == p[1]);
        if !consistent || kinds[0] != expected {
            failures += 1;
            detail.push_str(&format!("alpha={alpha}: got {kinds:?}, expected {expected}; "));
        }
    }
    if failures == 0 {
        detail = "cases reproduced for alpha in {0, 0.25, ..., 2}, x0-independent".into();
    }
    (failures == 0, failures as f64, 0.0, detail)
}

// -- 13 ---------------------------------------------------------------------

fn c13_derivative_bounds() -> (bool, f64, f64, String) {
    // Series-kernel bound on the near-boundary grid.
    let pk = drift_family_potential();
    let mut worst_margin = f64::INFINITY;
    for k in 0..=1u32 {
        for &z in &[0.1, 0.3, 0.5] {
            for &w in &[0.1, 0.3, 0.5] {
                let check =
                    match duhamel::check_derivative_bound(&pk, k, KernelPoint { z, w, t: 0.5 }) {
                        Ok(c) => c,
                        Err(e) => return (false, f64::NEG_INFINITY, 0.0, e.to_string()),
                    };
                worst_margin = worst_margin.min(check.rhs - check.lhs);
                if !check.pass {
                    return (
                        false,
                        check.rhs - check.lhs,
                        0.0,
                        format!("series bound failed at k={k} z={z} w={w}"),
                    );
                }
            }
        }
    }

    // Assembled-kernel bound over (0, 0.5)².
    let coeffs = Coefficients::power_drift(
        1.0,
        2.0,
        Arc::new(|x: f64| (-x).exp()),
        Arc::new(|x: f64| -(-x).exp()),
    );
    let gk = GeneralKernel::new(TransformBundle::build(coeffs).unwrap(), 4);
    for k in 0..=1u32 {
        let report = match gk.p_derivative_bound_check(k, 0.5, 0.5) {
            Ok(r) => r,
            Err(e) => return (false, f64::NEG_INFINITY, 0.0, e.to_string()),
        };
        worst_margin = worst_margin.min(report.worst_margin);
        if !report.pass {
            return (
                false,
                report.worst_margin,
                0.0,
                format!("assembled bound failed at k={k} ({}, {})", report.worst_x, report.worst_y),
            );
        }
    }
    (
        worst_margin >= 0.0,
        worst_margin,
        0.0,
        "series and assembled bounds on (0, 0.5]², k in {0, 1} (margin = rhs - lhs)".into(),
    )
}

// -- 14 ---------------------------------------------------------------------

fn c14_determinism() -> (bool, f64, f64, String) {
    let cfg = SimConfig { dt: 1e-3, n_paths: 4000, seed: 12345, ..Default::default() };
    let run_sim = || sde::simulate_model(0.0, None::<&fn(f64) -> f64>, 1.0, 0.5, &cfg).unwrap();
    let a = serde_json::to_string(&run_sim()).unwrap();
    let b = serde_json::to_string(&run_sim()).unwrap();
    if a != b {
        return (false, 1.0, 0.0, "repeat run diverged".into());
    }
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| serde_json::to_string(&run_sim()).unwrap());
    let dual = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(|| serde_json::to_string(&run_sim()).unwrap());
    if single != dual || single != a {
        return (false, 1.0, 0.0, "thread count changed the report".into());
    }
    // A representative numeric criterion must also replay bit-identically.
    let c2a = format!("{:?}", c02_symmetry());
    let c2b = format!("{:?}", c02_symmetry());
    if c2a != c2b {
        return (false, 1.0, 0.0, "criterion replay diverged".into());
    }
    // Expression round-trip stability doubles as a parser determinism check.
    let e = expr::parse("x^2*exp(-x)+abs(1-x)").unwrap();
    if expr::parse(&e.to_string()).unwrap() != e {
        return (false, 1.0, 0.0, "printer round-trip failed".into());
    }
    (true, 0.0, 0.0, "byte-identical across runs and thread counts".into())
}
