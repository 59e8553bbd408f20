//! Verify the explicit near-boundary derivative bounds for the drifted
//! power family a = x, b = x² e^{-x}: the series-kernel bound
//! |∂_z^k q^V| ≤ ((1+kt)^k/t^k) e^{3^k C_k^V t} S_k and the assembled-kernel
//! bound with its Bell/Touchard constants.
//!
//!     cargo run --release --example derivative_bounds

use std::sync::Arc;

use degenkernel::duhamel::{self, PotentialKernel};
use degenkernel::general_kernel::GeneralKernel;
use degenkernel::model_kernel::KernelPoint;
use degenkernel::transform::{Coefficients, TransformBundle};

fn main() {
    let coeffs = Coefficients::power_drift(
        1.0,
        2.0,
        Arc::new(|x: f64| (-x).exp()),
        Arc::new(|x: f64| -(-x).exp()),
    );
    let bundle = TransformBundle::build(coeffs).unwrap();
    println!("nu = {}, sup|V| = {:.4}", bundle.nu().get(), bundle.v_sup());
    let gk = GeneralKernel::new(bundle, 4);

    // Series-kernel bound on the near-boundary grid.
    let pk: &PotentialKernel = gk.potential();
    println!("\nseries kernel, t = 0.5:");
    for k in 0..=1u32 {
        for (z, w) in [(0.1, 0.1), (0.3, 0.5), (0.5, 0.2)] {
            let check =
                duhamel::check_derivative_bound(pk, k, KernelPoint { z, w, t: 0.5 }).unwrap();
            println!(
                "  k={k} (z={z}, w={w}): |d^k q^V| = {:.4e} <= {:.4e}  [{}]",
                check.lhs,
                check.rhs,
                if check.pass { "ok" } else { "VIOLATED" }
            );
        }
    }

    // Assembled kernel over (0, 0.5)².
    println!("\nassembled kernel, grid (0, 0.5)^2, t = 0.5:");
    for k in 0..=1u32 {
        let report = gk.p_derivative_bound_check(k, 0.5, 0.5).unwrap();
        println!(
            "  k={k}: {} (smallest margin {:.4e} at x={:.2}, y={:.2}; constants C^theta={:.3}, C^phi={:.3}, C^V={:.3})",
            if report.pass { "bound holds" } else { "bound VIOLATED" },
            report.worst_margin,
            report.worst_x,
            report.worst_y,
            report.c_theta,
            report.c_phi,
            report.c_k_v,
        );
    }
}
