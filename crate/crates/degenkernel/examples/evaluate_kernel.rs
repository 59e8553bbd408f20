//! Build the fundamental solution for user-supplied coefficients and
//! evaluate it at a few points, with its error controls.
//!
//!     cargo run --release --example evaluate_kernel

use degenkernel::expr;
use degenkernel::general_kernel::GeneralKernel;
use degenkernel::transform::{Coefficients, TransformBundle};

fn main() {
    // a(x) = x, b(x) = 1/2: the linear-diffusion example whose absorbed
    // kernel is y^{-1/2}(πt)^{-1/2} e^{-(x+y)/t} sinh(2√(xy)/t).
    let a = expr::parse("x").expect("valid expression");
    let b = expr::parse("0.5").expect("valid expression");
    let coeffs = Coefficients::from_exprs(&a, &b);

    let bundle = TransformBundle::build(coeffs).expect("admissible coefficients");
    println!("drift index nu = {:.12}", bundle.nu().get());
    println!("sup |V|        = {:.3e}", bundle.v_sup());

    let kernel = GeneralKernel::new(bundle, 0);
    for (x, y, t) in [(1.0, 1.0, 1.0), (0.4, 1.3, 0.5), (2.0, 0.7, 2.0)] {
        let kv = kernel.p(x, y, t).expect("interior point");
        let closed = (std::f64::consts::PI * t).sqrt().recip() / y.sqrt()
            * (-(x + y) / t).exp()
            * (2.0 * (x * y).sqrt() / t).sinh();
        println!(
            "p({x}, {y}, {t}) = {:.15e}   (closed form {:.15e}, quad est {:.1e}, series tail {:.1e})",
            kv.value, closed, kv.quadrature_estimate, kv.truncation_bound
        );
    }

    // The survival probability u_f with f ≡ 1, shrinking toward the boundary.
    for x in [1.0, 0.5, 0.1, 0.02] {
        let u = kernel.u_f(|_| 1.0, x, 1.0).expect("quadrature converges");
        println!("survival from x = {x:<4}: {:.10}", u.value);
    }
}
