//! Cross-check the assembled pipeline against every family with a printed
//! closed form: the heat kernel, the linear-diffusion kernel, and the
//! power-family kernels.
//!
//!     cargo run --release --example closed_form_families

use std::sync::Arc;

use degenkernel::closed_forms::{self, ReferenceKernel};
use degenkernel::general_kernel::GeneralKernel;
use degenkernel::transform::{Coefficients, TransformBundle};

fn worst_over_grid(gk: &GeneralKernel, closed: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let pts = [0.05, 0.2, 0.8, 2.0, 5.0];
    let ts = [0.05, 0.4, 2.0];
    let mut worst = 0.0f64;
    for &x in &pts {
        for &y in &pts {
            for &t in &ts {
                let got = gk.p(x, y, t).expect("interior").value;
                let want = closed(x, y, t);
                worst = worst.max((got - want).abs() / want.abs().max(1e-280));
            }
        }
    }
    worst
}

fn main() {
    // Heat equation through the numeric transform path.
    let heat = GeneralKernel::new(
        TransformBundle::build(Coefficients::from_callables(
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Some(Arc::new(|_| 0.0)),
            Some(Arc::new(|_| 0.0)),
        ))
        .unwrap(),
        0,
    );
    let worst = worst_over_grid(&heat, |x, y, t| {
        closed_forms::reference_kernel(ReferenceKernel::HeatDirichlet, x, y, t).unwrap()
    });
    println!("heat kernel          worst relative deviation {worst:.3e}");

    // Linear diffusion with constant drift 1/2.
    let ex4 = GeneralKernel::new(
        TransformBundle::build(Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|_| 0.5),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|_| 0.0)),
        ))
        .unwrap(),
        0,
    );
    let worst = worst_over_grid(&ex4, |x, y, t| {
        closed_forms::reference_kernel(ReferenceKernel::Example4Dirichlet, x, y, t).unwrap()
    });
    println!("linear + 1/2 drift   worst relative deviation {worst:.3e}");

    // Power family via the exact preset transform.
    for alpha in [0.5, 1.0, 1.5] {
        let gk =
            GeneralKernel::new(TransformBundle::build(Coefficients::power(alpha)).unwrap(), 0);
        let worst =
            worst_over_grid(&gk, |x, y, t| closed_forms::p_alpha(alpha, x, y, t).unwrap());
        println!("power alpha = {alpha:<4} worst relative deviation {worst:.3e}");
    }
}
