//! Feller classification of the boundary 0 across the power family
//! a = x^α: regular for α < 1, exit for 1 ≤ α < 2, natural at α = 2,
//! with an entrance example from a drift that pushes inward.
//!
//!     cargo run --release --example classify_boundary

use std::sync::Arc;

use degenkernel::boundary;
use degenkernel::transform::Coefficients;

fn main() {
    println!("{:<10} {:>10} {:>10} {:>10} {:>10}  verdict", "alpha", "S0", "M0", "Sigma", "N");
    for i in 0..=8 {
        let alpha = 0.25 * i as f64;
        let report = boundary::classify(&Coefficients::power(alpha), 1.0);
        let show = |v: &boundary::LimitValue| match v {
            boundary::LimitValue::Finite { value } => format!("{value:.4}"),
            boundary::LimitValue::Infinite { .. } => "inf".into(),
            boundary::LimitValue::Indeterminate { .. } => "?".into(),
        };
        println!(
            "{:<10} {:>10} {:>10} {:>10} {:>10}  {}",
            alpha,
            show(&report.s0),
            show(&report.m0),
            show(&report.sigma),
            show(&report.n),
            report.boundary_type
        );
    }

    // a = x with unit inward drift: an entrance boundary, flagged as outside
    // the kernel construction's scope.
    let entrance = boundary::classify(
        &Coefficients::from_callables(
            Arc::new(|x: f64| x),
            Arc::new(|_| 1.0),
            Some(Arc::new(|_| 1.0)),
            Some(Arc::new(|_| 0.0)),
        ),
        1.0,
    );
    println!("\na = x, b = 1: {} ({})", entrance.boundary_type, entrance.note.unwrap_or_default());
}
