//! The perturbation series with a bounded potential: constant potentials
//! tilt the kernel by e^{ct} exactly, and the certified truncation bound
//! controls the dropped tail order by order.
//!
//!     cargo run --release --example duhamel_potential

use std::sync::Arc;

use degenkernel::duhamel::{self, DuhamelTable, PotentialKernel};
use degenkernel::model_kernel::{self, KernelPoint, ModelIndex};
use degenkernel::specfun::EvalTolerance;

fn main() {
    let tol = EvalTolerance::default();
    let c = 0.5;
    let pk = PotentialKernel::new(
        ModelIndex::new(0.0).unwrap(),
        Arc::new(move |_| c),
        c,
        6,
    );
    let (z, w, t) = (1.3, 0.8, 1.0);
    let table = DuhamelTable::build(&pk, w, t).unwrap();
    let q = model_kernel::q_sigma(0.0, KernelPoint { z, w, t }, &tol).unwrap();
    let exact = (c * t).exp() * q;

    println!("constant potential c = {c}: q^V should equal e^(ct) q exactly");
    println!("{:>6} {:>18} {:>14} {:>14}", "order", "partial sum", "true tail", "bound");
    for k in 0..=6u32 {
        let partial = table.partial_sum(k, z, t).unwrap();
        let tail = (exact - partial).abs() / q;
        let bound = duhamel::truncation_tail(t, c, k);
        println!("{k:>6} {partial:>18.12e} {tail:>14.3e} {bound:>14.3e}");
    }
    let qv = table.qv(z, t).unwrap();
    println!(
        "\nfull series {:.12e} vs e^(ct) q = {:.12e} (relative gap {:.2e})",
        qv,
        exact,
        (qv - exact).abs() / exact
    );

    // A varying potential: the uniform ratio bound |q^V/q - 1| <= e^(t‖V‖)-1.
    let pk = PotentialKernel::new(
        ModelIndex::new(-0.5).unwrap(),
        Arc::new(|z: f64| 0.4 * (-z).exp()),
        0.4,
        4,
    );
    let table = DuhamelTable::build(&pk, 1.0, 1.0).unwrap();
    println!("\nvarying potential V(z) = 0.4 e^(-z):");
    for z in [0.2, 1.0, 3.0] {
        for t in [0.25, 1.0] {
            let ratio = (table.qv(z, t).unwrap() / table.iterate(0, z, t).unwrap() - 1.0).abs();
            let bound = (t * pk.v_sup).exp() - 1.0;
            println!("  |q^V/q - 1| at (z={z}, t={t}): {ratio:.4e} <= {bound:.4e}");
        }
    }
}
