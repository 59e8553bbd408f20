//! Monte Carlo oracle: simulate the absorbed diffusion and compare survival
//! and the survivor density against the kernel.
//!
//!     cargo run --release --example simulate_absorbed_paths

use degenkernel::closed_forms;
use degenkernel::quad;
use degenkernel::sde::{self, SimConfig};
use degenkernel::transform::{Coefficients, TransformBundle};

fn main() {
    let alpha = 1.5;
    let bundle = TransformBundle::build(Coefficients::power(alpha)).unwrap();
    let cfg = SimConfig {
        dt: 5e-4,
        n_paths: 50_000,
        seed: 42,
        bridge_correction: true,
        bins: 30,
        ..Default::default()
    };
    let (x0, t) = (1.0, 0.5);
    let result = sde::simulate_general(&bundle, x0, t, &cfg).unwrap();

    let analytic = 1.0 - closed_forms::mass_loss(alpha, x0, t).unwrap();
    println!(
        "survival: simulated {:.5} ± {:.5}, analytic {:.5} ({:+.2} standard errors)",
        result.survival,
        result.survival_se,
        analytic,
        (result.survival - analytic) / result.survival_se
    );
    println!(
        "absorbed fraction {:.5}, {} hitting times sampled",
        result.absorbed_fraction(),
        result.hitting_times.len()
    );

    // Survivor histogram against the kernel mass per bin.
    println!("\n{:>10} {:>10} {:>10} {:>10} {:>8}", "bin_lo", "bin_hi", "observed", "kernel", "sigmas");
    let h = &result.histogram;
    for i in 0..h.masses.len() - 1 {
        let (lo, hi) = (h.edges[i], h.edges[i + 1]);
        if h.masses[i] == 0.0 && lo > 3.0 {
            continue;
        }
        let expected = quad::integrate(
            |y| closed_forms::p_alpha(alpha, x0, y, t).unwrap_or(0.0),
            lo,
            hi,
            1e-8,
            1e-12,
            400,
        )
        .map(|r| r.value)
        .unwrap_or(0.0);
        let se = (expected * (1.0 - expected) / result.n_paths as f64).sqrt().max(1e-12);
        println!(
            "{:>10.3} {:>10.3} {:>10.6} {:>10.6} {:>8.2}",
            lo,
            hi,
            h.masses[i],
            expected,
            (h.masses[i] - expected) / se
        );
    }
}
