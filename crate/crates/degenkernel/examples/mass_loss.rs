//! Mass absorbed at the boundary for a = x^α: exact incomplete-gamma value,
//! the large-degeneracy asymptotic expansion, and the approach of
//! -ln m / T to 1 as α ↗ 2.
//!
//!     cargo run --release --example mass_loss

use degenkernel::closed_forms;

fn main() {
    let (x, t) = (1.0, 1.0);
    println!("{:>6} {:>16} {:>16} {:>12}", "alpha", "mass loss", "asymptotic", "-ln m / T");
    for alpha in [0.5, 1.0, 1.5, 1.8, 1.9, 1.95, 1.99] {
        let exact = closed_forms::mass_loss(alpha, x, t).unwrap();
        let asym = closed_forms::mass_loss_asymptotic(alpha, x, t).unwrap();
        let c = 2.0 - alpha;
        let big_t = x.powf(c) / (c * c * t);
        let ratio = -closed_forms::mass_loss_log(alpha, x, t).unwrap() / big_t;
        println!("{alpha:>6} {exact:>16.6e} {asym:>16.6e} {ratio:>12.6}");
    }
    println!();
    println!("alpha = 1 recovers the exponential law: m = e^(-x/t)");
    for (x, t) in [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)] {
        let m = closed_forms::mass_loss(1.0, x, t).unwrap();
        println!("  m({x}, {t}) = {m:.12e}  vs  {:.12e}", (-x / t).exp());
    }
}
