//! Property tests for the structural invariants: gamma recurrence,
//! regularized-gamma range and monotonicity, kernel symmetry and positivity,
//! expression printer round-trips.

use proptest::prelude::*;

use degenkernel::expr;
use degenkernel::model_kernel::{self, KernelPoint};
use degenkernel::specfun::{self, EvalTolerance};

fn tol() -> EvalTolerance {
    EvalTolerance::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gamma_functional_equation(alpha in -2.95f64..2.95) {
        // Stay away from the poles of either side.
        let near_pole = |a: f64| a < 0.6 && (a - a.round()).abs() < 0.05;
        prop_assume!(!near_pole(alpha) && !near_pole(alpha + 1.0));
        let lhs = specfun::gamma(alpha + 1.0).unwrap();
        let rhs = alpha * specfun::gamma(alpha).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn regularized_gamma_in_unit_interval_and_monotone(
        s in 0.05f64..3.0,
        x in 0.0f64..50.0,
        dx in 0.01f64..5.0,
    ) {
        let p1 = specfun::reg_lower_gamma(s, x, &tol()).unwrap();
        let p2 = specfun::reg_lower_gamma(s, x + dx, &tol()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-14).contains(&p1));
        prop_assert!(p2 >= p1 - 1e-13);
    }

    #[test]
    fn kernel_weighted_symmetry(
        nu in -2.5f64..0.95,
        z in 1e-3f64..8.0,
        w in 1e-3f64..8.0,
        t in 0.05f64..3.0,
    ) {
        let lhs = w.powf(1.0 - nu)
            * model_kernel::q_sigma(nu, KernelPoint { z, w, t }, &tol()).unwrap();
        let rhs = z.powf(1.0 - nu)
            * model_kernel::q_sigma(nu, KernelPoint { z: w, w: z, t }, &tol()).unwrap();
        let scale = lhs.abs().max(rhs.abs());
        prop_assume!(scale > 1e-280);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn kernel_positive_and_bounded(
        nu in -2.5f64..0.95,
        z in 1e-3f64..6.0,
        w in 1e-3f64..6.0,
        t in 0.05f64..3.0,
    ) {
        let q = model_kernel::q_sigma(nu, KernelPoint { z, w, t }, &tol()).unwrap();
        prop_assert!(q >= 0.0);
        let bound = model_kernel::q_upper_bound(nu, KernelPoint { z, w, t }).unwrap();
        prop_assert!(q <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn printer_round_trip_on_generated_sources(
        a in 0.01f64..100.0,
        b in 0.01f64..10.0,
        pick in 0usize..6,
    ) {
        let src = match pick {
            0 => format!("{a:?}*x^{b:?}"),
            1 => format!("exp(-{a:?}*x)+{b:?}"),
            2 => format!("x/({a:?}+x)-sqrt({b:?}*x)"),
            3 => format!("-x^{b:?}*log({a:?}+x)"),
            4 => format!("abs(x-{a:?})^{b:?}"),
            _ => format!("sin({a:?}*x)*cos(x)/{b:?}"),
        };
        let ast = expr::parse(&src).unwrap();
        let printed = ast.to_string();
        let reparsed = expr::parse(&printed).unwrap();
        prop_assert_eq!(ast, reparsed);
    }
}
