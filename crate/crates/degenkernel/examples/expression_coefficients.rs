//! The coefficient expression language: parsing, evaluation, numeric
//! differentiation, and the structured errors for bad input.
//!
//!     cargo run --release --example expression_coefficients

use degenkernel::expr;

fn main() {
    let e = expr::parse("x^2*exp(-x)+abs(1-x)").unwrap();
    println!("parsed:   {e}");
    for x in [0.5, 1.0, 2.0] {
        println!("  value at {x}: {:.12}", e.eval(x).unwrap());
    }
    let h = expr::Expr::default_diff_step(1.0);
    println!("  derivative at 1 (central, h = {h:e}): {:.10}", e.diff_num(1.0, h).unwrap());

    // Syntax errors carry the byte offset and the acceptable next tokens.
    match expr::parse("x + * 2") {
        Err(err) => println!("\nsyntax error: {err}"),
        Ok(_) => unreachable!(),
    }

    // Domain failures name the offending node instead of propagating NaN.
    let log_expr = expr::parse("log(x-2)").unwrap();
    match log_expr.eval(1.0) {
        Err(err) => println!("domain error: {err}"),
        Ok(_) => unreachable!(),
    }

    // The canonical printer round-trips through the parser.
    let round = expr::parse(&e.to_string()).unwrap();
    assert_eq!(round, e);
    println!("\nprinter round-trip: `{e}` reparses identically");
}
