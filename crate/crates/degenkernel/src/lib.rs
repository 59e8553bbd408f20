//! Fundamental solutions of one-dimensional degenerate diffusion equations
//! `∂t u = a(x) ∂²x u + b(x) ∂x u` on `(0, ∞)` with Dirichlet absorption at 0.
//!
//! The construction follows a model-kernel + transformation + perturbation-series
//! route: an explicit modified-Bessel kernel `q_ν` solves the model equation
//! `∂t v = z ∂²z v + ν ∂z v`; a change of variables built from the coefficients
//! maps the general problem onto the model one with an extra drift; a gauge
//! factor converts the drift into a bounded potential `V`; and a Duhamel series
//! with certified truncation bounds produces the kernel `q_ν^V`, from which the
//! fundamental solution `p(x, y, t)` is assembled.
//!
//! The crate ships, alongside the kernels themselves:
//!
//! * closed-form reference kernels (heat, geometric, power family) used as
//!   golden cross-checks,
//! * Feller boundary classification of 0 from scale and speed measures,
//! * a Monte Carlo simulator of the absorbed diffusions acting as an
//!   independent statistical oracle,
//! * a tiny expression language so coefficients can be given as text,
//! * a self-verification suite (`selftest`) running every built-in
//!   consistency check at pinned tolerances.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end. The `degenkernel` binary exposes the same
//! functionality as subcommands (`eval`, `table`, `classify`, `simulate`,
//! `massloss`, `selftest`).

pub mod boundary;
pub mod cli;
pub mod closed_forms;
pub mod duhamel;
pub mod expr;
pub mod general_kernel;
pub mod model_kernel;
pub mod quad;
pub mod sde;
pub mod selftest;
pub mod specfun;
pub mod transform;

pub use duhamel::{DuhamelTable, KernelValue, PotentialKernel};
pub use general_kernel::GeneralKernel;
pub use model_kernel::{KernelPoint, ModelIndex};
pub use sde::{SimConfig, SimResult};
pub use specfun::EvalTolerance;
pub use transform::{Coefficients, TransformBundle};
