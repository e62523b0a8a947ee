mod cli;
mod kernels;
mod operators;
mod solver;
mod stability;

pub use cli::cli_determinism;
pub use kernels::{gronwall_dominance, resolvent_agreement};
pub use operators::{kernel_annihilation, power_rule, special_functions, wright_moments};
pub use solver::{contraction, linear_benchmark};
pub use stability::stability;

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

/// Largest |x|; any non-finite entry makes the result infinite.
pub fn max_abs<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().fold(0.0, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}
