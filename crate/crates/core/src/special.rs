//! Log-space combinatorial helpers shared by the closed-form evaluators.

use statrs::function::{factorial, gamma};

/// `ln(n!)`; exact table lookup below 171, Lanczos above.
#[inline]
pub fn ln_factorial(n: u64) -> f64 {
    factorial::ln_factorial(n)
}

/// `ln C(n, k)` for `k <= n`.
#[inline]
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// `exp(log_factor) * linear`, returning exactly zero when `linear` is zero
/// so that zero-probability entries never turn into NaN through `-inf + ...`.
#[inline]
pub(crate) fn assemble(log_factor: f64, linear: f64) -> f64 {
    if linear == 0.0 {
        0.0
    } else {
        log_factor.exp() * linear
    }
}
