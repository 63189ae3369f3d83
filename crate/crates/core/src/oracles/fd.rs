//! Central finite differences.

use crate::error::{Error, Result};

/// Central-difference first (`order = 1`) or second (`order = 2`) derivative.
pub fn finite_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64, order: u8) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("step must be positive, got {h}")));
    }
    match order {
        1 => Ok((f(x + h) - f(x - h)) / (2.0 * h)),
        2 => Ok((f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)),
        _ => Err(Error::Invalid(format!("unsupported derivative order {order}"))),
    }
}
