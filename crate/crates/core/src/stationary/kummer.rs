//! Kummer's confluent hypergeometric function M(a, b, z) = 1F1(a; b; z),
//! by its power series (Abramowitz & Stegun 13.1.2):
//!
//! ```text
//! M(a, b, z) = sum_n (a)_n z^n / ((b)_n n!)
//! ```
//!
//! For z < 0 the direct series alternates and cancels catastrophically, so
//! the Kummer transformation M(a, b, z) = e^z M(b - a, b, -z)
//! (A&S 13.1.27) is applied whenever it yields a positive-term series.

use crate::error::{Error, Result};

const MAX_TERMS: usize = 10_000;
const REL_TOL: f64 = 1e-16;

/// M(a, b, z) for `a > 0`, `b > 0`.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 || a.is_nan() || b.is_nan() {
        return Err(Error::Domain(format!(
            "kummer_m requires a > 0 and b > 0, got a = {a}, b = {b}"
        )));
    }
    if z < 0.0 && b - a > 0.0 {
        return Ok(z.exp() * series(b - a, b, -z)?);
    }
    series(a, b, z)
}

fn series(a: f64, b: f64, z: f64) -> Result<f64> {
    let mut sum = 1.0f64;
    let mut term = 1.0f64;
    if z == 0.0 {
        return Ok(sum);
    }
    for n in 0..MAX_TERMS {
        let n = n as f64;
        term *= (a + n) / (b + n) * z / (n + 1.0);
        sum += term;
        if term.abs() <= REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence {
        max_terms: MAX_TERMS,
    })
}
