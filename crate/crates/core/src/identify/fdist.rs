//! CDF and upper tail of the F distribution.

use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};

fn check(x: f64, d1: f64, d2: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(x));
    }
    if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
        return Err(Error::Config(format!(
            "F degrees of freedom must be positive, got ({d1}, {d2})"
        )));
    }
    Ok(())
}

fn beta_reg(a: f64, b: f64, z: f64) -> f64 {
    checked_beta_reg(a, b, z.clamp(0.0, 1.0)).expect("arguments validated")
}

/// `P(F <= x)` for `F ~ F(d1, d2)`, i.e. `I_{d1 x / (d1 x + d2)}(d1/2, d2/2)`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check(x, d1, d2)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let scaled = d1 * x;
    // Evaluate on whichever side keeps the argument away from 1.
    let z = scaled / (scaled + d2);
    if z <= a / (a + b) {
        Ok(beta_reg(a, b, z))
    } else {
        Ok(1.0 - beta_reg(b, a, d2 / (scaled + d2)))
    }
}

/// `P(F > x)`, computed directly so small tail probabilities keep their
/// relative precision.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check(x, d1, d2)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let scaled = d1 * x;
    let tail = d2 / (scaled + d2);
    if tail <= b / (a + b) {
        Ok(beta_reg(b, a, tail))
    } else {
        Ok(1.0 - beta_reg(a, b, scaled / (scaled + d2)))
    }
}
