//! Exponential integrals.
//!
//! Real `Ei(x)` (principal value for `x > 0`, `-E₁(-x)` for `x < 0`) and a
//! scaled complex `E₁` used by the truncated-Lorentzian kernel.
//!
//! Regimes for the real function:
//!
//! * `-1 ≤ x ≤ 40`: power series `γ + ln|x| + Σ xⁿ/(n·n!)`. For `x > 0` every
//!   term is positive so the sum is stable far beyond the usual switchover.
//! * `x < -1`: continued fraction for `E₁(-x)` (modified Lentz).
//! * `x > 40`: asymptotic series `eˣ/x · Σ k!/xᵏ`, truncated at its smallest
//!   term (below 1e-16 relative at the seam).

use num_complex::Complex64;

use crate::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const SERIES_NEG_LIMIT: f64 = -1.0;
const SERIES_POS_LIMIT: f64 = 40.0;

/// Exponential integral `Ei(x)`.
///
/// Fails with [`Error::Domain`] at the logarithmic singularity `x = 0` and
/// for non-finite input.
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(if x < SERIES_NEG_LIMIT {
        -x.exp() * e1_continued_fraction(-x)
    } else if x <= SERIES_POS_LIMIT {
        ei_series(x)
    } else {
        x.exp() * ei_asymptotic_scaled(x)
    })
}

/// `e^{-x}·Ei(x)`, finite for every nonzero `x`.
///
/// This is the combination that appears in the Ohmic self-energy; computing
/// it directly avoids overflow of `Ei` and underflow of `e^{-x}` at large `|x|`.
pub fn scaled_ei(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(if x < SERIES_NEG_LIMIT {
        -e1_continued_fraction(-x)
    } else if x <= SERIES_POS_LIMIT {
        (-x).exp() * ei_series(x)
    } else {
        ei_asymptotic_scaled(x)
    })
}

fn check_arg(x: f64) -> Result<()> {
    if x == 0.0 {
        return Err(Error::domain("Ei(x) is singular at x = 0"));
    }
    if !x.is_finite() {
        return Err(Error::domain(format!("Ei(x) needs a finite argument, got {x}")));
    }
    Ok(())
}

fn ei_series(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 1..500 {
        let nf = n as f64;
        term *= x / nf;
        let contrib = term / nf;
        sum += contrib;
        if contrib.abs() < EPS * sum.abs() {
            break;
        }
    }
    EULER_GAMMA + x.abs().ln() + sum
}

/// `e^{y}·E₁(y)` for `y > 1`.
fn e1_continued_fraction(y: f64) -> f64 {
    let mut b = y + 1.0;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `e^{-x}·Ei(x)` for large positive `x`.
fn ei_asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let next = term * (k as f64) / x;
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < EPS * sum {
            break;
        }
    }
    sum / x
}

/// `e^{z}·E₁(z)` on the principal branch (cut along the negative real axis).
///
/// Series for small `|z|` and near the negative real axis, where the series
/// loses little to cancellation; continued fraction elsewhere.
pub fn scaled_e1_complex(z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain(format!("E1(z) undefined at z = {z}")));
    }
    if z.im == 0.0 && z.re < 0.0 {
        return Err(Error::domain("E1(z) evaluated on its branch cut"));
    }
    let r = z.norm();
    let near_negative_axis = z.re < 0.0 && r + z.re < 10.0 && r < 50.0;
    if r < 4.0 || near_negative_axis {
        Ok(z.exp() * e1_series_complex(z))
    } else {
        e1_continued_fraction_complex(z)
    }
}

fn e1_series_complex(z: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 1..1000 {
        let nf = n as f64;
        term *= -z / nf;
        let contrib = term / nf;
        sum += contrib;
        if contrib.norm() < EPS * sum.norm() {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

fn e1_continued_fraction_complex(z: Complex64) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let mut b = z + 1.0;
    let mut c = Complex64::new(1.0 / FPMIN, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 1..50_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = an * d + b;
        if d.norm() < FPMIN {
            d = Complex64::new(FPMIN, 0.0);
        }
        c = b + an / c;
        if c.norm() < FPMIN {
            c = Complex64::new(FPMIN, 0.0);
        }
        d = one / d;
        let del = c * d;
        h *= del;
        if (del - one).norm() < EPS {
            return Ok(h);
        }
    }
    Err(Error::numerical(format!("E1 continued fraction did not converge at z = {z}")))
}
