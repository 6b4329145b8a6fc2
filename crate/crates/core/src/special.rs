//! Digamma and log-gamma for positive real arguments.
//!
//! Both use the usual scheme: shift the argument upward with the recurrence
//! until it clears [`SHIFT_CUTOFF`], then sum the asymptotic (Stirling) series.
//! Absolute accuracy is about 1e-14 for digamma on `[0.5, 1e6]`.

use crate::error::{Error, Result};

const SHIFT_CUTOFF: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

// B_{2k} / (2k) for k = 1..=7, used by the digamma series.
const PSI_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

// B_{2k} / (2k (2k-1)) for k = 1..=7, used by the Stirling series.
const STIRLING_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

fn check_positive(func: &'static str, z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(
            func,
            format!("argument must be positive and finite, got {z}"),
        ))
    }
}

/// `ψ(z) - ln z` for `z >= SHIFT_CUTOFF`, without forming either large term.
fn psi_minus_ln_asymptotic(z: f64) -> f64 {
    let r = 1.0 / (z * z);
    let mut poly = 0.0;
    for c in PSI_COEFFS.iter().rev() {
        poly = poly * r + c;
    }
    -0.5 / z - r * poly
}

/// The digamma function `ψ(z) = Γ'(z) / Γ(z)`.
pub fn digamma(z: f64) -> Result<f64> {
    check_positive("digamma", z)?;
    Ok(digamma_unchecked(z))
}

pub(crate) fn digamma_unchecked(z: f64) -> f64 {
    let mut z = z;
    let mut acc = 0.0;
    while z < SHIFT_CUTOFF {
        acc -= 1.0 / z;
        z += 1.0;
    }
    acc + z.ln() + psi_minus_ln_asymptotic(z)
}

/// `ψ(z) - ln z`, accurate for large `z` where the difference is tiny
/// compared to either term.
pub fn digamma_minus_ln(z: f64) -> Result<f64> {
    check_positive("digamma_minus_ln", z)?;
    Ok(digamma_minus_ln_unchecked(z))
}

pub(crate) fn digamma_minus_ln_unchecked(z: f64) -> f64 {
    if z >= SHIFT_CUTOFF {
        return psi_minus_ln_asymptotic(z);
    }
    let shifted = z + (SHIFT_CUTOFF - z).ceil();
    let mut acc = 0.0;
    let mut w = z;
    while w < shifted {
        acc -= 1.0 / w;
        w += 1.0;
    }
    acc + (shifted / z).ln() + psi_minus_ln_asymptotic(shifted)
}

/// Natural logarithm of the gamma function.
pub fn log_gamma(z: f64) -> Result<f64> {
    check_positive("log_gamma", z)?;
    Ok(log_gamma_unchecked(z))
}

pub(crate) fn log_gamma_unchecked(z: f64) -> f64 {
    let mut z = z;
    let mut product = 1.0;
    while z < SHIFT_CUTOFF {
        product *= z;
        z += 1.0;
    }
    let r = 1.0 / (z * z);
    let mut poly = 0.0;
    for c in STIRLING_COEFFS.iter().rev() {
        poly = poly * r + c;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + poly / z - product.ln()
}
