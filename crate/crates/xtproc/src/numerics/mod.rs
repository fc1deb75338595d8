//! Special functions, closed-form norming constants, and the dense
//! Cholesky primitive shared by the samplers and the dependence engine.
//!
//! All Gamma-ratio constants are evaluated in log space: the Student
//! norming scale overflows in direct form near 300 degrees of freedom.

mod linalg;
mod special;

pub use linalg::{cholesky_with_jitter, CholeskyFactor, JITTER_LADDER};
pub use special::{ln_gamma, normal_cdf, normal_quantile, regularized_incomplete_beta, student_t_cdf};

pub(crate) use special::{inv_reg_lower_gamma, ln_gamma_raw, normal_pdf};

use crate::error::{Error, Result};
use crate::model::TailIndex;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2: f64 = std::f64::consts::LN_2;

/// The alpha-th moment of the positive part of a standard normal variable,
/// E[(max(W, 0))^alpha] = pi^(-1/2) 2^((alpha-2)/2) Gamma((alpha+1)/2).
///
/// This is the normalizing spectral moment of the Gaussian-spectral
/// construction.
pub fn normal_positive_moment(alpha: TailIndex) -> f64 {
    let a = alpha.value();
    (-0.5 * LN_PI + 0.5 * (a - 2.0) * LN_2 + ln_gamma_raw(0.5 * (a + 1.0))).exp()
}

/// Log of the scale constant entering the Frechet norming sequence of a
/// unit-variance Student t variable with `nu` degrees of freedom.
pub fn ln_student_norming_scale(nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!(
            "norming scale requires nu > 0, got {nu}"
        )));
    }
    Ok(-ln_gamma_raw(0.5 * (nu + 1.0)) + (1.0 - 0.5 * nu) * nu.ln() + 0.5 * LN_PI
        + ln_gamma_raw(0.5 * nu))
}

/// Scale constant in natural units; underflows to zero for nu above
/// roughly 285, where only the log form remains meaningful.
pub fn student_norming_scale(nu: f64) -> Result<f64> {
    Ok(ln_student_norming_scale(nu)?.exp())
}

/// Frechet norming constant a_n = (n / c_nu)^(1/nu) for block size `n`
/// under the unit-variance (correlation scale) convention.
///
/// The Student t tail is P(T > x) ~ x^-nu / c_nu, so the upper quantile at
/// level 1/n sits at (n / c_nu)^(1/nu); dividing the scale constant the
/// other way leaves block maxima off the Frechet limit by the factor
/// c_nu^(2/nu), which the domain-of-attraction checks would flag
/// immediately (at nu = 1 the constant is the Cauchy quantile n/pi).
pub fn frechet_norming(n: u64, nu: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("block size n must be >= 1".into()));
    }
    let ln_c = ln_student_norming_scale(nu)?;
    Ok((((n as f64).ln() - ln_c) / nu).exp())
}
