//! The extremal t dependence function, its induced CDF, and extremal
//! coefficients.
//!
//! For a tail index alpha and correlation matrix S*, the dependence
//! function at z > 0 is a sum over coordinates j of z_j^-1 times a
//! (d-1)-dimensional Student t CDF with alpha + 1 degrees of freedom,
//! evaluated at the rescaled point (z_-j / z_j)^(1/alpha) with location
//! S*_{-j,j} and dispersion (alpha+1)^-1 (S*_{-j,-j} - S*_{-j,j} S*_{j,-j}).
//! The location is subtracted and the dispersion handed to the CDF engine,
//! which standardizes to correlation scale internally.

mod mvt;

pub use mvt::{mvt_cdf, MvtCdfResult, QmcSettings};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{validate_correlation_matrix, TailIndex};
use crate::numerics::student_t_cdf;

/// Value of the dependence (exponent) function, possibly infinite, with a
/// propagated QMC error bound.
#[derive(Debug, Clone, Copy)]
pub struct ExponentValue {
    pub value: f64,
    pub error_estimate: f64,
    /// Total QMC integrand evaluations across all coordinate terms.
    pub points_used: usize,
}

/// A probability with a first-order propagated error bound.
#[derive(Debug, Clone, Copy)]
pub struct CdfEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub points_used: usize,
}

/// Dependence function M(z) of the extremal t law with tail index `alpha`
/// and correlation matrix `sigma_star`.
///
/// Requires z >= 0 componentwise and z not identically zero; any single
/// zero coordinate yields +infinity (the conventional value of the exponent
/// measure on that boundary), not an error.
pub fn exponent_function(
    z: &[f64],
    alpha: TailIndex,
    sigma_star: &DMatrix<f64>,
    settings: &QmcSettings,
) -> Result<ExponentValue> {
    let d = z.len();
    if d == 0 {
        return Err(Error::Domain("exponent_function needs at least one coordinate".into()));
    }
    if sigma_star.nrows() != d || sigma_star.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "sigma_star is {}x{}, expected {d}x{d}",
            sigma_star.nrows(),
            sigma_star.ncols()
        )));
    }
    for (j, &v) in z.iter().enumerate() {
        if v.is_nan() || v < 0.0 {
            return Err(Error::Domain(format!(
                "exponent_function requires z >= 0 componentwise, got z[{j}] = {v}"
            )));
        }
    }
    if z.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain(
            "exponent_function requires a non-zero z vector".into(),
        ));
    }
    if z.contains(&0.0) {
        return Ok(ExponentValue {
            value: f64::INFINITY,
            error_estimate: 0.0,
            points_used: 0,
        });
    }
    if d == 1 {
        return Ok(ExponentValue {
            value: 1.0 / z[0],
            error_estimate: 0.0,
            points_used: 0,
        });
    }
    validate_correlation_matrix(sigma_star)?;

    let nu = alpha.value();
    let df = nu + 1.0;
    let mut total = 0.0;
    let mut error = 0.0;
    let mut points_used = 0usize;
    let mut point = vec![0.0; d - 1];
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
        for (row, &i) in others.iter().enumerate() {
            let rel = (z[i] / z[j]).powf(1.0 / nu);
            point[row] = rel - sigma_star[(i, j)];
        }
        let mut dispersion = DMatrix::<f64>::zeros(d - 1, d - 1);
        for (r, &i1) in others.iter().enumerate() {
            for (c, &i2) in others.iter().enumerate() {
                dispersion[(r, c)] =
                    (sigma_star[(i1, i2)] - sigma_star[(i1, j)] * sigma_star[(i2, j)]) / df;
            }
        }
        let cdf = mvt_cdf(&point, df, &dispersion, settings)?;
        total += cdf.value / z[j];
        error += cdf.error_estimate / z[j];
        points_used += cdf.points_used;
    }
    // Project onto the elementary exponent-function envelope; QMC noise must
    // not push the value outside what any exponent measure allows.
    let lower = z.iter().fold(0.0f64, |m, &v| m.max(1.0 / v));
    let upper = z.iter().map(|&v| 1.0 / v).sum::<f64>();
    Ok(ExponentValue {
        value: total.clamp(lower, upper),
        error_estimate: error,
        points_used,
    })
}

/// Closed-form bivariate extremal coefficient
/// 2 T_{alpha+1}( sqrt((alpha+1)(1-rho)/(1+rho)) ); no QMC involved.
pub fn bivariate_extremal_coefficient(alpha: TailIndex, rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!(
            "bivariate extremal coefficient requires |rho| < 1, got {rho}"
        )));
    }
    let a = alpha.value();
    let arg = ((a + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
    Ok(2.0 * student_t_cdf(arg, a + 1.0)?)
}

/// CDF P(Z <= z) of the extremal t law with alpha-Frechet margins:
/// exp(-M(z^alpha)), with the error propagated to first order.
pub fn extremal_t_cdf(
    z: &[f64],
    alpha: TailIndex,
    sigma_star: &DMatrix<f64>,
    settings: &QmcSettings,
) -> Result<CdfEstimate> {
    for (j, &v) in z.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "extremal_t_cdf requires z > 0 componentwise, got z[{j}] = {v}"
            )));
        }
    }
    let a = alpha.value();
    let powered: Vec<f64> = z.iter().map(|&v| v.powf(a)).collect();
    let exponent = exponent_function(&powered, alpha, sigma_star, settings)?;
    let value = (-exponent.value).exp();
    Ok(CdfEstimate {
        value,
        error_estimate: exponent.error_estimate * value,
        points_used: exponent.points_used,
    })
}

/// Extremal coefficient M(1, ..., 1) in [1, d]: 1 is full dependence,
/// d is independence.
pub fn extremal_coefficient(
    alpha: TailIndex,
    sigma_star: &DMatrix<f64>,
    settings: &QmcSettings,
) -> Result<ExponentValue> {
    let ones = vec![1.0; sigma_star.nrows()];
    exponent_function(&ones, alpha, sigma_star, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tail(a: f64) -> TailIndex {
        TailIndex::new(a).unwrap()
    }

    fn eye(d: usize) -> DMatrix<f64> {
        DMatrix::identity(d, d)
    }

    fn corr2(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    const SQRT2_HALF_PLUS_ONE: f64 = 1.7071067811865475;

    #[test]
    fn univariate_exponent_is_reciprocal() {
        for &a in &[0.3, 1.0, 7.0] {
            for &z in &[0.25, 1.0, 8.0] {
                let m = exponent_function(&[z], tail(a), &eye(1), &QmcSettings::default()).unwrap();
                assert_abs_diff_eq!(m.value, 1.0 / z, epsilon = 1e-15);
                assert_eq!(m.error_estimate, 0.0);
            }
        }
    }

    #[test]
    fn zero_coordinate_gives_infinity_not_error() {
        let m = exponent_function(&[1.0, 0.0], tail(1.0), &eye(2), &QmcSettings::default()).unwrap();
        assert_eq!(m.value, f64::INFINITY);
        assert_eq!(m.error_estimate, 0.0);
    }

    #[test]
    fn invalid_z_rejected() {
        let q = QmcSettings::default();
        assert!(exponent_function(&[-1.0, 1.0], tail(1.0), &eye(2), &q).is_err());
        assert!(exponent_function(&[0.0, 0.0], tail(1.0), &eye(2), &q).is_err());
        assert!(exponent_function(&[], tail(1.0), &eye(0), &q).is_err());
        assert!(extremal_t_cdf(&[0.0, 1.0], tail(1.0), &eye(2), &q).is_err());
    }

    #[test]
    fn schlather_independent_pair_value() {
        // alpha = 1, rho = 0: the bivariate coefficient is 1 + sqrt(2)/2.
        let closed = bivariate_extremal_coefficient(tail(1.0), 0.0).unwrap();
        assert_abs_diff_eq!(closed, SQRT2_HALF_PLUS_ONE, epsilon = 1e-13);
        let general =
            exponent_function(&[1.0, 1.0], tail(1.0), &corr2(0.0), &QmcSettings::default())
                .unwrap();
        // d = 2 reduces to the exact univariate t route inside the engine.
        assert_abs_diff_eq!(general.value, SQRT2_HALF_PLUS_ONE, epsilon = 1e-12);
        assert_eq!(general.error_estimate, 0.0);
    }

    // mpmath references for the closed bivariate coefficient.
    const CLOSED_REFS: [(f64, f64, f64); 6] = [
        (1.0, 0.0, 1.707106781186547524401),
        (0.01, 0.0, 1.502903853443149935414),
        (100.0, 0.0, 1.999999999999999930324),
        (2.0, 0.5, 1.608997781044229358089),
        (0.5, -0.5, 1.791247378183601917604),
        (5.0, 0.9, 1.405496952294727446187),
    ];

    #[test]
    fn closed_bivariate_coefficient_reference_grid() {
        for (a, rho, want) in CLOSED_REFS {
            let got = bivariate_extremal_coefficient(tail(a), rho).unwrap();
            assert!(
                (got - want).abs() < 1e-12,
                "theta({a}, {rho}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn closed_bivariate_coefficient_limits() {
        // rho -> 1: full dependence, coefficient 1 = 2 T(0).
        let near_one = bivariate_extremal_coefficient(tail(2.0), 1.0 - 1e-12).unwrap();
        assert!((near_one - 1.0).abs() < 1e-5, "got {near_one}");
        assert!(bivariate_extremal_coefficient(tail(2.0), 1.0).is_err());
        assert!(bivariate_extremal_coefficient(tail(2.0), -1.0).is_err());
        // alpha -> infinity at rho = 0 approaches independence.
        assert!(bivariate_extremal_coefficient(tail(100.0), 0.0).unwrap() >= 1.99);
    }

    #[test]
    fn exponent_agrees_with_closed_form_on_a_grid() {
        // includes the nu -> 0 limit: theta(0.01, 0) is within 0.01 of 1.5
        let q = QmcSettings::default();
        for &a in &[0.01, 0.5, 1.0, 2.0, 5.0] {
            for &rho in &[-0.5, 0.0, 0.5, 0.9] {
                let closed = bivariate_extremal_coefficient(tail(a), rho).unwrap();
                let m = exponent_function(&[1.0, 1.0], tail(a), &corr2(rho), &q).unwrap();
                assert!(
                    (m.value - closed).abs() <= m.error_estimate + 1e-10,
                    "alpha={a}, rho={rho}: {} vs {closed}",
                    m.value
                );
            }
        }
    }

    #[test]
    fn extremal_t_cdf_known_value_and_monotonicity() {
        let q = QmcSettings::default();
        let c = extremal_t_cdf(&[1.0, 1.0], tail(1.0), &corr2(0.0), &q).unwrap();
        assert!((c.value - (-SQRT2_HALF_PLUS_ONE) .exp()).abs() < 1e-12);
        // d = 1: Phi_alpha(1) = exp(-1) for any alpha.
        for &a in &[0.5, 1.0, 4.0] {
            let c = extremal_t_cdf(&[1.0], tail(a), &eye(1), &q).unwrap();
            assert_abs_diff_eq!(c.value, (-1.0f64).exp(), epsilon = 1e-14);
        }
        // componentwise larger z gives larger probability
        let lo = extremal_t_cdf(&[0.8, 1.1], tail(2.0), &corr2(0.3), &q).unwrap();
        let hi = extremal_t_cdf(&[1.0, 1.4], tail(2.0), &corr2(0.3), &q).unwrap();
        assert!(hi.value > lo.value);
    }

    #[test]
    fn extremal_coefficient_near_full_dependence() {
        let q = QmcSettings::default();
        let theta = extremal_coefficient(tail(1.0), &corr2(0.9999), &q).unwrap();
        assert!(theta.value < 1.05, "theta = {}", theta.value);
        assert!(theta.value >= 1.0);
    }

    #[test]
    fn exponent_bounds_hold() {
        let q = QmcSettings::default();
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.6, 0.2, 0.6, 1.0, 0.4, 0.2, 0.4, 1.0],
        );
        for z in [[0.5, 1.0, 2.0], [1.0, 1.0, 1.0], [3.0, 0.2, 1.0]] {
            let m = exponent_function(&z, tail(1.5), &sigma, &q).unwrap();
            let lower = z.iter().fold(0.0f64, |acc, &v| acc.max(1.0 / v));
            let upper: f64 = z.iter().map(|&v| 1.0 / v).sum();
            assert!(m.value >= lower - 1e-12 && m.value <= upper + 1e-12);
        }
    }

    #[test]
    fn exponent_homogeneity_degree_minus_one() {
        let q = QmcSettings::default();
        let sigma = corr2(0.4);
        let base = exponent_function(&[0.7, 1.3], tail(2.0), &sigma, &q).unwrap();
        for &t in &[0.5, 2.0, 10.0] {
            let scaled =
                exponent_function(&[0.7 * t, 1.3 * t], tail(2.0), &sigma, &q).unwrap();
            let tol = base.error_estimate / t + scaled.error_estimate + 1e-10;
            assert!(
                (scaled.value - base.value / t).abs() <= tol,
                "t={t}: {} vs {}",
                scaled.value,
                base.value / t
            );
        }
    }

    #[test]
    fn exponent_permutation_equivariance() {
        let q = QmcSettings::default();
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, -0.2, 0.5, 1.0, 0.3, -0.2, 0.3, 1.0],
        );
        let z = [0.6, 1.0, 1.8];
        let m = exponent_function(&z, tail(1.0), &sigma, &q).unwrap();
        // permutation (2, 0, 1)
        let perm = [2usize, 0, 1];
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let mut sp = DMatrix::<f64>::zeros(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                sp[(r, c)] = sigma[(perm[r], perm[c])];
            }
        }
        let mp = exponent_function(&zp, tail(1.0), &sp, &q).unwrap();
        assert!(
            (m.value - mp.value).abs() <= m.error_estimate + mp.error_estimate + 1e-9,
            "{} vs {}",
            m.value,
            mp.value
        );
    }

    #[test]
    fn higher_dimension_consistent_with_margin_removal() {
        // Sending one coordinate to a huge value recovers the lower
        // dimensional evaluation.
        let q = QmcSettings::default();
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.0],
        );
        let m3 = exponent_function(&[1.0, 2.0, 1e6], tail(1.0), &sigma, &q).unwrap();
        let m2 = exponent_function(&[1.0, 2.0], tail(1.0), &corr2(0.5), &q).unwrap();
        assert!(
            (m3.value - m2.value).abs() <= 1e-4 + m3.error_estimate + m2.error_estimate,
            "{} vs {}",
            m3.value,
            m2.value
        );
    }
}
