//! Radial moment machinery behind the ellipsoidal density.
//!
//! Everything in this module reduces to the family of integrals
//!
//! ```text
//! J_q(alpha) = ∫_0^∞ t^q exp(-(t-1)^2 / (2 alpha^2)) dt
//! ```
//!
//! where `alpha` is the relative radial spread of the model (the
//! `noise_sigma` of a fitted ellipsoid). `J_{d-1}` normalizes the density in
//! dimension `d`, and ratios of `J` values give the second-moment inflation
//! of the sampled cloud ([`sigma_star_factor`]) and the variance of the
//! Mahalanobis radius ([`sigma_tilde_sq`]).
//!
//! The closed-form evaluation seeds
//!
//! ```text
//! J_0 = alpha sqrt(2 pi) (1 - Phi(-1/alpha))
//! J_1 = J_0 + alpha^2 exp(-1/(2 alpha^2))
//! ```
//!
//! and applies the recurrence `J_q = J_{q-1} + (q-1) alpha^2 J_{q-2}`, all
//! terms positive, so there is no cancellation. `Phi(-1/alpha)` is computed
//! directly as an `erfc` tail; for small `alpha` it underflows to 0 rather
//! than cancelling. An independent adaptive-quadrature evaluation
//! ([`j_moment_oracle`]) exists solely to cross-check the closed form.

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Spread above this is outside the regime the small-noise constants and
/// estimators were derived for; operations still run but flag it.
pub const SIGMA_VALIDITY_THRESHOLD: f64 = 0.1;

/// Spread at or above 1 makes the shell model meaningless (the "shell"
/// is wider than its radius); parameter construction refuses it.
pub const SIGMA_HARD_LIMIT: f64 = 1.0;

/// Flags a noise spread beyond [`SIGMA_VALIDITY_THRESHOLD`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaWarning {
    pub sigma: f64,
}

impl std::fmt::Display for SigmaWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "noise sigma = {} exceeds the validity threshold {}; results are \
             computed but the small-noise model assumptions are strained",
            self.sigma, SIGMA_VALIDITY_THRESHOLD
        )
    }
}

/// Validates a noise spread: rejects sigma outside (0, 1), warns above the
/// validity threshold.
pub(crate) fn check_sigma(sigma: f64) -> Result<Option<SigmaWarning>> {
    if !(sigma > 0.0 && sigma < SIGMA_HARD_LIMIT) || !sigma.is_finite() {
        return Err(Error::SigmaOutOfRange { sigma });
    }
    if sigma > SIGMA_VALIDITY_THRESHOLD {
        Ok(Some(SigmaWarning { sigma }))
    } else {
        Ok(None)
    }
}

/// Phi(-1/alpha) for the standard normal CDF, evaluated as an erfc tail.
fn phi_neg_recip(alpha: f64) -> f64 {
    0.5 * libm::erfc(1.0 / (alpha * std::f64::consts::SQRT_2))
}

// ── J table ─────────────────────────────────────────────────────────────────

/// Precomputed `J_0(alpha) .. J_qmax(alpha)`.
///
/// Values are strictly positive and strictly increasing in `q`: the
/// recurrence adds a positive term at every step.
#[derive(Debug, Clone)]
pub struct JTable {
    alpha: f64,
    values: Vec<f64>,
}

impl JTable {
    /// Builds the table up to `q_max` inclusive.
    pub fn new(alpha: f64, q_max: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain {
                what: "alpha",
                value: alpha,
            });
        }
        let j0 = alpha * SQRT_2PI * (1.0 - phi_neg_recip(alpha));
        let mut values = vec![j0];
        if q_max >= 1 {
            values.push(j0 + alpha * alpha * (-1.0 / (2.0 * alpha * alpha)).exp());
        }
        for q in 2..=q_max {
            let next = values[q - 1] + (q as f64 - 1.0) * alpha * alpha * values[q - 2];
            values.push(next);
        }
        Ok(JTable { alpha, values })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `J_q(alpha)`. Panics if `q` exceeds the table's `q_max`.
    pub fn value(&self, q: usize) -> f64 {
        self.values[q]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `J_q(alpha)` by closed-form seeds plus recurrence.
pub fn j_moment(q: usize, alpha: f64) -> Result<f64> {
    Ok(JTable::new(alpha, q)?.value(q))
}

/// `J_q(alpha)` by adaptive quadrature, independent of the closed form.
///
/// Valid for `q <= 12` and `alpha <= 1`. The integrand's peak sits at
/// `t* <= 1 + q alpha^2`, so the chosen upper limit
/// `1 + max(20 alpha, 10 q alpha)` leaves the peak at least ~10 spread
/// widths inside the interval and the truncated tail below 1e-80 of the
/// integral. Relative accuracy of the result is 1e-10 or better.
pub fn j_moment_oracle(q: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain {
            what: "oracle alpha (must be in (0, 1])",
            value: alpha,
        });
    }
    if q > 12 {
        return Err(Error::Domain {
            what: "oracle q (must be <= 12)",
            value: q as f64,
        });
    }
    let upper = 1.0 + (20.0 * alpha).max(10.0 * q as f64 * alpha);
    // Seed with segments no wider than the spread so the peak is never
    // missed by the initial pass.
    let initial = ((upper / alpha).ceil() as usize).clamp(16, 1024);
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 0.0,
        initial_segments: initial,
        max_segments: 8192,
    };
    let inv_two_a2 = 1.0 / (2.0 * alpha * alpha);
    let qf = q as i32;
    let quad = integrate(
        |t: f64| t.powi(qf) * (-(t - 1.0) * (t - 1.0) * inv_two_a2).exp(),
        0.0,
        upper,
        &opts,
    )?;
    Ok(quad.value)
}

// ── Normalization constants ─────────────────────────────────────────────────

/// Which form of the normalizing constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantMode {
    /// Gamma(d/2) / (2 pi^{d/2} det^{1/2} J_{d-1}(sigma)): exact at any
    /// spread.
    Exact,
    /// Small-spread closed forms (erfc tail and exponentially small terms
    /// dropped); accurate to O(e^{-1/(2 sigma^2)}) for sigma at or below the
    /// validity threshold.
    Approx,
}

/// A normalizing constant, with a warning when the spread is outside the
/// validity regime.
#[derive(Debug, Clone, Copy)]
pub struct NormConstant {
    pub value: f64,
    pub warning: Option<SigmaWarning>,
}

/// Normalizing constant `C_d` of the ellipsoidal density in dimension
/// `d ∈ {1, 2, 3}` with shape determinant `det_sigma` and spread `sigma`.
pub fn norm_constant(
    dim: usize,
    det_sigma: f64,
    sigma: f64,
    mode: ConstantMode,
) -> Result<NormConstant> {
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension { dim });
    }
    if !(det_sigma > 0.0) || !det_sigma.is_finite() {
        return Err(Error::Domain {
            what: "det_sigma",
            value: det_sigma,
        });
    }
    let warning = check_sigma(sigma)?;
    let root_det = det_sigma.sqrt();
    let value = match mode {
        ConstantMode::Exact => {
            let table = JTable::new(sigma, dim - 1)?;
            let j = table.value(dim - 1);
            match dim {
                1 => 1.0 / (2.0 * root_det * j),
                2 => 1.0 / (2.0 * std::f64::consts::PI * root_det * j),
                // Gamma(3/2)/(2 pi^{3/2}) = 1/(4 pi)
                3 => 1.0 / (4.0 * std::f64::consts::PI * root_det * j),
                _ => unreachable!(),
            }
        }
        ConstantMode::Approx => {
            let two_pi_32 = (2.0 * std::f64::consts::PI).powf(1.5);
            match dim {
                1 => 1.0 / (2.0 * sigma * SQRT_2PI * root_det),
                2 => 1.0 / (two_pi_32 * root_det * sigma),
                3 => 1.0 / (2.0 * two_pi_32 * root_det * sigma * (1.0 + sigma * sigma)),
                _ => unreachable!(),
            }
        }
    };
    Ok(NormConstant { value, warning })
}

// ── Moment ratios ───────────────────────────────────────────────────────────

/// Ratio `J_{d+1}(sigma) / J_{d-1}(sigma)`.
///
/// The covariance of a sampled cloud is `sigma_star_factor * Sigma / d`, so
/// this factor converts the true shape matrix into the estimand of the
/// scatter-based estimators. Tends to 1 as `sigma -> 0`.
pub fn sigma_star_factor(dim: usize, sigma: f64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension { dim });
    }
    let table = JTable::new(sigma, dim + 1)?;
    Ok(table.value(dim + 1) / table.value(dim - 1))
}

/// Variance of the Mahalanobis radius of a sampled point under the
/// inflated shape matrix: `1 - J_d^2 / (J_{d+1} J_{d-1})`.
///
/// This is the population value the fitted `noise_sigma^2` estimates; it is
/// slightly below `sigma^2` and tends to it as `sigma -> 0`.
pub fn sigma_tilde_sq(dim: usize, sigma: f64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension { dim });
    }
    let table = JTable::new(sigma, dim + 1)?;
    let jd = table.value(dim);
    Ok(1.0 - jd * jd / (table.value(dim + 1) * table.value(dim - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn j0_matches_closed_form_at_small_alpha() {
        // Phi(-100) underflows, so J_0(0.01) = 0.01 * sqrt(2 pi) exactly.
        let j0 = j_moment(0, 0.01).unwrap();
        assert_relative_eq!(j0, 0.025066282746310003, max_relative = 1e-14);
    }

    #[test]
    fn j4_small_alpha_polynomial() {
        // For alpha = 0.01 the exponential corrections underflow, leaving
        // J_4 = alpha sqrt(2 pi) (1 + 6 alpha^2 + 3 alpha^4).
        let alpha = 0.01f64;
        let j4 = j_moment(4, alpha).unwrap();
        let expected = 1.0 + 6.0 * alpha * alpha + 3.0 * alpha.powi(4);
        assert_relative_eq!(j4 / (alpha * SQRT_2PI), expected, max_relative = 1e-10);
    }

    #[test]
    fn table_is_increasing() {
        for &alpha in &[0.005, 0.05, 0.3, 0.9] {
            let table = JTable::new(alpha, 8).unwrap();
            for q in 1..=8 {
                // The q = 1 increment alpha^2 exp(-1/(2 alpha^2)) underflows
                // for tiny alpha, so that single comparison may tie.
                if q == 1 {
                    assert!(table.value(1) >= table.value(0), "alpha={alpha}");
                } else {
                    assert!(table.value(q) > table.value(q - 1), "alpha={alpha} q={q}");
                }
                assert!(table.value(q).is_finite() && table.value(q) > 0.0);
            }
        }
    }

    #[test]
    fn alpha_domain_errors() {
        assert!(matches!(
            j_moment(2, 0.0),
            Err(Error::Domain { what: "alpha", .. })
        ));
        assert!(j_moment(2, -0.5).is_err());
        assert!(j_moment(2, f64::NAN).is_err());
        assert!(j_moment(2, f64::INFINITY).is_err());
    }

    #[test]
    fn oracle_domain_errors() {
        assert!(j_moment_oracle(13, 0.5).is_err());
        assert!(j_moment_oracle(3, 1.5).is_err());
        assert!(j_moment_oracle(3, 0.0).is_err());
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        for &alpha in &[0.01, 0.1, 0.5, 1.0] {
            for q in [0usize, 1, 2, 5, 8] {
                let exact = j_moment(q, alpha).unwrap();
                let quad = j_moment_oracle(q, alpha).unwrap();
                assert_relative_eq!(exact, quad, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn c2_times_its_pieces_is_one() {
        // C_2 = 1 / (2 pi det^{1/2} J_1), so the product below is exactly 1.
        let det = 2.5f64;
        let sigma = 0.05f64;
        let c2 = norm_constant(2, det, sigma, ConstantMode::Exact).unwrap();
        let j1 = j_moment(1, sigma).unwrap();
        let product = c2.value * 2.0 * std::f64::consts::PI * det.sqrt() * j1;
        assert_relative_eq!(product, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_scales_with_determinant() {
        // Quadrupling the determinant halves C_d.
        for mode in [ConstantMode::Exact, ConstantMode::Approx] {
            let a = norm_constant(3, 1.0, 0.01, mode).unwrap().value;
            let b = norm_constant(3, 4.0, 0.01, mode).unwrap().value;
            assert_relative_eq!(b / a, 0.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn exact_and_approx_agree_at_small_sigma() {
        let exact = norm_constant(3, 1.0, 0.01, ConstantMode::Exact).unwrap().value;
        let approx = norm_constant(3, 1.0, 0.01, ConstantMode::Approx)
            .unwrap()
            .value;
        assert_relative_eq!(exact, approx, max_relative = 1e-8);
    }

    #[test]
    fn sigma_policy_warnings_and_errors() {
        assert!(norm_constant(3, 1.0, 0.05, ConstantMode::Approx)
            .unwrap()
            .warning
            .is_none());
        let warned = norm_constant(3, 1.0, 0.2, ConstantMode::Approx).unwrap();
        assert_eq!(warned.warning, Some(SigmaWarning { sigma: 0.2 }));
        assert!(matches!(
            norm_constant(3, 1.0, 1.0, ConstantMode::Exact),
            Err(Error::SigmaOutOfRange { .. })
        ));
        assert!(norm_constant(3, 1.0, 0.0, ConstantMode::Exact).is_err());
        assert!(norm_constant(3, 1.0, -0.1, ConstantMode::Exact).is_err());
    }

    #[test]
    fn norm_constant_rejects_bad_inputs() {
        assert!(matches!(
            norm_constant(4, 1.0, 0.01, ConstantMode::Exact),
            Err(Error::UnsupportedDimension { dim: 4 })
        ));
        assert!(norm_constant(0, 1.0, 0.01, ConstantMode::Exact).is_err());
        assert!(norm_constant(3, 0.0, 0.01, ConstantMode::Exact).is_err());
        assert!(norm_constant(3, -2.0, 0.01, ConstantMode::Exact).is_err());
    }

    #[test]
    fn moment_ratios_tend_to_their_limits() {
        // sigma -> 0: the cloud concentrates on the surface, both the
        // inflation factor and the radius variance collapse.
        let f = sigma_star_factor(3, 1e-4).unwrap();
        assert_relative_eq!(f, 1.0, max_relative = 1e-6);
        let v = sigma_tilde_sq(3, 1e-4).unwrap();
        assert!(v > 0.0 && v < 1e-7);
    }

    #[test]
    fn moment_ratios_reject_dim_below_two() {
        assert!(sigma_star_factor(1, 0.01).is_err());
        assert!(sigma_tilde_sq(0, 0.01).is_err());
    }
}
