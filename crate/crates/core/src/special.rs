//! Standard normal density and distribution function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1 / sqrt(2 pi)`
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// `sqrt(2 / pi)`
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF through the complementary error function, which keeps
/// full relative accuracy deep in the lower tail.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `2 Phi(z) - 1`, evaluated as `erf(z / sqrt 2)` to avoid cancellation near 0.
#[inline]
pub fn two_cdf_minus_one(z: f64) -> f64 {
    libm::erf(z * FRAC_1_SQRT_2)
}

/// Log-density of `N(mean, std^2)` at `y`.
#[inline]
pub fn normal_log_pdf(y: f64, mean: f64, std: f64) -> f64 {
    let z = (y - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LN_2PI
}

/// `sqrt(pi)`, used by the energy-score asymptotics.
pub fn sqrt_pi() -> f64 {
    PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_definitions() {
        assert!((INV_SQRT_2PI - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((SQRT_2_OVER_PI - (2.0 / PI).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-16);
        // deep lower tail keeps relative accuracy
        let tail = std_normal_cdf(-30.0);
        assert!((tail / 4.906_713_927_148_187e-198 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cdf_minus_one_is_odd() {
        for &z in &[0.0, 0.3, 1.7, 5.0] {
            assert!((two_cdf_minus_one(z) + two_cdf_minus_one(-z)).abs() < 1e-16);
            assert!((two_cdf_minus_one(z) - (2.0 * std_normal_cdf(z) - 1.0)).abs() < 1e-15);
        }
    }
}
