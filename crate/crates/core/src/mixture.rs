//! Input-dependent Gaussian mixtures: the conditional predictive distribution
//! emitted by the network for a single input.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{normal_log_pdf, std_normal_cdf, std_normal_pdf};

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Truncation constants for the network output head.
///
/// Means are kept in `[-m_mu, m_mu]`, standard deviations in
/// `[sigma_min, sigma_max]` and every weight at or above `pi_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadBounds {
    pub m_mu: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub pi_min: f64,
}

impl Default for HeadBounds {
    fn default() -> Self {
        Self {
            m_mu: 1e3,
            sigma_min: 1e-3,
            sigma_max: 1e3,
            pi_min: 1e-6,
        }
    }
}

impl HeadBounds {
    pub fn new(m_mu: f64, sigma_min: f64, sigma_max: f64, pi_min: f64) -> Result<Self> {
        let b = Self {
            m_mu,
            sigma_min,
            sigma_max,
            pi_min,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.m_mu, self.sigma_min, self.sigma_max, self.pi_min]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("head bounds must be finite".into()));
        }
        if self.m_mu <= 0.0 {
            return Err(Error::InvalidParams(format!("m_mu must be > 0, got {}", self.m_mu)));
        }
        if self.sigma_min <= 0.0 || self.sigma_max < self.sigma_min {
            return Err(Error::InvalidParams(format!(
                "need 0 < sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.pi_min <= 0.0 || self.pi_min >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "pi_min must lie in (0, 1), got {}",
                self.pi_min
            )));
        }
        Ok(())
    }

    /// Checks `pi_min * k <= 1` for a mixture with `k` components.
    pub fn validate_for(&self, k: usize) -> Result<()> {
        self.validate()?;
        if k == 0 {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        if self.pi_min * k as f64 > 1.0 {
            return Err(Error::InvalidParams(format!(
                "pi_min = {} too large for K = {k}",
                self.pi_min
            )));
        }
        Ok(())
    }
}

/// Weights, means and standard deviations of a `K`-component univariate
/// Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRecord", into = "MixtureRecord")]
pub struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// Flat on-disk form of [`MixtureParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl TryFrom<MixtureRecord> for MixtureParams {
    type Error = Error;

    fn try_from(r: MixtureRecord) -> Result<Self> {
        if r.weights.len() != r.k {
            return Err(Error::Schema(format!(
                "mixture record declares k = {} but has {} weights",
                r.k,
                r.weights.len()
            )));
        }
        MixtureParams::new(r.weights, r.means, r.stds)
    }
}

impl From<MixtureParams> for MixtureRecord {
    fn from(p: MixtureParams) -> Self {
        MixtureRecord {
            k: p.k(),
            weights: p.weights,
            means: p.means,
            stds: p.stds,
        }
    }
}

/// Closed-form predictive mean and variance of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

impl MixtureParams {
    /// Validates the structural invariants: equal lengths, `K >= 1`, weights
    /// in `(0, 1]` summing to one, finite means and positive finite stds.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        if means.len() != k || stds.len() != k {
            return Err(Error::InvalidParams(format!(
                "component arrays differ in length: {} weights, {} means, {} stds",
                k,
                means.len(),
                stds.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0 && **w <= 1.0)) {
            return Err(Error::InvalidParams(format!("weight {w} outside (0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParams(format!("weights sum to {sum}, not 1")));
        }
        if let Some(m) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite mean {m}")));
        }
        if let Some(s) = stds.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParams(format!("std {s} must be positive and finite")));
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    /// Like [`MixtureParams::new`] but additionally enforces `bounds`.
    pub fn with_bounds(
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
        bounds: &HeadBounds,
    ) -> Result<Self> {
        let p = Self::new(weights, means, stds)?;
        p.check_bounds(bounds)?;
        Ok(p)
    }

    /// Single Gaussian component.
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![std])
    }

    /// Builds parameters without any validation.
    ///
    /// Score formulas remain defined off the probability simplex, so derivative
    /// probes perturb single weights through this constructor. Everything else
    /// should go through [`MixtureParams::new`].
    pub fn from_parts_unchecked(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Self {
        Self {
            weights,
            means,
            stds,
        }
    }

    pub fn check_bounds(&self, bounds: &HeadBounds) -> Result<()> {
        bounds.validate_for(self.k())?;
        for k in 0..self.k() {
            let (w, m, s) = (self.weights[k], self.means[k], self.stds[k]);
            if w < bounds.pi_min {
                return Err(Error::InvalidParams(format!(
                    "weight {w} of component {k} below pi_min {}",
                    bounds.pi_min
                )));
            }
            if m.abs() > bounds.m_mu {
                return Err(Error::InvalidParams(format!(
                    "mean {m} of component {k} exceeds m_mu {}",
                    bounds.m_mu
                )));
            }
            if s < bounds.sigma_min || s > bounds.sigma_max {
                return Err(Error::InvalidParams(format!(
                    "std {s} of component {k} outside [{}, {}]",
                    bounds.sigma_min, bounds.sigma_max
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Parameters of `a * Y + b` when `Y` follows this mixture (`a > 0`).
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && shift.is_finite()) {
            return Err(Error::Domain(format!(
                "affine map needs positive finite scale and finite shift, got ({scale}, {shift})"
            )));
        }
        Self::new(
            self.weights.clone(),
            self.means.iter().map(|m| scale * m + shift).collect(),
            self.stds.iter().map(|s| scale * s).collect(),
        )
    }

    /// Returns the same mixture with components reordered by `perm`
    /// (component `i` of the result is component `perm[i]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            means: perm.iter().map(|&i| self.means[i]).collect(),
            stds: perm.iter().map(|&i| self.stds[i]).collect(),
        }
    }

    /// Density `sum_k pi_k phi(y; mu_k, sigma_k^2)`.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self
            .components()
            .map(|(w, m, s)| w * std_normal_pdf((y - m) / s) / s)
            .sum())
    }

    /// Log-density evaluated with log-sum-exp.
    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self.log_pdf_unchecked(y))
    }

    pub(crate) fn log_pdf_unchecked(&self, y: f64) -> f64 {
        let terms: Vec<f64> = self
            .components()
            .map(|(w, m, s)| w.ln() + normal_log_pdf(y, m, s))
            .collect();
        log_sum_exp(&terms)
    }

    /// `sum_k pi_k Phi((y - mu_k) / sigma_k)`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * std_normal_cdf((y - m) / s))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Inverse CDF by bisection on the analytic CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
        }
        let s_max = self.stds.iter().cloned().fold(0.0, f64::max);
        let mut lo = self.means.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * s_max;
        let mut hi = self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * s_max;

        let mut expansions = 0;
        while self.cdf(lo) > p || self.cdf(hi) < p {
            if expansions == QUANTILE_MAX_EXPANSIONS {
                return Err(Error::Domain(format!(
                    "could not bracket quantile {p} within [{lo}, {hi}]"
                )));
            }
            let width = hi - lo;
            if self.cdf(lo) > p {
                lo -= width;
            }
            if self.cdf(hi) < p {
                hi += width;
            }
            expansions += 1;
        }

        for _ in 0..QUANTILE_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Central interval holding probability `level`.
    pub fn central_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("interval level {level} outside (0, 1)")));
        }
        let lo = self.quantile(0.5 * (1.0 - level))?;
        let hi = self.quantile(0.5 * (1.0 + level))?;
        Ok((lo, hi))
    }

    /// Predictive mean and the total variance (within- plus between-component).
    pub fn moments(&self) -> PredictiveSummary {
        let mean: f64 = self.components().map(|(w, m, _)| w * m).sum();
        let variance: f64 = self
            .components()
            .map(|(w, m, s)| w * (s * s + (m - mean) * (m - mean)))
            .sum();
        PredictiveSummary {
            mean,
            variance,
            std: variance.sqrt(),
        }
    }

    /// Draws a component index, then a Gaussian value from it.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.sample_component(rng);
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.stds[k] * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.k() - 1
    }

    pub(crate) fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&w, &m), &s)| (w, m, s))
    }
}

const QUANTILE_MAX_EXPANSIONS: usize = 10;
// Bisection stops once the bracket collapses to adjacent floats; this is only a cap.
const QUANTILE_MAX_ITERS: usize = 200;

fn check_finite(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite target {y}")))
    }
}

/// `ln(sum(exp(x)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn bimodal() -> MixtureParams {
        MixtureParams::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    fn std_normal() -> MixtureParams {
        MixtureParams::gaussian(0.0, 1.0).unwrap()
    }

    #[test]
    fn pdf_reference_values() {
        assert!((std_normal().pdf(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((bimodal().pdf(0.0).unwrap() - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!(std_normal().pdf(f64::NAN).is_err());
        assert!(std_normal().pdf(f64::INFINITY).is_err());
    }

    #[test]
    fn log_pdf_reference_values() {
        assert!((std_normal().log_pdf(0.0).unwrap() + 0.918_938_533_204_672_8).abs() < 1e-15);
        assert!((bimodal().log_pdf(0.0).unwrap() + 1.418_938_533_204_672_7).abs() < 1e-14);
    }

    #[test]
    fn log_pdf_far_tail_does_not_underflow() {
        let s = 1e-3;
        let p = MixtureParams::gaussian(0.0, s).unwrap();
        let got = p.log_pdf(50.0 * s).unwrap();
        let want = -0.5 * 2500.0 - (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((got - want).abs() < 1e-10 * want.abs());

        // far enough that the plain density underflows to zero
        let far = p.log_pdf(1.0).unwrap();
        assert!(far.is_finite() && far < -4e5);
        assert_eq!(p.pdf(1.0).unwrap(), 0.0);
    }

    #[test]
    fn moments_reference_values() {
        let m = bimodal().moments();
        assert!(m.mean.abs() < 1e-15);
        assert!((m.variance - 2.0).abs() < 1e-15);

        let ex2 = MixtureParams::new(vec![0.3, 0.7], vec![-8.0, 8.0], vec![3.0, 3.0]).unwrap();
        let m = ex2.moments();
        assert!((m.mean - 3.2).abs() < 1e-12);
        assert!((m.variance - 62.76).abs() < 1e-10);
        assert!((m.std - 62.76f64.sqrt()).abs() < 1e-12);

        let one = MixtureParams::gaussian(2.5, 0.7).unwrap().moments();
        assert_eq!(one.mean, 2.5);
        assert!((one.variance - 0.49).abs() < 1e-15);
    }

    #[test]
    fn cdf_and_quantile_reference_values() {
        assert_eq!(std_normal().cdf(0.0), 0.5);
        assert!((bimodal().cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal().quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(bimodal().quantile(0.5).unwrap().abs() < 1e-9);
    }

    #[test]
    fn quantile_rejects_levels_outside_unit_interval() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal().quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_expands_bracket_for_extreme_levels() {
        let p = std_normal();
        let q = p.quantile(1e-30).unwrap();
        assert!(q < -10.0);
        assert!((p.cdf(q) / 1e-30 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn near_degenerate_sampling_stays_at_the_mean() {
        let p = MixtureParams::gaussian(5.0, 1e-6).unwrap();
        let mut rng = seeded_rng(3);
        assert!(p.sample(&mut rng, 10_000).iter().all(|v| (v - 5.0).abs() < 1e-5));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = bimodal().sample(&mut seeded_rng(11), 100);
        let b = bimodal().sample(&mut seeded_rng(11), 100);
        assert_eq!(a, b);
        assert!(bimodal().sample(&mut seeded_rng(11), 0).is_empty());
    }

    #[test]
    fn construction_rejects_broken_invariants() {
        assert!(MixtureParams::new(vec![], vec![], vec![]).is_err());
        assert!(MixtureParams::new(vec![0.5, 0.6], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![f64::NAN], vec![1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());

        let b = HeadBounds::default();
        assert!(MixtureParams::with_bounds(vec![1.0], vec![0.0], vec![1e-4], &b).is_err());
        assert!(MixtureParams::with_bounds(vec![1.0], vec![2e3], vec![1.0], &b).is_err());
        assert!(MixtureParams::with_bounds(vec![1.0], vec![0.0], vec![1.0], &b).is_ok());
    }

    #[test]
    fn head_bounds_validation() {
        assert!(HeadBounds::new(1.0, 0.0, 1.0, 0.1).is_err());
        assert!(HeadBounds::new(1.0, 2.0, 1.0, 0.1).is_err());
        assert!(HeadBounds::new(-1.0, 0.1, 1.0, 0.1).is_err());
        let b = HeadBounds::new(1.0, 0.1, 1.0, 0.3).unwrap();
        assert!(b.validate_for(3).is_ok());
        assert!(b.validate_for(4).is_err());
    }

    #[test]
    fn record_round_trip_preserves_values() {
        let p = MixtureParams::new(vec![0.25, 0.75], vec![-0.1, 3.3], vec![0.2, 1.0 / 3.0]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"k\":2"));
        let back: MixtureParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        assert!(serde_json::from_str::<MixtureParams>(
            r#"{"k":3,"weights":[0.5,0.5],"means":[0,0],"stds":[1,1]}"#
        )
        .is_err());
    }

    #[test]
    fn affine_maps_moments() {
        let p = bimodal().affine(2.0, 3.0).unwrap();
        let m = p.moments();
        assert!((m.mean - 3.0).abs() < 1e-14);
        assert!((m.variance - 8.0).abs() < 1e-12);
    }
}
