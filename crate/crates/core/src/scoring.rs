//! Scoring rules for Gaussian mixture forecasts.
//!
//! The logarithmic score, the closed-form energy score and their hybrid, each
//! with analytic partial derivatives with respect to the mixture weights,
//! means and standard deviations. A Monte Carlo energy score is provided as an
//! independent oracle; it is never used for training.
//!
//! Weight derivatives are taken with every `pi_k` treated as a free variable,
//! so the scores are evaluated on whatever weights they are given (the
//! simplex constraint is the network head's job).

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, MixtureParams};
use crate::special::{normal_log_pdf, std_normal_pdf, two_cdf_minus_one, SQRT_2_OVER_PI};

thread_local! {
    static ENERGY_EVALS: Cell<u64> = const { Cell::new(0) };
}

/// Number of energy-score evaluations (value or gradient) made on the calling
/// thread since it started.
pub fn energy_evaluations_on_this_thread() -> u64 {
    ENERGY_EVALS.with(|c| c.get())
}

fn count_energy_eval() {
    ENERGY_EVALS.with(|c| c.set(c.get() + 1));
}

/// Weight `eta` of the logarithmic score in the hybrid score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    eta: f64,
}

impl ScoreConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(Self { eta })
    }

    /// Pure log score (mixture density network objective).
    pub fn log_only() -> Self {
        Self { eta: 1.0 }
    }

    /// Pure energy score.
    pub fn energy_only() -> Self {
        Self { eta: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Partial derivatives of a score with respect to each mixture parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub d_weights: Vec<f64>,
    pub d_means: Vec<f64>,
    pub d_stds: Vec<f64>,
}

impl ScoreGradient {
    pub fn zeros(k: usize) -> Self {
        Self {
            d_weights: vec![0.0; k],
            d_means: vec![0.0; k],
            d_stds: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.d_weights.len()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ScoreGradient) {
        for (a, b) in self
            .iter_mut()
            .zip(other.d_weights.iter().chain(&other.d_means).chain(&other.d_stds))
        {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Weights, then means, then stds.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.d_weights.iter().chain(&self.d_means).chain(&self.d_stds)
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.d_weights
            .iter_mut()
            .chain(self.d_means.iter_mut())
            .chain(self.d_stds.iter_mut())
    }
}

/// `E|Z|` for `Z ~ N(a, b^2)`.
pub fn folded_gaussian_mean(a: f64, b: f64) -> Result<f64> {
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::Domain(format!("scale must be positive, got {b}")));
    }
    if !a.is_finite() {
        return Err(Error::Domain(format!("non-finite location {a}")));
    }
    Ok(folded_mean(a, b))
}

#[inline]
fn folded_mean(a: f64, b: f64) -> f64 {
    let w = a / b;
    b * SQRT_2_OVER_PI * (-0.5 * w * w).exp() + a * two_cdf_minus_one(w)
}

/// Logarithmic score `-ln f(y)`.
pub fn log_score(params: &MixtureParams, y: f64) -> f64 {
    -params.log_pdf_unchecked(y)
}

/// Closed-form energy score of a Gaussian mixture at `y`. Cost is `O(K^2)`.
pub fn energy_score_analytic(params: &MixtureParams, y: f64) -> f64 {
    count_energy_eval();
    let w = params.weights();
    let mu = params.means();
    let sd = params.stds();
    let k = params.k();

    let mut accuracy = 0.0;
    for m in 0..k {
        accuracy += w[m] * folded_mean(mu[m] - y, sd[m]);
    }
    // B is symmetric: diagonal plus twice the upper triangle.
    let mut spread = 0.0;
    for m in 0..k {
        spread += w[m] * w[m] * folded_mean(0.0, std::f64::consts::SQRT_2 * sd[m]);
        for l in (m + 1)..k {
            let s = (sd[m] * sd[m] + sd[l] * sd[l]).sqrt();
            spread += 2.0 * w[m] * w[l] * folded_mean(mu[m] - mu[l], s);
        }
    }
    accuracy - 0.5 * spread
}

/// `eta * log_score + (1 - eta) * energy_score`. The energy term is skipped
/// entirely when `eta == 1` and the log term when `eta == 0`.
pub fn hybrid_score(params: &MixtureParams, y: f64, cfg: ScoreConfig) -> f64 {
    let eta = cfg.eta;
    if eta == 1.0 {
        log_score(params, y)
    } else if eta == 0.0 {
        energy_score_analytic(params, y)
    } else {
        eta * log_score(params, y) + (1.0 - eta) * energy_score_analytic(params, y)
    }
}

/// Responsibility ratios `r_k = phi_k / sum_l pi_l phi_l`, computed in log
/// space. Note `r_k` does not include `pi_k`; `sum_k pi_k r_k = 1`.
pub fn responsibilities(params: &MixtureParams, y: f64) -> Vec<f64> {
    let log_phi: Vec<f64> = params
        .components()
        .map(|(_, m, s)| normal_log_pdf(y, m, s))
        .collect();
    let weighted: Vec<f64> = params
        .weights()
        .iter()
        .zip(&log_phi)
        .map(|(w, lp)| w.ln() + lp)
        .collect();
    let log_mix = log_sum_exp(&weighted);
    log_phi.iter().map(|lp| (lp - log_mix).exp()).collect()
}

/// Derivatives of the logarithmic score.
pub fn log_score_grad(params: &MixtureParams, y: f64) -> ScoreGradient {
    let r = responsibilities(params, y);
    let mut g = ScoreGradient::zeros(params.k());
    for (k, (w, m, s)) in params.components().enumerate() {
        let pr = w * r[k];
        let d = m - y;
        g.d_weights[k] = -r[k];
        g.d_means[k] = d / (s * s) * pr;
        g.d_stds[k] = (1.0 / s - d * d / (s * s * s)) * pr;
    }
    g
}

/// Derivatives of the closed-form energy score.
pub fn energy_score_grad(params: &MixtureParams, y: f64) -> ScoreGradient {
    energy_value_and_grad(params, y).1
}

/// Energy score and its derivatives sharing one pass over component pairs.
pub fn energy_value_and_grad(params: &MixtureParams, y: f64) -> (f64, ScoreGradient) {
    count_energy_eval();
    let w = params.weights();
    let mu = params.means();
    let sd = params.stds();
    let k = params.k();
    let mut g = ScoreGradient::zeros(k);

    let mut value = 0.0;
    // sum_l pi_l B_kl, sum_l pi_l (2 Phi(w_kl) - 1), sum_l pi_l (sigma_k / s_kl) phi(w_kl)
    let mut b_row = vec![0.0; k];
    let mut sign_row = vec![0.0; k];
    let mut scale_row = vec![0.0; k];

    for m in 0..k {
        let wk = (mu[m] - y) / sd[m];
        let a = folded_mean(mu[m] - y, sd[m]);
        value += w[m] * a;
        g.d_weights[m] = a;
        g.d_means[m] = two_cdf_minus_one(wk);
        g.d_stds[m] = std_normal_pdf(wk);

        for l in m..k {
            let s = (sd[m] * sd[m] + sd[l] * sd[l]).sqrt();
            let d = mu[m] - mu[l];
            let wml = d / s;
            let phi = std_normal_pdf(wml);
            let b = 2.0 * s * phi + d * two_cdf_minus_one(wml);
            let sgn = two_cdf_minus_one(wml);
            if l == m {
                value -= 0.5 * w[m] * w[m] * b;
                b_row[m] += w[m] * b;
                sign_row[m] += w[m] * sgn;
                scale_row[m] += w[m] * sd[m] / s * phi;
            } else {
                value -= w[m] * w[l] * b;
                b_row[m] += w[l] * b;
                b_row[l] += w[m] * b;
                sign_row[m] += w[l] * sgn;
                sign_row[l] -= w[m] * sgn;
                scale_row[m] += w[l] * sd[m] / s * phi;
                scale_row[l] += w[m] * sd[l] / s * phi;
            }
        }
    }

    for m in 0..k {
        g.d_weights[m] -= b_row[m];
        g.d_means[m] = w[m] * (g.d_means[m] - sign_row[m]);
        g.d_stds[m] = 2.0 * w[m] * (g.d_stds[m] - scale_row[m]);
    }
    (value, g)
}

/// Log score and its derivatives in one pass.
pub fn log_value_and_grad(params: &MixtureParams, y: f64) -> (f64, ScoreGradient) {
    let log_phi: Vec<f64> = params
        .components()
        .map(|(_, m, s)| normal_log_pdf(y, m, s))
        .collect();
    let weighted: Vec<f64> = params
        .weights()
        .iter()
        .zip(&log_phi)
        .map(|(w, lp)| w.ln() + lp)
        .collect();
    let log_mix = log_sum_exp(&weighted);
    let mut g = ScoreGradient::zeros(params.k());
    for (k, (_, m, s)) in params.components().enumerate() {
        let r = (log_phi[k] - log_mix).exp();
        let pr = (weighted[k] - log_mix).exp();
        let d = m - y;
        g.d_weights[k] = -r;
        g.d_means[k] = d / (s * s) * pr;
        g.d_stds[k] = (1.0 / s - d * d / (s * s * s)) * pr;
    }
    (-log_mix, g)
}

/// Derivatives of the hybrid score, `eta`-weighted. Mirrors
/// [`hybrid_score`] in skipping a term whose weight is zero.
pub fn hybrid_score_grad(params: &MixtureParams, y: f64, cfg: ScoreConfig) -> ScoreGradient {
    hybrid_value_and_grad(params, y, cfg).1
}

pub fn hybrid_value_and_grad(
    params: &MixtureParams,
    y: f64,
    cfg: ScoreConfig,
) -> (f64, ScoreGradient) {
    let eta = cfg.eta;
    if eta == 1.0 {
        return log_value_and_grad(params, y);
    }
    if eta == 0.0 {
        return energy_value_and_grad(params, y);
    }
    let (lv, lg) = log_value_and_grad(params, y);
    let (ev, eg) = energy_value_and_grad(params, y);
    let mut g = ScoreGradient::zeros(params.k());
    g.add_scaled(eta, &lg);
    g.add_scaled(1.0 - eta, &eg);
    (eta * lv + (1.0 - eta) * ev, g)
}

/// Mean hybrid score over a batch.
pub fn batch_loss(params_batch: &[MixtureParams], y_batch: &[f64], cfg: ScoreConfig) -> Result<f64> {
    if params_batch.len() != y_batch.len() {
        return Err(Error::Shape(format!(
            "{} parameter sets for {} targets",
            params_batch.len(),
            y_batch.len()
        )));
    }
    if params_batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let scores: Vec<f64> = params_batch
        .iter()
        .zip(y_batch)
        .map(|(p, &y)| hybrid_score(p, y, cfg))
        .collect();
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Pairwise (cascade) summation; fixed association order for any input.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// How the `sum_{m,n} |z_m - z_n|` term of the Monte Carlo estimator is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairwiseSum {
    /// Literal double loop, `O(M^2)`.
    Direct,
    /// Sort once and use prefix sums, `O(M log M)`. Same statistic.
    #[default]
    Sorted,
}

/// Monte Carlo energy score with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Sample-based energy score over `m` draws from `params`
/// (`(1/M) sum |z - y| - (1/(2M^2)) sum sum |z - z'|`).
pub fn energy_score_monte_carlo<R: Rng + ?Sized>(
    params: &MixtureParams,
    y: f64,
    m: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    energy_score_monte_carlo_with(params, y, m, rng, PairwiseSum::default())
}

pub fn energy_score_monte_carlo_with<R: Rng + ?Sized>(
    params: &MixtureParams,
    y: f64,
    m: usize,
    rng: &mut R,
    method: PairwiseSum,
) -> Result<McEstimate> {
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 draws, got {m}")));
    }
    let z = params.sample(rng, m);
    Ok(energy_from_draws(&z, y, method))
}

/// Estimator on a fixed set of draws.
///
/// The standard error comes from the first-order (influence function)
/// expansion of the V-statistic: `psi_i = |z_i - y| - (1/M) sum_j |z_i - z_j|`,
/// `se = sd(psi) / sqrt(M)`.
pub fn energy_from_draws(z: &[f64], y: f64, method: PairwiseSum) -> McEstimate {
    let m = z.len();
    let mf = m as f64;
    let row_sums = match method {
        PairwiseSum::Direct => z
            .iter()
            .map(|zi| z.iter().map(|zj| (zi - zj).abs()).sum::<f64>())
            .collect::<Vec<f64>>(),
        PairwiseSum::Sorted => sorted_row_sums(z),
    };
    let accuracy: Vec<f64> = z.iter().map(|zi| (zi - y).abs()).collect();
    let estimate = accuracy.iter().sum::<f64>() / mf - row_sums.iter().sum::<f64>() / (2.0 * mf * mf);

    let psi: Vec<f64> = accuracy
        .iter()
        .zip(&row_sums)
        .map(|(a, d)| a - d / mf)
        .collect();
    let psi_mean = psi.iter().sum::<f64>() / mf;
    let var = psi.iter().map(|p| (p - psi_mean).powi(2)).sum::<f64>() / (mf - 1.0);
    McEstimate {
        estimate,
        std_error: (var / mf).sqrt(),
    }
}

/// `sum_j |z_i - z_j|` for every `i`, via sorting.
fn sorted_row_sums(z: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let total: f64 = z.iter().sum();
    let mut out = vec![0.0; m];
    let mut below = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let v = z[i];
        let above = total - below - v;
        out[i] = v * rank as f64 - below + above - v * (m - 1 - rank) as f64;
        below += v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use std::f64::consts::PI;

    fn std_normal() -> MixtureParams {
        MixtureParams::gaussian(0.0, 1.0).unwrap()
    }

    #[test]
    fn folded_mean_reference_values() {
        assert!((folded_gaussian_mean(0.0, 1.0).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert!((folded_gaussian_mean(10.0, 1.0).unwrap() - 10.0).abs() < 1e-10);
        assert!((folded_gaussian_mean(-10.0, 1.0).unwrap() - 10.0).abs() < 1e-10);
        assert!(matches!(folded_gaussian_mean(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(folded_gaussian_mean(0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn self_pair_spread_term() {
        for s in [0.1, 1.0, 7.0] {
            let b = folded_gaussian_mean(0.0, std::f64::consts::SQRT_2 * s).unwrap();
            assert!((b - 2.0 * s / PI.sqrt()).abs() < 1e-14 * s.max(1.0));
        }
    }

    #[test]
    fn energy_score_standard_normal_at_mode() {
        let es = energy_score_analytic(&std_normal(), 0.0);
        let want = (2.0 / PI).sqrt() - 1.0 / PI.sqrt();
        assert!((es - want).abs() < 1e-15);
        assert!((es - 0.233_695_0).abs() < 1e-7);
    }

    #[test]
    fn energy_score_sharp_forecast_at_truth_vanishes() {
        let s = 1e-6;
        let es = energy_score_analytic(&MixtureParams::gaussian(2.0, s).unwrap(), 2.0);
        let want = s * (2.0 / PI).sqrt() * (1.0 - 1.0 / 2f64.sqrt());
        assert!(es > 0.0);
        assert!((es - want).abs() < 1e-12 * s + 1e-18);
    }

    #[test]
    fn log_score_reference_values() {
        assert!((log_score(&std_normal(), 0.0) - 0.918_938_533_204_672_8).abs() < 1e-15);
        let bi = MixtureParams::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((log_score(&bi, 0.0) - 1.418_938_533_204_672_7).abs() < 1e-14);
    }

    #[test]
    fn hybrid_endpoints_and_midpoint() {
        let p = std_normal();
        assert_eq!(hybrid_score(&p, 0.3, ScoreConfig::log_only()), log_score(&p, 0.3));
        assert_eq!(
            hybrid_score(&p, 0.3, ScoreConfig::energy_only()),
            energy_score_analytic(&p, 0.3)
        );
        let h = hybrid_score(&p, 0.0, ScoreConfig::new(0.5).unwrap());
        assert!((h - 0.576_316_8).abs() < 1e-7);
        assert!(ScoreConfig::new(1.5).is_err());
        assert!(ScoreConfig::new(-0.1).is_err());
    }

    #[test]
    fn single_gaussian_log_gradient() {
        let (m, s, y) = (0.4, 1.7, -0.9);
        let g = log_score_grad(&MixtureParams::gaussian(m, s).unwrap(), y);
        assert!((g.d_weights[0] + 1.0).abs() < 1e-15);
        assert!((g.d_means[0] - (m - y) / (s * s)).abs() < 1e-15);
        assert!((g.d_stds[0] - (1.0 / s - (m - y).powi(2) / s.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn responsibilities_weighted_sum_to_one() {
        let p = MixtureParams::new(vec![0.2, 0.5, 0.3], vec![-2.0, 0.5, 4.0], vec![0.3, 1.0, 2.0])
            .unwrap();
        for y in [-3.0, 0.0, 1.0, 10.0] {
            let r = responsibilities(&p, y);
            let s: f64 = r.iter().zip(p.weights()).map(|(r, w)| r * w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_gradient_single_component_at_mean() {
        let s = 1.3;
        let g = energy_score_grad(&MixtureParams::gaussian(0.5, s).unwrap(), 0.5);
        assert!(g.d_means[0].abs() < 1e-15);
        let want = (2.0 / PI).sqrt() * (1.0 - 1.0 / 2f64.sqrt());
        assert!((g.d_stds[0] - want).abs() < 1e-15);
    }

    #[test]
    fn value_and_grad_agree_with_separate_paths() {
        let p = MixtureParams::new(vec![0.2, 0.5, 0.3], vec![-2.0, 0.5, 4.0], vec![0.3, 1.0, 2.0])
            .unwrap();
        let y = 0.7;
        let (ev, eg) = energy_value_and_grad(&p, y);
        assert!((ev - energy_score_analytic(&p, y)).abs() < 1e-14);
        let (lv, lg) = log_value_and_grad(&p, y);
        assert!((lv - log_score(&p, y)).abs() < 1e-14);
        let lg2 = log_score_grad(&p, y);
        for (a, b) in lg.iter().zip(lg2.iter()) {
            assert!((a - b).abs() < 1e-14 * b.abs().max(1.0));
        }
        assert_eq!(eg.k(), 3);
    }

    #[test]
    fn eta_one_never_touches_energy_code() {
        let p = std_normal();
        let before = energy_evaluations_on_this_thread();
        hybrid_score(&p, 0.1, ScoreConfig::log_only());
        hybrid_value_and_grad(&p, 0.1, ScoreConfig::log_only());
        assert_eq!(energy_evaluations_on_this_thread(), before);
        hybrid_score(&p, 0.1, ScoreConfig::new(0.5).unwrap());
        assert!(energy_evaluations_on_this_thread() > before);
    }

    #[test]
    fn batch_loss_contracts() {
        let p = std_normal();
        let cfg = ScoreConfig::new(0.3).unwrap();
        assert!(matches!(batch_loss(&[], &[], cfg), Err(Error::Domain(_))));
        assert!(matches!(batch_loss(&[p.clone()], &[0.0, 1.0], cfg), Err(Error::Shape(_))));
        let one = batch_loss(&[p.clone()], &[0.4], cfg).unwrap();
        assert_eq!(one, hybrid_score(&p, 0.4, cfg));
        let two = batch_loss(&[p.clone(), p.clone()], &[0.4, 0.4], cfg).unwrap();
        assert!((two - one).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_point_mass_is_near_zero() {
        let p = MixtureParams::gaussian(1.0, 1e-9).unwrap();
        let est = energy_score_monte_carlo(&p, 1.0, 500, &mut seeded_rng(1)).unwrap();
        assert!(est.estimate.abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_rejects_too_few_draws() {
        assert!(energy_score_monte_carlo(&std_normal(), 0.0, 1, &mut seeded_rng(1)).is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic_and_methods_agree() {
        let p = MixtureParams::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![0.5, 1.5]).unwrap();
        let a = energy_score_monte_carlo(&p, 0.2, 800, &mut seeded_rng(9)).unwrap();
        let b = energy_score_monte_carlo(&p, 0.2, 800, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
        let d = energy_score_monte_carlo_with(&p, 0.2, 800, &mut seeded_rng(9), PairwiseSum::Direct)
            .unwrap();
        assert!((a.estimate - d.estimate).abs() < 1e-12);
        assert!((a.std_error - d.std_error).abs() < 1e-10);
    }

    #[test]
    fn pairwise_sum_matches_naive_sum() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
