//! Self-verification suites driven by `energymix gradcheck`.
//!
//! Each suite compares an analytic quantity against an independent route:
//! central finite differences for every gradient, a Monte Carlo estimate for
//! the closed-form energy score, leading-order large-variance expansions for
//! the score gradients, and a sampled expected-score gap for properness.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::{HeadBounds, MixtureParams};
use crate::network::{backward_into, forward, init_weights, Activation, NetworkSpec, NetworkWeights, WeightGradient};
use crate::rng::{derive_seed, seeded_rng, SeededRng};
use crate::scoring::{
    energy_score_analytic, energy_score_grad, energy_score_monte_carlo, hybrid_score, hybrid_score_grad,
    log_score, log_score_grad, pairwise_sum, responsibilities, ScoreConfig, ScoreGradient,
};
use crate::special::{normal_log_pdf, INV_SQRT_2PI};

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates the analytic energy-score derivative with respect to sigma.
    FlipEnergySigmaSign,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "es-sigma-sign" => Ok(Fault::FlipEnergySigmaSign),
            other => Err(Error::Config(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Log,
    Energy,
    Hybrid(u8),
}

impl ScoreKind {
    fn name(self) -> String {
        match self {
            ScoreKind::Log => "log".into(),
            ScoreKind::Energy => "energy".into(),
            ScoreKind::Hybrid(p) => format!("hybrid_eta{:.1}", p as f64 / 10.0),
        }
    }

    fn eta(self) -> f64 {
        match self {
            ScoreKind::Log => 1.0,
            ScoreKind::Energy => 0.0,
            ScoreKind::Hybrid(p) => p as f64 / 10.0,
        }
    }

    pub fn value(self, p: &MixtureParams, y: f64) -> f64 {
        match self {
            ScoreKind::Log => log_score(p, y),
            ScoreKind::Energy => energy_score_analytic(p, y),
            ScoreKind::Hybrid(_) => hybrid_score(p, y, ScoreConfig::new(self.eta()).unwrap()),
        }
    }

    pub fn grad(self, p: &MixtureParams, y: f64, fault: Fault) -> ScoreGradient {
        let mut g = match self {
            ScoreKind::Log => log_score_grad(p, y),
            ScoreKind::Energy => energy_score_grad(p, y),
            ScoreKind::Hybrid(_) => {
                // composed here from the parts so a fault in one part shows up
                let eta = self.eta();
                let mut e = energy_score_grad(p, y);
                if fault == Fault::FlipEnergySigmaSign {
                    e.d_stds.iter_mut().for_each(|v| *v = -*v);
                }
                let mut g = ScoreGradient::zeros(p.k());
                g.add_scaled(eta, &log_score_grad(p, y));
                g.add_scaled(1.0 - eta, &e);
                if fault == Fault::None {
                    return hybrid_score_grad(p, y, ScoreConfig::new(eta).unwrap());
                }
                return g;
            }
        };
        if self == ScoreKind::Energy && fault == Fault::FlipEnergySigmaSign {
            g.d_stds.iter_mut().for_each(|v| *v = -*v);
        }
        g
    }
}

/// Draws a valid mixture with `k` components, stds in `sigma_range`, means in
/// `[-mean_span, mean_span]` and weights bounded below by `0.5 / k`-ish mass.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R, k: usize, sigma_range: (f64, f64), mean_span: f64) -> MixtureParams {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let drift: f64 = weights.iter().sum::<f64>() - 1.0;
    weights[0] -= drift;
    let (lo, hi) = sigma_range;
    let means = (0..k).map(|_| rng.random_range(-mean_span..mean_span)).collect();
    // log-uniform stds
    let stds = (0..k)
        .map(|_| (rng.random_range(lo.ln()..hi.ln())).exp())
        .collect();
    MixtureParams::new(weights, means, stds).expect("valid random mixture")
}

/// Fourth-order central finite differences of `f` with respect to each
/// mixture parameter, weights perturbed one at a time off the simplex. Steps
/// are `rel_step` times `1` for weights, `max(sigma_k, 1)` for means and
/// `sigma_k` for stds.
pub fn finite_difference_grad(
    f: &dyn Fn(&MixtureParams) -> f64,
    p: &MixtureParams,
    rel_step: f64,
) -> ScoreGradient {
    let k = p.k();
    let mut g = ScoreGradient::zeros(k);
    for family in 0..3 {
        for j in 0..k {
            let h = match family {
                0 => rel_step,
                1 => rel_step * p.stds()[j].max(1.0),
                _ => rel_step * p.stds()[j],
            };
            let at = |delta: f64| {
                let mut parts = [p.weights().to_vec(), p.means().to_vec(), p.stds().to_vec()];
                parts[family][j] += delta;
                let [w, m, s] = parts;
                f(&MixtureParams::from_parts_unchecked(w, m, s))
            };
            let d = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            match family {
                0 => g.d_weights[j] = d,
                1 => g.d_means[j] = d,
                _ => g.d_stds[j] = d,
            }
        }
    }
    g
}

/// Relative error with the reference magnitude floored at `abs_floor`.
pub fn floored_rel_error(analytic: f64, reference: f64, abs_floor: f64) -> f64 {
    (analytic - reference).abs() / reference.abs().max(abs_floor)
}

/// One line of a suite report.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub suite: String,
    pub check: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Parameters of the worst case, for diagnostics.
    pub worst_case: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub rows: Vec<SuiteRow>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SuiteRow> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["suite", "check", "cases", "max_error", "tolerance", "passed", "worst_case"])?;
        for r in &self.rows {
            w.write_record([
                r.suite.clone(),
                r.check.clone(),
                r.cases.to_string(),
                format!("{:e}", r.max_error),
                format!("{:e}", r.tolerance),
                r.passed.to_string(),
                r.worst_case.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn describe(p: &MixtureParams, y: f64) -> String {
    format!("pi={:?} mu={:?} sigma={:?} y={y}", p.weights(), p.means(), p.stds())
}

/// Gradient tolerance: relative error, reference magnitude floored at `GRAD_ABS_FLOOR`.
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_FLOOR: f64 = 1e-7;

/// Finite-difference check of the three score gradients on `cases` random
/// mixtures (`K` in 1..=5, sigma in [0.1, 10], y within 5 sigma of a mean).
pub fn gradient_suite(seed: u64, cases: usize, fault: Fault) -> Vec<SuiteRow> {
    let kinds = [ScoreKind::Log, ScoreKind::Energy, ScoreKind::Hybrid(5)];
    kinds
        .iter()
        .enumerate()
        .map(|(ki, &kind)| {
            let mut rng = seeded_rng(derive_seed(seed, 100 + ki as u64));
            let mut worst = (0.0, String::new());
            for _ in 0..cases {
                let k = rng.random_range(1..=5);
                let p = random_mixture(&mut rng, k, (0.1, 10.0), 5.0);
                let anchor = rng.random_range(0..k);
                let y = p.means()[anchor] + rng.random_range(-5.0..5.0) * p.stds()[anchor];
                let analytic = kind.grad(&p, y, fault);
                let fd = finite_difference_grad(&|q| kind.value(q, y), &p, 1e-3);
                for (a, r) in analytic.iter().zip(fd.iter()) {
                    let e = floored_rel_error(*a, *r, GRAD_ABS_FLOOR);
                    if e > worst.0 || e.is_nan() {
                        worst = (e, describe(&p, y));
                    }
                }
            }
            SuiteRow {
                suite: "finite_difference".into(),
                check: kind.name(),
                cases,
                max_error: worst.0,
                tolerance: GRAD_REL_TOL,
                passed: worst.0 <= GRAD_REL_TOL,
                worst_case: worst.1,
            }
        })
        .collect()
}

/// Oracle agreement: closed-form energy score within `4 SE` of its Monte
/// Carlo estimate with `draws` samples. Passes when at least 99% agree.
pub fn oracle_suite(seed: u64, cases: usize, draws: usize) -> SuiteRow {
    let mut rng = seeded_rng(derive_seed(seed, 200));
    let mut misses = 0;
    let mut worst = (0.0, String::new());
    for c in 0..cases {
        let k = rng.random_range(1..=5);
        let p = random_mixture(&mut rng, k, (0.1, 10.0), 5.0);
        let anchor = rng.random_range(0..k);
        let y = p.means()[anchor] + rng.random_range(-5.0..5.0) * p.stds()[anchor];
        let analytic = energy_score_analytic(&p, y);
        let mut mc_rng = seeded_rng(derive_seed(seed, 10_000 + c as u64));
        let mc = energy_score_monte_carlo(&p, y, draws, &mut mc_rng).expect("draws >= 2");
        let z = (analytic - mc.estimate).abs() / mc.std_error;
        if z > 4.0 {
            misses += 1;
        }
        if z > worst.0 {
            worst = (z, describe(&p, y));
        }
    }
    let required = (0.99 * cases as f64).ceil() as usize;
    SuiteRow {
        suite: "mc_oracle".into(),
        check: format!("within_4se_{}_of_{}", cases - misses, cases),
        cases,
        max_error: worst.0,
        tolerance: 4.0,
        passed: cases - misses >= required,
        worst_case: worst.1,
    }
}

/// Leading-order large-variance behaviour of the score gradients for one
/// component inflated to `sigma_big`, others fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticErrors {
    /// `dS_e/dpi_k / sigma_k` vs `(sqrt2 - 2) pi_k / sqrt(pi)`.
    pub energy_pi: f64,
    /// `dS_e/dsigma_k` vs `(sqrt2 - 1) pi_k^2 / sqrt(pi)`.
    pub energy_sigma: f64,
    /// `dS_l/dmu_k sigma_k^3` vs `pi_k (mu_k - y) / (sqrt(2 pi) T1)`.
    pub log_mu: f64,
    /// `dS_l/dsigma_k sigma_k^2` vs `pi_k / (sqrt(2 pi) T1)`.
    pub log_sigma: f64,
}

/// Relative errors of the analytic gradients against the leading terms, for
/// component `k` of `p` with its std replaced by `sigma_big`.
pub fn asymptotic_errors(p: &MixtureParams, y: f64, k: usize, sigma_big: f64, fault: Fault) -> AsymptoticErrors {
    let mut stds = p.stds().to_vec();
    stds[k] = sigma_big;
    let q = MixtureParams::new(p.weights().to_vec(), p.means().to_vec(), stds).unwrap();
    let pk = q.weights()[k];
    let t1: f64 = q
        .components()
        .enumerate()
        .filter(|(l, _)| *l != k)
        .map(|(_, (w, m, s))| w * normal_log_pdf(y, m, s).exp())
        .sum();
    let sqrt_pi = PI.sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;

    let ge = ScoreKind::Energy.grad(&q, y, fault);
    let gl = log_score_grad(&q, y);
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    AsymptoticErrors {
        energy_pi: rel(ge.d_weights[k] / sigma_big, (sqrt2 - 2.0) * pk / sqrt_pi),
        energy_sigma: rel(ge.d_stds[k], (sqrt2 - 1.0) * pk * pk / sqrt_pi),
        log_mu: rel(
            gl.d_means[k] * sigma_big.powi(3),
            pk * (q.means()[k] - y) * INV_SQRT_2PI / t1,
        ),
        log_sigma: rel(gl.d_stds[k] * sigma_big * sigma_big, pk * INV_SQRT_2PI / t1),
    }
}

pub const ASYMPTOTIC_TOL: f64 = 0.01;

/// Random `K >= 2` mixtures with one component pushed to sigma = 1e2, 1e3,
/// 1e4; gates on the 1e4 errors.
pub fn asymptotic_suite(seed: u64, cases: usize, fault: Fault) -> Vec<SuiteRow> {
    let mut rng = seeded_rng(derive_seed(seed, 300));
    let names = ["energy_pi", "energy_sigma", "log_mu", "log_sigma"];
    let mut worst = [(0.0f64, String::new()), (0.0, String::new()), (0.0, String::new()), (0.0, String::new())];
    let mut trend_ok = true;
    for _ in 0..cases {
        let k_total = rng.random_range(2..=4);
        let p = random_mixture(&mut rng, k_total, (0.5, 2.0), 3.0);
        let k = rng.random_range(0..k_total);
        // keep y near another component so T1 is not negligible, and away from mu_k
        let other = (k + 1) % k_total;
        let mut y = p.means()[other] + rng.random_range(-1.0..1.0) * p.stds()[other];
        if (p.means()[k] - y).abs() < 0.5 {
            y = p.means()[k] + if y >= p.means()[k] { 0.5 } else { -0.5 };
        }
        let errs: Vec<AsymptoticErrors> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&s| asymptotic_errors(&p, y, k, s, fault))
            .collect();
        let last = errs[2];
        let vals = [last.energy_pi, last.energy_sigma, last.log_mu, last.log_sigma];
        for (w, v) in worst.iter_mut().zip(vals) {
            if v > w.0 || v.is_nan() {
                *w = (v, format!("{} k={k}", describe(&p, y)));
            }
        }
        trend_ok &= errs[2].energy_sigma <= errs[0].energy_sigma + 1e-12;
    }
    names
        .iter()
        .zip(worst)
        .map(|(name, (err, case))| SuiteRow {
            suite: "taylor_1e4".into(),
            check: name.to_string(),
            cases,
            max_error: err,
            tolerance: ASYMPTOTIC_TOL,
            passed: err <= ASYMPTOTIC_TOL && (name != &"energy_sigma" || trend_ok),
            worst_case: case,
        })
        .collect()
}

/// Expected-score gap `S_h(F, Q) - S_h(Q, Q)` estimated from `draws`
/// samples `y ~ Q`, with its standard error (paired differences).
pub fn expected_score_gap(
    forecast: &MixtureParams,
    truth: &MixtureParams,
    cfg: ScoreConfig,
    draws: usize,
    rng: &mut SeededRng,
) -> (f64, f64) {
    let diffs: Vec<f64> = (0..draws)
        .map(|_| {
            let y = truth.sample_one(rng);
            hybrid_score(forecast, y, cfg) - hybrid_score(truth, y, cfg)
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = pairwise_sum(&diffs) / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One forecast/truth pair of the properness suite.
#[derive(Debug, Clone)]
pub struct PropernessCase {
    pub truth: MixtureParams,
    pub forecast: MixtureParams,
    pub eta: f64,
    /// Mean shift >= 0.5 or std change >= 50% on some component.
    pub large: bool,
}

/// `cases` pairs alternating large and small perturbations of one component
/// of a random truth (`K` in 1..=3).
pub fn properness_cases(seed: u64, cases: usize) -> Vec<PropernessCase> {
    let mut rng = seeded_rng(derive_seed(seed, 400));
    (0..cases)
        .map(|i| {
            let k = rng.random_range(1..=3);
            let q = random_mixture(&mut rng, k, (0.5, 2.0), 3.0);
            let eta = [0.2, 0.5, 0.8][i % 3];
            let large = i % 2 == 0;
            // perturb the heaviest component
            let j = (0..k)
                .max_by(|&a, &b| q.weights()[a].total_cmp(&q.weights()[b]))
                .unwrap();
            let mut means = q.means().to_vec();
            let mut stds = q.stds().to_vec();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            match (large, (i / 2) % 3) {
                (true, 0) => means[j] += sign * rng.random_range(0.5..1.0),
                (true, 1) => stds[j] *= 1.5,
                (true, _) => stds[j] *= 0.5,
                (false, 0) => means[j] += sign * 0.05,
                (false, 1) => stds[j] *= 1.05,
                (false, _) => stds[j] *= 0.95,
            }
            let f = MixtureParams::new(q.weights().to_vec(), means, stds).unwrap();
            PropernessCase {
                truth: q,
                forecast: f,
                eta,
                large,
            }
        })
        .collect()
}

/// Empirical strict properness: the gap is never below `-4 SE`, and exceeds
/// `+4 SE` for every large perturbation.
pub fn properness_suite(seed: u64, cases: usize, draws: usize) -> Vec<SuiteRow> {
    let mut min_z = f64::INFINITY;
    let mut min_large_z = f64::INFINITY;
    let mut worst = String::new();
    let mut worst_large = String::new();
    let mut n_large = 0;
    for (i, c) in properness_cases(seed, cases).iter().enumerate() {
        let mut rng = seeded_rng(derive_seed(seed, 20_000 + i as u64));
        let cfg = ScoreConfig::new(c.eta).unwrap();
        let (gap, se) = expected_score_gap(&c.forecast, &c.truth, cfg, draws, &mut rng);
        let z = gap / se;
        let desc = format!("Q: {} F: {:?}/{:?} eta={}", describe(&c.truth, f64::NAN), c.forecast.means(), c.forecast.stds(), c.eta);
        if z < min_z {
            min_z = z;
            worst = desc.clone();
        }
        if c.large {
            n_large += 1;
            if z < min_large_z {
                min_large_z = z;
                worst_large = desc;
            }
        }
    }
    vec![
        SuiteRow {
            suite: "properness".into(),
            check: "min_gap_over_se".into(),
            cases,
            max_error: -min_z,
            tolerance: 4.0,
            passed: min_z >= -4.0,
            worst_case: worst,
        },
        SuiteRow {
            suite: "properness".into(),
            check: format!("large_perturbation_gap_over_se_{n_large}"),
            cases: n_large,
            max_error: min_large_z,
            tolerance: 4.0,
            passed: n_large == 0 || min_large_z > 4.0,
            worst_case: worst_large,
        },
    ]
}

/// A small random network with weights spread enough to exercise every head.
pub fn random_tiny_network(seed: u64, k: usize) -> NetworkWeights {
    let spec = NetworkSpec {
        input_dim: 2,
        hidden_layers: vec![4],
        activation: Activation::Tanh,
        k_components: k,
        bounds: HeadBounds::default(),
        seed,
    };
    let mut w = init_weights(&spec).expect("valid spec");
    let mut rng = seeded_rng(derive_seed(seed, 1));
    for v in w.values_mut() {
        *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    w
}

/// Mean hybrid loss of a network over a batch.
pub fn network_batch_loss(w: &NetworkWeights, xs: &[Vec<f64>], ys: &[f64], cfg: ScoreConfig) -> f64 {
    let s: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| hybrid_score(&forward(w, x).unwrap().0, y, cfg))
        .collect();
    pairwise_sum(&s) / s.len() as f64
}

/// Analytic weight gradient of [`network_batch_loss`].
pub fn network_batch_grad(w: &NetworkWeights, xs: &[Vec<f64>], ys: &[f64], cfg: ScoreConfig, fault: Fault) -> WeightGradient {
    let mut g = WeightGradient::zeros_like(w);
    let kind = if cfg.eta() == 1.0 {
        ScoreKind::Log
    } else if cfg.eta() == 0.0 {
        ScoreKind::Energy
    } else {
        ScoreKind::Hybrid((cfg.eta() * 10.0).round() as u8)
    };
    for (x, &y) in xs.iter().zip(ys) {
        let (p, trace) = forward(w, x).unwrap();
        let sg = if fault == Fault::None {
            hybrid_score_grad(&p, y, cfg)
        } else {
            kind.grad(&p, y, fault)
        };
        backward_into(w, &trace, &sg, 1.0 / xs.len() as f64, &mut g).unwrap();
    }
    g
}

pub const BACKPROP_REL_TOL: f64 = 1e-4;
pub const BACKPROP_ABS_FLOOR: f64 = 1e-6;

/// End-to-end check of network gradients against central differences of the
/// batch loss (step 1e-5) for `cases` tiny networks and eta in {0, 0.5, 1}.
pub fn backprop_suite(seed: u64, cases: usize, fault: Fault) -> Vec<SuiteRow> {
    [0.0, 0.5, 1.0]
        .iter()
        .map(|&eta| {
            let cfg = ScoreConfig::new(eta).unwrap();
            let mut worst = (0.0, String::new());
            for c in 0..cases {
                let case_seed = derive_seed(seed, 500 + c as u64);
                let mut rng = seeded_rng(case_seed);
                let k = 1 + c % 3;
                let w = random_tiny_network(case_seed, k);
                let xs: Vec<Vec<f64>> = (0..6)
                    .map(|_| (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                    .collect();
                let ys: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let analytic: Vec<f64> = network_batch_grad(&w, &xs, &ys, cfg, fault).values().copied().collect();
                for (i, &a) in analytic.iter().enumerate() {
                    let h = 1e-5;
                    let mut plus = w.clone();
                    *plus.values_mut().nth(i).unwrap() += h;
                    let mut minus = w.clone();
                    *minus.values_mut().nth(i).unwrap() -= h;
                    let fd = (network_batch_loss(&plus, &xs, &ys, cfg) - network_batch_loss(&minus, &xs, &ys, cfg))
                        / (2.0 * h);
                    let e = floored_rel_error(a, fd, BACKPROP_ABS_FLOOR);
                    if e > worst.0 || e.is_nan() {
                        worst = (e, format!("case {c} param {i} analytic {a} fd {fd}"));
                    }
                }
            }
            SuiteRow {
                suite: "backprop".into(),
                check: format!("eta{eta}"),
                cases,
                max_error: worst.0,
                tolerance: BACKPROP_REL_TOL,
                passed: worst.0 <= BACKPROP_REL_TOL,
                worst_case: worst.1,
            }
        })
        .collect()
}

/// Sizes of the sampled suites.
#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub cases: usize,
    pub mc_draws: usize,
    pub properness_draws: usize,
    pub fault: Fault,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 100,
            mc_draws: 200_000,
            properness_draws: 100_000,
            fault: Fault::None,
        }
    }
}

/// Runs every suite.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<VerificationReport> {
    if opts.cases == 0 {
        return Err(Error::Domain("gradcheck needs at least one case".into()));
    }
    let mut rows = gradient_suite(opts.seed, opts.cases, opts.fault);
    rows.push(oracle_suite(opts.seed, opts.cases, opts.mc_draws));
    rows.extend(asymptotic_suite(opts.seed, opts.cases, opts.fault));
    rows.extend(properness_suite(opts.seed, opts.cases.min(50), opts.properness_draws));
    rows.extend(backprop_suite(opts.seed, opts.cases.min(20), opts.fault));
    // responsibilities identity, cheap and exact
    let mut rng = seeded_rng(derive_seed(opts.seed, 600));
    let mut worst: f64 = 0.0;
    for _ in 0..opts.cases {
        let k = rng.random_range(1..=5);
        let p = random_mixture(&mut rng, k, (0.1, 10.0), 5.0);
        let y = rng.random_range(-10.0..10.0);
        let s: f64 = responsibilities(&p, y).iter().zip(p.weights()).map(|(r, w)| r * w).sum();
        worst = worst.max((s - 1.0).abs());
    }
    rows.push(SuiteRow {
        suite: "identity".into(),
        check: "sum_pi_r_equals_one".into(),
        cases: opts.cases,
        max_error: worst,
        tolerance: 1e-12,
        passed: worst <= 1e-12,
        worst_case: String::new(),
    });
    Ok(VerificationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gradcheck_passes() {
        let opts = GradcheckOptions {
            seed: 1,
            cases: 5,
            mc_draws: 20_000,
            properness_draws: 20_000,
            fault: Fault::None,
        };
        let r = run_gradcheck(&opts).unwrap();
        for row in &r.rows {
            assert!(row.passed, "{row:?}");
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        let rows = gradient_suite(1, 5, Fault::FlipEnergySigmaSign);
        assert!(rows.iter().any(|r| !r.passed));
        assert!(asymptotic_suite(1, 3, Fault::FlipEnergySigmaSign).iter().any(|r| !r.passed));
    }

    #[test]
    fn gradcheck_is_deterministic() {
        let opts = GradcheckOptions {
            seed: 4,
            cases: 1,
            mc_draws: 5_000,
            properness_draws: 5_000,
            fault: Fault::None,
        };
        let a = run_gradcheck(&opts).unwrap();
        let b = run_gradcheck(&opts).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
