//! Generators, CSV handling, splits and evaluation metrics.

use energymix::datasets::{load_csv, save_csv, split_and_standardize, LabeledDataset, TargetColumn, ToyExample};
use energymix::metrics::{component_recovery_error, interval_metrics, predictive_nll};
use energymix::mixture::MixtureParams;
use energymix::rng::seeded_rng;
use rand::Rng;

fn sample_mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn example2_conditional_moments_at_two() {
    let mut rng = seeded_rng(1);
    let ys: Vec<f64> = (0..10_000_000).map(|_| ToyExample::Ex2.draw_y(2.0, &mut rng)).collect();
    let (mean, var) = sample_mean_var(&ys);
    // 0.7 * 8 - 0.3 * 8 and 9 + 64 - 3.2^2
    assert!((mean - 3.2).abs() < 0.01, "{mean}");
    assert!((var - 62.76).abs() < 0.2, "{var}");
    let m = ToyExample::Ex2.truth(2.0).moments();
    assert!((m.mean - 3.2).abs() < 1e-12 && (m.variance - 62.76).abs() < 1e-10);
}

#[test]
fn example1_conditional_moments() {
    let mut rng = seeded_rng(2);
    for x in [-1.0, 3.0, 10.0] {
        let ys: Vec<f64> = (0..1_000_000).map(|_| ToyExample::Ex1.draw_y(x, &mut rng)).collect();
        let (mean, var) = sample_mean_var(&ys);
        let true_var = 0.09 * (x * x + 1.0);
        assert!((mean - x * x.sin()).abs() < 5.0 * (true_var / 1e6).sqrt());
        assert!((var - true_var).abs() < 0.01 * true_var);
        let m = ToyExample::Ex1.truth(x).moments();
        assert!((m.variance - true_var).abs() < 1e-12);
    }
}

#[test]
fn generated_sizes_and_inputs() {
    for ex in [ToyExample::Ex1, ToyExample::Ex2] {
        let d = ex.generate(600, 3).unwrap();
        let s = d.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (600, 120, 300));
        let (lo, hi) = ex.x_range();
        assert!(d.features.iter().all(|r| r[0] >= lo && r[0] < hi));
        assert_eq!(d, ex.generate(600, 3).unwrap());
        assert_ne!(d.targets, ex.generate(600, 4).unwrap().targets);
    }
}

#[test]
fn split_partitions_rows_without_leakage() {
    let n = 1001;
    let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let ys: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
    let data = split_and_standardize(LabeledDataset::new(xs, ys).unwrap(), (0.8, 0.1, 0.1), 9).unwrap();
    let s = data.split().unwrap().clone();
    assert_eq!(s.train.len(), 801);
    assert_eq!(s.val.len(), 100);
    assert_eq!(s.test.len(), 100);
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..n).collect::<Vec<_>>());

    // statistics come from the training rows only
    let st = data.standardization().unwrap();
    let train_y: Vec<f64> = s.train.iter().map(|&i| data.targets[i]).collect();
    let (mean, _) = sample_mean_var(&train_y);
    assert!((st.target_mean - mean).abs() < 1e-9);
    let (_, ty) = data.standardized_rows(&s.train).unwrap();
    let (m, _) = sample_mean_var(&ty);
    assert!(m.abs() < 1e-9);
}

#[test]
fn csv_round_trip_preserves_values() {
    let data = ToyExample::Ex2.generate(50, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_csv(&data, &path).unwrap();
    let back = load_csv(&path, &"y".parse::<TargetColumn>().unwrap(), true).unwrap();
    assert_eq!(back.features, data.features);
    assert_eq!(back.targets, data.targets);
}

#[test]
fn csv_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x,y\n1,2\n3,oops\n").unwrap();
    assert!(load_csv(&path, &"y".parse::<TargetColumn>().unwrap(), true).is_err());
    std::fs::write(&path, "x,y\n1,2\n").unwrap();
    assert!(load_csv(&path, &"z".parse::<TargetColumn>().unwrap(), true).is_err());
    assert!(load_csv(&dir.path().join("missing.csv"), &TargetColumn::Index(0), true).is_err());
}

#[test]
fn self_calibrated_coverage() {
    let mut rng = seeded_rng(4);
    let n = 100_000;
    let params: Vec<MixtureParams> = (0..n)
        .map(|_| {
            let a: f64 = rng.random_range(0.1..0.9);
            MixtureParams::new(
                vec![a, 1.0 - a],
                vec![rng.random_range(-3.0..0.0), rng.random_range(0.0..3.0)],
                vec![rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)],
            )
            .unwrap()
        })
        .collect();
    let ys: Vec<f64> = params.iter().map(|p| p.sample_one(&mut rng)).collect();
    let m = interval_metrics(&params, &ys, 0.95).unwrap();
    assert!((m.picp - 0.95).abs() < 0.01, "{}", m.picp);
    let wider = interval_metrics(&params, &ys, 0.99).unwrap();
    assert!(wider.picp >= m.picp && wider.mpiw > m.mpiw);
}

#[test]
fn nll_shifts_by_log_scale() {
    let params = vec![
        MixtureParams::new(vec![0.4, 0.6], vec![-1.0, 1.0], vec![0.5, 2.0]).unwrap(),
        MixtureParams::gaussian(3.0, 0.7).unwrap(),
    ];
    let ys = [0.2, 2.5];
    let c = 7.5;
    let scaled: Vec<MixtureParams> = params.iter().map(|p| p.affine(c, 0.0).unwrap()).collect();
    let ys_scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
    let base = predictive_nll(&params, &ys).unwrap();
    assert!((predictive_nll(&scaled, &ys_scaled).unwrap() - base - c.ln()).abs() < 1e-12);
}

#[test]
fn component_recovery_is_label_invariant() {
    let truth: Vec<MixtureParams> = (0..20).map(|i| ToyExample::Ex2.truth(-4.0 + 0.4 * i as f64)).collect();
    let fitted: Vec<MixtureParams> = truth.iter().map(|p| p.permuted(&[1, 0])).collect();
    let e = component_recovery_error(&fitted, &truth).unwrap();
    assert_eq!((e.pi_rmse, e.mu_rmse, e.sigma_rmse), (0.0, 0.0, 0.0));
    assert_eq!(e.permutation, vec![1, 0]);
}
