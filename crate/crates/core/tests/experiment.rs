use std::fs;

use structens_core::dictionary::DictionaryFamily;
use structens_core::experiment::{
    bias_variance_from_replicates, gen_data, gen_test_data, ise, mc_bias_variance, mean_se, noise_variance,
    run_experiment, sign_test, simulate, target_eval, test_mse,
};
use structens_core::{ExperimentConfig, Interval, Scheme, Target, WeightLawSpec};

fn small_config(target: Target, family: DictionaryFamily, replicates: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(target, family);
    c.replicates = replicates;
    c.n_train = 150;
    c.n_test = 300;
    c.ise_grid = 401;
    c.figure_grid = 51;
    c.dictionary.m = 5;
    c
}

#[test]
fn target_examples() {
    assert_eq!(target_eval(Target::Sinc, 0.0), 1.0);
    assert!((target_eval(Target::Sin, 0.25) - 1.0).abs() < 1e-15);
    assert!(target_eval(Target::Sinc, 1.0).abs() < 1e-15);
    // continuity across the series branch
    assert!((target_eval(Target::Sinc, 1e-8) - target_eval(Target::Sinc, 1.1e-8)).abs() < 1e-15);
}

#[test]
fn noise_variance_matches_the_analytic_integral() {
    // ∫₀¹ sin²(2πx) dx = 1/2, mean 0, snr 5
    let c = ExperimentConfig::new(Target::Sin, DictionaryFamily::Poly);
    assert!((noise_variance(&c) - 0.1).abs() < 1e-6);

    // sinc on [−5, 5]: Var = (1/10)∫ sinc² − ((1/10)∫ sinc)², by a fine Simpson oracle
    let c = ExperimentConfig::new(Target::Sinc, DictionaryFamily::Poly);
    let d = Interval::new(-5.0, 5.0).unwrap();
    let n = 200_001;
    let xs = d.linspace(n);
    let h = d.length() / (n - 1) as f64;
    let simpson = |f: &dyn Fn(f64) -> f64| {
        xs.iter().enumerate().map(|(i, &x)| {
            let w = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(x)
        }).sum::<f64>() * h / 3.0
    };
    let m1 = simpson(&|x| target_eval(Target::Sinc, x)) / 10.0;
    let m2 = simpson(&|x| target_eval(Target::Sinc, x).powi(2)) / 10.0;
    assert!((noise_variance(&c) - (m2 - m1 * m1) / 5.0).abs() < 1e-8);
}

#[test]
fn datasets_are_deterministic_and_noiseless_at_infinite_snr() {
    let c = small_config(Target::Sin, DictionaryFamily::Poly, 2);
    assert_eq!(gen_data(&c, 3).unwrap(), gen_data(&c, 3).unwrap());
    assert_ne!(gen_data(&c, 3).unwrap(), gen_data(&c, 4).unwrap());
    assert_ne!(gen_data(&c, 0).unwrap().x(), gen_test_data(&c, 0).unwrap().x());

    let mut c = c;
    c.snr = f64::MAX;
    let d = gen_data(&c, 0).unwrap();
    assert!(d.noise_sd() < 1e-150);
    for (x, y) in d.x().iter().zip(d.y()) {
        assert!((y - target_eval(Target::Sin, *x)).abs() < 1e-140);
    }
}

#[test]
fn test_mse_examples() {
    let mut c = small_config(Target::Sin, DictionaryFamily::Poly, 1);
    c.snr = f64::MAX;
    let t = gen_test_data(&c, 0).unwrap();
    let exact: Vec<f64> = t.x().iter().map(|&x| target_eval(Target::Sin, x)).collect();
    assert_eq!(test_mse(&exact, &t).unwrap(), 0.0);
    let shifted: Vec<f64> = exact.iter().map(|v| v + 1.0).collect();
    assert!((test_mse(&shifted, &t).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn test_mse_noise_floor() {
    let mut c = ExperimentConfig::new(Target::Sin, DictionaryFamily::Poly);
    c.n_test = 1000;
    let t = gen_test_data(&c, 0).unwrap();
    let sq: Vec<f64> = t.x().iter().zip(t.y()).map(|(&x, y)| (y - target_eval(Target::Sin, x)).powi(2)).collect();
    let (_, se) = mean_se(&sq);
    let exact: Vec<f64> = t.x().iter().map(|&x| target_eval(Target::Sin, x)).collect();
    let mse = test_mse(&exact, &t).unwrap();
    assert!((mse - 0.1).abs() <= 3.0 * se.unwrap(), "{mse}");
}

#[test]
fn ise_examples() {
    let f = |x: f64| target_eval(Target::Sin, x);
    let unit = Interval::unit();
    assert_eq!(ise(f, f, unit, 2001).unwrap(), 0.0);
    let d = Interval::new(-5.0, 5.0).unwrap();
    assert!((ise(|x| f(x) + 0.3, f, d, 2001).unwrap() - 0.09 * 10.0).abs() < 1e-10);
    assert!((ise(|x| f(x) + x, f, unit, 2001).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!(ise(f, f, unit, 4).is_err());
}

#[test]
fn shifted_truth_has_vanishing_bias() {
    // predictor f_0 + ε̄ with a fresh noise mean per replicate
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let d = Interval::unit();
    let grid = d.linspace(101);
    let truth: Vec<f64> = grid.iter().map(|&x| target_eval(Target::Sin, x)).collect();
    let noise = Normal::new(0.0, 0.1f64.sqrt()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let r = 200;
    let n = 400;
    let preds: Vec<Vec<f64>> = (0..r)
        .map(|_| {
            let eps = (0..n).map(|_| noise.sample(&mut rng)).sum::<f64>() / n as f64;
            truth.iter().map(|t| t + eps).collect()
        })
        .collect();
    let bv = bias_variance_from_replicates(&preds, &truth, d).unwrap();
    let ise_r: Vec<f64> = preds.iter().map(|p| p.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 101.0).collect();
    let (_, se) = mean_se(&ise_r);
    assert!(bv.integrated_bias_sq <= 3.0 * se.unwrap(), "{} vs {:?}", bv.integrated_bias_sq, se);
    assert!(bv.max_identity_residual <= 1e-12);
}

#[test]
fn identical_replicates_have_zero_variance() {
    let d = Interval::unit();
    let truth = vec![0.0; 11];
    let preds = vec![vec![0.5; 11]; 4];
    let bv = bias_variance_from_replicates(&preds, &truth, d).unwrap();
    assert!(bv.variance_mle.iter().all(|v| *v == 0.0));
    assert!(bv.variance_unbiased.unwrap().iter().all(|v| *v == 0.0));
    assert!((bv.integrated_bias_sq - 0.25).abs() < 1e-12);
    let single = bias_variance_from_replicates(&preds[..1], &truth, d).unwrap();
    assert!(single.variance_unbiased.is_none());
}

#[test]
fn protocol_bias_variance_identity_is_exact() {
    let c = small_config(Target::Sin, DictionaryFamily::Poly, 3);
    let bv = mc_bias_variance(&c, Scheme::Law(WeightLawSpec::Uniform)).unwrap();
    assert!(bv.max_identity_residual <= 1e-12);
    assert!(bv.bias_sq.iter().all(|b| *b >= 0.0));
    assert!(bv.variance_mle.iter().all(|v| *v >= 0.0));
}

#[test]
fn schemes_respect_the_noise_floor_and_optimality() {
    let c = small_config(Target::Sin, DictionaryFamily::Poly, 20);
    let result = simulate(&c).unwrap();
    let sigma_sq = result.sigma_sq;
    for s in &result.schemes {
        let se = s.mse_se.unwrap();
        assert!(s.mse_mean >= sigma_sq - 3.0 * se, "{}: {} < {}", s.label, s.mse_mean, sigma_sq);
        assert!(s.mse_mean.is_finite() && s.ise_mean.is_finite());
        assert!(s.bias_variance.bias_sq.iter().all(|v| *v >= 0.0));
    }
    let obj = |s: Scheme| result.per_replicate(&s, |o| o.risk_objective.unwrap()).unwrap();
    let best = obj(Scheme::OptimalRisk);
    for other in [Scheme::Law(WeightLawSpec::Uniform), Scheme::Law(WeightLawSpec::Fibonacci)] {
        for (a, b) in best.iter().zip(obj(other)) {
            assert!(*a <= b + 1e-6);
        }
    }
}

#[test]
fn sign_test_examples() {
    let t = sign_test(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]);
    assert_eq!((t.wins, t.losses, t.ties), (3, 0, 0));
    assert!((t.p_value - 0.25).abs() < 1e-15);
    let t = sign_test(&[1.0, 2.0], &[1.0, 2.0]);
    assert_eq!(t.ties, 2);
    assert_eq!(t.p_value, 1.0);
}

#[test]
fn run_writes_files_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(Target::Sin, DictionaryFamily::Poly, 3);
    c.output_dir = dir.path().join("a");
    let first = run_experiment(&c).unwrap();
    assert!(first.files.iter().any(|p| p.to_string_lossy().ends_with(".svg")));
    assert!(first.files.iter().any(|p| p.to_string_lossy().ends_with("_summary.csv")));
    let read = |files: &[std::path::PathBuf]| -> Vec<(String, Vec<u8>)> {
        files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect()
    };
    let second = run_experiment(&c).unwrap();
    assert_eq!(read(&first.files), read(&second.files));

    let summary = fs::read_to_string(dir.path().join("a").join(format!("{}_summary.csv", c.config_id))).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "config_id,scheme,replicate,test_mse,ise,weights_json");
    assert!(!summary.contains('\r'));
    let aggregate = fs::read_to_string(dir.path().join("a").join(format!("{}_aggregate.csv", c.config_id))).unwrap();
    assert_eq!(
        aggregate.lines().next().unwrap(),
        "config_id,scheme,mse_mean,mse_se,ise_mean,ise_se,sign_test_vs_uniform_p"
    );
    assert!(dir.path().join("a").join(format!("{}_provenance.json", c.config_id)).exists());
}

#[test]
fn a_single_replicate_leaves_standard_errors_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(Target::Sinc, DictionaryFamily::Poly, 1);
    c.output_dir = dir.path().to_path_buf();
    let result = run_experiment(&c).unwrap();
    assert!(result.schemes.iter().all(|s| s.mse_se.is_none() && s.ise_se.is_none()));
    let aggregate = fs::read_to_string(dir.path().join(format!("{}_aggregate.csv", c.config_id))).unwrap();
    for line in aggregate.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "");
        assert_eq!(cols[5], "");
        assert!(cols.iter().all(|c| !c.contains("NaN") && !c.contains("inf")));
    }
}

#[test]
fn failed_runs_leave_provenance_and_an_error_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(Target::Sin, DictionaryFamily::Spline, 1);
    c.n_train = 10; // too few points for the larger splines
    c.output_dir = dir.path().to_path_buf();
    assert!(run_experiment(&c).is_err());
    assert!(dir.path().join(format!("{}_provenance.json", c.config_id)).exists());
    assert!(dir.path().join(format!("{}_error.txt", c.config_id)).exists());
}
