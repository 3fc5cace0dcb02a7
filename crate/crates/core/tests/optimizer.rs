use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structens_core::optimizer::{
    covariance_of_predictions, dominance_check, empirical_covariance, ensemble_predict, optimal_weights_risk,
    optimal_weights_risk_from_predictions, optimal_weights_variance, risk_objective, sequence_model_risk, sweep_rho,
    SweepTarget,
};
use structens_core::weights::validate_admissible;
use structens_core::{
    make_weights, solve_weights, AdmissibilityConstraints, BasisKind, Dataset, Dictionary, Error, FittedLearner,
    Interval, Orientation, OrthoBasis, QpProblem, SequenceModel, SolveOptions, TargetId, WeightLawSpec,
};

const ORIENTATIONS: [Orientation; 3] = [Orientation::NonIncreasing, Orientation::NonDecreasing, Orientation::None];

fn qp(q: DMatrix<f64>, c: Vec<f64>, ridge: f64, constraints: AdmissibilityConstraints) -> QpProblem {
    QpProblem::new(q, DVector::from_vec(c), ridge, constraints).unwrap()
}

fn random_psd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * &b / m as f64
}

fn monotone_ok(w: &[f64], o: Orientation) -> bool {
    w.windows(2).all(|p| match o {
        Orientation::NonIncreasing => p[0] >= p[1],
        Orientation::NonDecreasing => p[0] <= p[1],
        Orientation::None => true,
    })
}

/// Every point of the simplex lattice with spacing `1/n` in dimension `m`.
fn simplex_lattice(m: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == m - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / n as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(m, left - c, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, n, n, &mut Vec::new(), &mut out);
    out
}

fn learner(coeffs: &[f64]) -> FittedLearner {
    FittedLearner::from_chebyshev(Interval::unit(), coeffs.to_vec()).unwrap()
}

#[test]
fn solver_examples() {
    let opts = SolveOptions::default();
    let (w, d) = solve_weights(&qp(DMatrix::identity(5, 5), vec![0.0; 5], 0.0, AdmissibilityConstraints::simplex()), &opts).unwrap();
    assert!(w.values().iter().all(|v| (v - 0.2).abs() < 1e-6));
    assert!(d.gap <= 1e-8);

    // oracle: minimize a² + 4(1 − a)², derivative zero at a = 4/5
    let (w, _) = solve_weights(
        &qp(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])), vec![0.0; 2], 0.0, AdmissibilityConstraints::simplex()),
        &opts,
    )
    .unwrap();
    assert!((w.values()[0] - 0.8).abs() < 1e-6 && (w.values()[1] - 0.2).abs() < 1e-6);

    let (w, _) = solve_weights(&qp(DMatrix::zeros(4, 4), vec![0.0; 4], 1.0, AdmissibilityConstraints::simplex()), &opts).unwrap();
    assert!(w.values().iter().all(|v| (v - 0.25).abs() < 1e-6));
}

#[test]
fn invalid_problems_are_rejected() {
    let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(
        QpProblem::new(not_psd, DVector::zeros(2), 0.0, AdmissibilityConstraints::simplex()),
        Err(Error::InvalidParameter(_))
    ));
    let tight = AdmissibilityConstraints::simplex().with_l2_bound(0.2).unwrap();
    let p = qp(DMatrix::identity(4, 4), vec![0.0; 4], 0.0, tight);
    assert!(matches!(solve_weights(&p, &SolveOptions::default()), Err(Error::Infeasible(_))));
    let mut unnormalized = AdmissibilityConstraints::simplex();
    unnormalized.require_normalized = false;
    let p = qp(DMatrix::identity(2, 2), vec![0.0; 2], 0.0, unnormalized);
    assert!(matches!(solve_weights(&p, &SolveOptions::default()), Err(Error::InvalidParameter(_))));
}

#[test]
fn solver_agrees_with_exhaustive_lattice_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = SolveOptions::default();
    for m in 1..=4usize {
        let n = [1, 400, 120, 48][m - 1];
        let lattice = simplex_lattice(m, n);
        for _ in 0..4 {
            let q = random_psd(m, &mut rng);
            let c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            for o in ORIENTATIONS {
                let p = qp(q.clone(), c.clone(), 0.01, AdmissibilityConstraints::monotone(o));
                let (w, d) = solve_weights(&p, &opts).unwrap();
                let f = p.objective(w.values()).unwrap();
                let best = lattice
                    .iter()
                    .filter(|v| monotone_ok(v, o))
                    .map(|v| p.objective(v).unwrap())
                    .fold(f64::INFINITY, f64::min);
                // the gap bounds suboptimality, the lattice minimum is ≥ the optimum
                assert!(f - best <= d.gap + 1e-12, "M={m} {o}: {f} vs {best}, gap {}", d.gap);
                // lattice resolution: a Lipschitz bound on the objective over the simplex
                let lip = 2.0 * q.amax() * m as f64 + c.iter().map(|v| v.abs()).sum::<f64>() + 0.02;
                assert!(best - f <= lip * m as f64 / n as f64, "M={m} {o}");
            }
        }
    }
}

#[test]
fn objective_trace_is_nonincreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [3usize, 8, 16] {
        let q = random_psd(m, &mut rng);
        let c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for o in ORIENTATIONS {
            let p = qp(q.clone(), c.clone(), 1e-4, AdmissibilityConstraints::monotone(o));
            let (_, d) = solve_weights(&p, &SolveOptions::default()).unwrap();
            assert!(!d.objective_trace.is_empty());
            for pair in d.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-15 * pair[0].abs().max(1.0), "{o}: {pair:?}");
            }
            assert!(d.active_atoms.iter().all(|&k| (1..=m).contains(&k)));
        }
    }
}

#[test]
fn scaling_the_problem_leaves_the_argmin_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = 6;
    let q = random_psd(m, &mut rng) + DMatrix::identity(m, m) * 0.1;
    let c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    for o in ORIENTATIONS {
        let (w1, _) = solve_weights(&qp(q.clone(), c.clone(), 0.0, AdmissibilityConstraints::monotone(o)), &SolveOptions::default()).unwrap();
        for s in [0.01, 7.0, 1e3] {
            let p = qp(&q * s, c.iter().map(|v| v * s).collect(), 0.0, AdmissibilityConstraints::monotone(o));
            let (w2, _) = solve_weights(&p, &SolveOptions::default()).unwrap();
            // strong convexity turns the gap tolerance into a distance bound
            let dist = w1.values().iter().zip(w2.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dist <= 1e-3, "{o}, scale {s}: {dist}");
        }
    }
}

#[test]
fn l2_bound_is_enforced_and_active() {
    let bound = 0.5;
    let c = AdmissibilityConstraints::simplex().with_l2_bound(bound).unwrap();
    let p = qp(DMatrix::zeros(4, 4), vec![-1.0, 0.0, 0.0, 0.0], 0.0, c);
    let (w, d) = solve_weights(&p, &SolveOptions::default()).unwrap();
    // oracle: maximize a with a² + (1 − a)²/3 = 1/2, i.e. 4a² − 2a − 1/2 = 0
    let a = (2.0 + 12f64.sqrt()) / 8.0;
    assert!((w.values()[0] - a).abs() < 1e-6, "{:?}", w.values());
    assert!(w.l2_norm_sq() <= bound + 1e-12);
    assert!((w.l2_norm_sq() - bound).abs() < 1e-6);
    assert!(d.l2_multiplier.is_some());

    let loose = AdmissibilityConstraints::simplex().with_l2_bound(2.0).unwrap();
    let (w, d) = solve_weights(&qp(DMatrix::zeros(4, 4), vec![-1.0, 0.0, 0.0, 0.0], 0.0, loose), &SolveOptions::default()).unwrap();
    assert!((w.values()[0] - 1.0).abs() < 1e-8);
    assert!(d.l2_multiplier.is_none());

    let exact = AdmissibilityConstraints::simplex().with_l2_bound(0.25).unwrap();
    let (w, _) = solve_weights(&qp(DMatrix::zeros(4, 4), vec![-1.0, 0.0, 0.0, 0.0], 0.0, exact), &SolveOptions::default()).unwrap();
    assert_eq!(w.values(), &[0.25; 4]);
}

#[test]
fn ensemble_prediction_examples() {
    let dict = Dictionary::new(vec![learner(&[0.0]), learner(&[2.0]), learner(&[0.5, 1.0])], "test").unwrap();
    let x = [0.0, 0.25, 1.0];
    let p = ensemble_predict(&dict, &[0.0, 0.0, 1.0], &x).unwrap();
    assert_eq!(p, dict.learners()[2].predict(&x));
    let two = Dictionary::new(vec![learner(&[0.0]), learner(&[2.0])], "test").unwrap();
    assert_eq!(ensemble_predict(&two, &[0.5, 0.5], &[0.3]).unwrap(), vec![1.0]);
    let same = Dictionary::new(vec![learner(&[0.1, 0.7]); 3], "test").unwrap();
    let p = ensemble_predict(&same, &[0.2, 0.5, 0.3], &x).unwrap();
    for (a, b) in p.iter().zip(same.learners()[0].predict(&x)) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(matches!(ensemble_predict(&dict, &[1.0], &x), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn covariance_examples() {
    let h = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
    let cov = covariance_of_predictions(&h).unwrap();
    assert_eq!(cov.sigma, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

    let dict = Dictionary::new(vec![learner(&[0.3, 1.0]), learner(&[4.0]), learner(&[0.3, 1.0])], "test").unwrap();
    let grid = Interval::unit().linspace(17);
    let cov = empirical_covariance(&dict, &grid).unwrap();
    for i in 0..3 {
        assert_eq!(cov.sigma[(1, i)], 0.0);
        assert_eq!(cov.sigma[(i, 1)], 0.0);
    }
    assert_eq!(cov.sigma[(0, 0)], cov.sigma[(0, 2)]);
    assert_eq!(cov.sigma[(0, 0)], cov.sigma[(2, 2)]);
    assert!(matches!(empirical_covariance(&dict, &[0.5]), Err(Error::InsufficientPoints { .. })));
}

#[test]
fn variance_weight_examples() {
    let opts = SolveOptions::default();
    // two uncorrelated, equal-variance prediction vectors
    let h = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
    let cov = covariance_of_predictions(&h).unwrap();
    let (w, _) = solve_weights(&QpProblem::variance(&cov, 0.0, AdmissibilityConstraints::simplex()).unwrap(), &opts).unwrap();
    assert!((w.values()[0] - 0.5).abs() < 1e-6);

    let dict = Dictionary::new(vec![learner(&[0.0, 1.0]), learner(&[3.0]), learner(&[0.0, 0.0, 1.0])], "test").unwrap();
    let grid = Interval::unit().linspace(50);
    let (w, _) = optimal_weights_variance(&dict, &grid, 0.0, AdmissibilityConstraints::simplex(), &opts).unwrap();
    assert!((w.values()[1] - 1.0).abs() < 1e-6, "{:?}", w.values());

    let cov = empirical_covariance(&dict, &grid).unwrap();
    let norm = cov.sigma.norm();
    let (w, _) = optimal_weights_variance(&dict, &grid, 1e6 * norm, AdmissibilityConstraints::simplex(), &opts).unwrap();
    assert!(w.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-6));
}

#[test]
fn risk_weight_examples() {
    let opts = SolveOptions::default();
    let x = Interval::unit().linspace(30);
    let h2 = learner(&[0.2, -1.0, 0.4]);
    let y = h2.predict(&x);
    let data = Dataset::new(x.clone(), y.clone(), Interval::unit(), 0.0, TargetId::Custom).unwrap();

    let single = Dictionary::new(vec![learner(&[0.3])], "single").unwrap();
    let sol = optimal_weights_risk(&single, &data, 0.0, AdmissibilityConstraints::simplex(), &opts).unwrap();
    assert_eq!(sol.weights.values(), &[1.0]);

    let dict = Dictionary::new(vec![learner(&[0.0, 1.0]), h2, learner(&[1.0, 0.0, 0.0, 1.0])], "test").unwrap();
    let sol = optimal_weights_risk(&dict, &data, 0.0, AdmissibilityConstraints::simplex(), &opts).unwrap();
    assert!((sol.weights.values()[1] - 1.0).abs() < 1e-6, "{:?}", sol.weights.values());
    assert!(sol.objective < 1e-8);

    let h = dict.predict_matrix(&x);
    let noisy: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + 0.3 * ((i * 7 % 5) as f64 - 2.0)).collect();
    for o in ORIENTATIONS {
        let sol = optimal_weights_risk_from_predictions(&h, &noisy, 1e-3, AdmissibilityConstraints::monotone(o), &opts).unwrap();
        for spec in [WeightLawSpec::Uniform, WeightLawSpec::Fibonacci] {
            let w = make_weights(spec, 3).unwrap();
            if validate_admissible(w.values(), &AdmissibilityConstraints::monotone(o)).passed() {
                assert!(sol.objective <= risk_objective(&h, &noisy, w.values(), 1e-3).unwrap() + 1e-6);
            }
        }
    }
}

#[test]
fn dominance_example_flags_c2_while_risk_improves() {
    let d = Interval::unit();
    let phi1 = learner(&[1.0]);
    let phi2 = learner(&[0.0, 3f64.sqrt()]);
    let dict = Dictionary::new(vec![phi1, phi2], "exact modes").unwrap();
    let basis = OrthoBasis::new(BasisKind::Legendre, 4, d).unwrap();
    let report = dominance_check(std::slice::from_ref(&dict), &[1.0, 0.0], |_| 1.0, &basis).unwrap();
    let bias = report.rows.iter().find(|r| r.condition == "C1" && r.interpretation == "point_bias").unwrap();
    // hand computation (w₁ − 1)² + w₂²
    assert!(bias.lhs.abs() < 1e-10);
    assert!((bias.rhs - 0.5).abs() < 1e-10);
    assert!(report.c1_point_bias);
    assert!(!report.c2);
    assert!(report.risk_improves);
    let csv = report.to_csv();
    assert!(csv.starts_with("condition,interpretation,lhs,rhs,holds\n"));
    assert!(csv.lines().any(|l| l.starts_with("C2,") && l.ends_with(",false")));

    let same = dominance_check(&[dict], &[0.5, 0.5], |_| 1.0, &basis).unwrap();
    assert!(!same.c1_point_bias && !same.c1_support && !same.risk_improves);
}

#[test]
fn noiseless_risk_equals_point_bias() {
    // f* in the span of three learners; noiseless so risk equals point bias.
    // On the simplex ‖w‖² ≥ 1/M with equality only at uniform, so C2 fails
    // for every other w.
    let d = Interval::unit();
    let dict = Dictionary::new(vec![learner(&[1.0, 0.0]), learner(&[0.0, 1.0]), learner(&[0.5, 0.5, 1.0])], "span").unwrap();
    let basis = OrthoBasis::new(BasisKind::Legendre, 6, d).unwrap();
    let f = |x: f64| 0.5 + 0.2 * d.to_symmetric(x);
    let w = [0.5, 0.2, 0.3];
    let report = dominance_check(std::slice::from_ref(&dict), &w, f, &basis).unwrap();
    let bias = report.rows.iter().find(|r| r.condition == "C1" && r.interpretation == "point_bias").unwrap();
    assert!(bias.lhs < bias.rhs);
    assert!(!report.c2);
    assert!(report.risk_improves);
    let risk = report.rows.iter().find(|r| r.condition == "risk").unwrap();
    assert!((risk.lhs - bias.lhs).abs() < 1e-12 && (risk.rhs - bias.rhs).abs() < 1e-12);
}

/// Closed-form sequence-model risk written out term by term.
fn sequence_oracle(model: &SequenceModel, w: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    for k in 1..=model.k {
        let theta = model.c * (k as f64).powf(-model.alpha);
        let tail: f64 = (k..=model.m).map(|m| w[m - 1]).sum();
        a += (theta * tail - theta).powi(2);
    }
    let v = model.tau * model.tau * (1..=model.m).map(|m| m as f64 * w[m - 1] * w[m - 1]).sum::<f64>();
    (a, v)
}

#[test]
fn sequence_risk_examples() {
    let model = SequenceModel::new(1.0, 1.0, 2, 2, 0.0).unwrap();
    let r = sequence_model_risk(&model, &[0.5, 0.5]).unwrap();
    assert!((r.approximation - 1.0 / 16.0).abs() < 1e-15);
    assert_eq!(r.variance, 0.0);

    let model = SequenceModel::new(1.5, 2.0, 6, 6, 0.0).unwrap();
    let r = sequence_model_risk(&model, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(r.total, 0.0);

    let model = SequenceModel::new(1.0, 1.0, 5, 9, 0.3).unwrap();
    let r = sequence_model_risk(&model, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert!((r.variance - 0.09 * 5.0).abs() < 1e-15);
    let tail: f64 = (6..=9).map(|k| (k as f64).powi(-2)).sum();
    assert!((r.approximation - tail).abs() < 1e-15);

    assert!(matches!(SequenceModel::new(0.4, 1.0, 2, 2, 0.0), Err(Error::Range(_))));
    assert!(SequenceModel::new(1.0, 1.0, 4, 2, 0.0).is_err());
}

#[test]
fn sequence_risk_matches_monte_carlo_coefficients() {
    let model = SequenceModel::new(1.0, 1.0, 6, 12, 0.2).unwrap();
    let w = make_weights(WeightLawSpec::geometric(1.3).unwrap(), 6).unwrap();
    let theta = model.theta();
    let draws = 40_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let losses: Vec<f64> = (0..draws)
        .map(|_| {
            let a = model.sample_coefficients(&mut rng);
            let b = a.transpose() * DVector::from_column_slice(w.values());
            b.iter().zip(&theta).map(|(bk, t)| (bk - t).powi(2)).sum()
        })
        .collect();
    let mean = losses.iter().sum::<f64>() / draws as f64;
    let sd = (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let se = sd / (draws as f64).sqrt();
    let r = sequence_model_risk(&model, w.values()).unwrap();
    assert!((mean - r.total).abs() <= 4.0 * se, "{mean} vs {} (se {se})", r.total);
}

fn rho_grid() -> Vec<f64> {
    (0..60).map(|i| 1.05 + 0.05 * i as f64).collect()
}

#[test]
fn noiseless_sweep_decreases_to_the_right_end() {
    let model = SequenceModel::new(1.0, 1.0, 32, 64, 0.0).unwrap();
    let grid = rho_grid();
    let table = sweep_rho(&SweepTarget::Model(model), &grid).unwrap();
    for pair in table.rows.windows(2) {
        assert!(pair[1].risk_total <= pair[0].risk_total);
    }
    assert_eq!(table.argmin, grid.len() - 1);
    for row in &table.rows {
        let w = make_weights(WeightLawSpec::geometric(row.rho).unwrap(), 32).unwrap();
        let (a, v) = sequence_oracle(&model, w.values());
        assert!((row.risk_a - a).abs() < 1e-12 && (row.risk_v - v).abs() < 1e-15);
    }
}

#[test]
fn noisy_sweep_turns_before_the_right_end() {
    let model = SequenceModel::new(1.0, 1.0, 32, 64, 1.0).unwrap();
    let grid = rho_grid();
    let table = sweep_rho(&SweepTarget::Model(model), &grid).unwrap();
    assert!(table.argmin < grid.len() - 1);
    // exhaustive evaluation is the oracle
    let best = grid
        .iter()
        .map(|&r| {
            let (a, v) = sequence_oracle(&model, make_weights(WeightLawSpec::geometric(r).unwrap(), 32).unwrap().values());
            a + v
        })
        .fold(f64::INFINITY, f64::min);
    assert!((table.min_risk() - best).abs() < 1e-12);
    assert!(table.to_csv().starts_with("rho,risk_A,risk_V,risk_total\n"));
}

#[test]
fn geometric_risk_tends_to_uniform_risk() {
    let model = SequenceModel::new(1.0, 1.0, 32, 64, 0.05).unwrap();
    let table = sweep_rho(&SweepTarget::Model(model), &[1.0 + 1e-9]).unwrap();
    let uniform = sequence_model_risk(&model, &[1.0 / 32.0; 32]).unwrap();
    assert!((table.rows[0].risk_total - uniform.total).abs() < 1e-6);
    assert!(sweep_rho(&SweepTarget::Model(model), &[]).is_err());
    assert!(sweep_rho(&SweepTarget::Model(model), &[-1.0]).is_err());
}

#[test]
fn some_geometric_rate_beats_uniform() {
    for tau in [0.0, 0.01, 0.05] {
        let model = SequenceModel::new(1.0, 1.0, 32, 64, tau).unwrap();
        let table = sweep_rho(&SweepTarget::Model(model), &rho_grid()).unwrap();
        let uniform = sequence_model_risk(&model, &[1.0 / 32.0; 32]).unwrap().total;
        assert!(table.min_risk() < uniform, "tau = {tau}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_are_admissible(seed in 0u64..10_000, m in 1usize..10, o in 0usize..3, ridge in 0.0f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_psd(m, &mut rng);
        let c: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let constraints = AdmissibilityConstraints::monotone(ORIENTATIONS[o]);
        let p = qp(q, c, ridge, constraints);
        let (w, d) = solve_weights(&p, &SolveOptions::default()).unwrap();
        prop_assert!(validate_admissible(w.values(), &constraints).passed());
        prop_assert!(d.gap <= 1e-8);
        let uniform = vec![1.0 / m as f64; m];
        prop_assert!(p.objective(w.values()).unwrap() <= p.objective(&uniform).unwrap() + 1e-8);
    }
}
