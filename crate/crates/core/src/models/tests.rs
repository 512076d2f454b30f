use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::config_space::ConfigSpace;
use crate::workload::{generate_workload, Plant, Workload};

fn frozen_model(d: usize, p0: f64, lambda: f64) -> LinearModel {
    LinearModel::with_state(vec![0.0; d + 1], Normalizer::frozen_identity(d), p0, lambda)
}

fn characterize(ws: &[Workload], stride: usize) -> Vec<EpochObservation> {
    let space = ConfigSpace::default();
    let mut out = Vec::new();
    for w in ws {
        for e in (0..w.n_epochs()).step_by(stride) {
            for c in space.enumerate() {
                out.push(w.execute(e, &c).unwrap());
            }
        }
    }
    out
}

#[test]
fn zero_model_predicts_zero_and_clamps_time() {
    let m = LinearModel::zeros(3);
    assert_eq!(m.predict(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    let models = Models::untrained(FeatureBuilder::default());
    let w = generate_workload("mixed", 1, 1).unwrap();
    let c = ConfigSpace::default().from_index(100);
    let o = w.execute(0, &c).unwrap();
    assert_eq!(models.predict_time(&o.counters, &c, &c).unwrap(), DEFAULT_TIME_FLOOR);
    assert_eq!(models.predict_power_at(&o.counters, &c, &c, 1.0).unwrap(), 0.0);
}

#[test]
fn dimension_mismatch_and_non_finite_inputs() {
    let m = LinearModel::zeros(3);
    assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::Domain(_))));
    assert!(matches!(m.predict(&[1.0, f64::NAN, 2.0]), Err(Error::Numeric(_))));
}

#[test]
fn rls_recovers_linear_target_after_d_samples() {
    let d = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth: Vec<f64> = (0..=d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let f = |x: &[f64]| truth[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + truth[d];
    let mut m = frozen_model(d, 1e12, 1.0);
    for _ in 0..=d {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.rls_update(&x, f(&x)).unwrap();
    }
    for _ in 0..20 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((m.predict(&x).unwrap() - f(&x)).abs() < 1e-6);
    }
}

#[test]
fn zero_innovation_leaves_theta_unchanged() {
    let mut m = frozen_model(2, 1e3, 0.99);
    m.theta = vec![0.5, -1.0, 2.0];
    let x = [0.3, 0.7];
    let y = m.predict(&x).unwrap();
    let before = m.theta.clone();
    m.rls_update(&x, y).unwrap();
    assert_eq!(m.theta, before);
}

#[test]
fn non_finite_update_is_skipped() {
    let mut m = frozen_model(2, 1e3, 0.99);
    let before = m.clone();
    assert!(m.rls_update(&[1.0, f64::INFINITY], 1.0).is_err());
    assert!(m.rls_update(&[1.0, 1.0], f64::NAN).is_err());
    assert!(m.rls_update(&[1e200, 1e200], 1e200).is_err());
    assert_eq!(m, before);
}

#[test]
fn rls_pass_matches_batch_least_squares() {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] - 2.0 * r[1] + 0.5 * r[3] + 1.0 + rng.gen_range(-0.1..0.1)).collect();

    // Independent oracle: normal equations on [x, 1].
    let x = DMatrix::from_fn(50, d + 1, |i, j| if j < d { rows[i][j] } else { 1.0 });
    let batch = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * DVector::from_column_slice(&y)));

    let mut m = frozen_model(d, 1e6, 1.0);
    for (r, t) in rows.iter().zip(&y) {
        m.rls_update(r, *t).unwrap();
    }
    for (a, b) in m.theta.iter().zip(batch.iter()) {
        assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn covariance_stays_symmetric() {
    let d = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = frozen_model(d, 1e3, 0.99);
    for _ in 0..100_000 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = x.iter().sum::<f64>() + rng.gen_range(-0.01..0.01);
        m.rls_update(&x, y).unwrap();
    }
    let p = m.covariance_matrix();
    assert!((&p - p.transpose()).amax() <= 1e-9);
}

#[test]
fn exact_linear_data_fits_with_tiny_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 0.25 * r[1] - r[2] + 40.0).collect();
    let (m, ridge) = fit_linear(&rows, &y).unwrap();
    assert!(!ridge);
    for (r, t) in rows.iter().zip(&y) {
        assert!((m.predict(r).unwrap() - t).abs() < 1e-8 * t.abs());
    }
}

#[test]
fn underdetermined_fit_takes_ridge_path() {
    let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]];
    let (_, ridge) = fit_linear(&rows, &[1.0, 2.0]).unwrap();
    assert!(ridge);
    let collinear: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert!(fit_linear(&collinear, &y).unwrap().1);
}

#[test]
fn offline_fit_on_plant_is_accurate_in_and_across_configs() {
    let ws: Vec<Workload> = ["compute-bound", "memory-bound", "mixed"]
        .iter()
        .enumerate()
        .map(|(i, p)| generate_workload(p, 60, 100 + i as u64).unwrap())
        .collect();
    let obs = characterize(&ws, 6);
    let fit = fit_offline(&obs, &FeatureBuilder::default()).unwrap();
    assert!(!fit.ridge_used);
    let m = &fit.models;
    for o in obs.iter().step_by(97) {
        let t = m.predict_time(&o.counters, &o.config, &o.config).unwrap();
        let p = m.predict_power_at(&o.counters, &o.config, &o.config, o.exec_time).unwrap();
        assert!((t / o.exec_time - 1.0).abs() < 0.05);
        assert!((p / o.power - 1.0).abs() < 0.05);
    }
    let space = ConfigSpace::default();
    let w = &ws[2];
    let from = space.from_index(222);
    let seen = w.execute(3, &from).unwrap();
    let mut err = 0.0;
    for c in space.enumerate() {
        let truth = w.execute(3, &c).unwrap();
        let (p, _) = m.estimate(&seen.counters, &from, &c).unwrap();
        err += (p / truth.power - 1.0).abs();
    }
    assert!(err / space.len() as f64 <= 0.10);
}

#[test]
fn candidate_order_does_not_change_predictions() {
    let w = generate_workload("mixed", 3, 21).unwrap();
    let obs = characterize(std::slice::from_ref(&w), 1);
    let m = fit_offline(&obs, &FeatureBuilder::default()).unwrap().models;
    let space = ConfigSpace::default();
    let at = space.from_index(300);
    let h = w.execute(1, &at).unwrap().counters;
    let fwd: Vec<_> = space.enumerate().iter().map(|c| m.estimate(&h, &at, c).unwrap()).collect();
    let mut rev: Vec<_> = space.enumerate().iter().rev().map(|c| m.estimate(&h, &at, c).unwrap()).collect();
    rev.reverse();
    assert_eq!(fwd, rev);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = LinearModel::zeros(5);
    for _ in 0..30 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0) / 3.0).collect();
        m.rls_update(&x, rng.gen()).unwrap();
    }
    let back = LinearModel::from_json(&m.to_json()).unwrap();
    for (a, b) in m.theta.iter().zip(&back.theta) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back, m);
    let models = Models::untrained(FeatureBuilder::default());
    assert_eq!(Models::from_json(&models.to_json()).unwrap(), models);
    assert!(LinearModel::from_json("{\"version\":9,\"model\":null}").is_err());
}
