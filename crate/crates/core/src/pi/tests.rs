use super::*;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut ChaCha8Rng, scale: f64) -> NetworkPair {
    let mut p = NetworkPair::zeros();
    p.controller.weights = ControllerMatrix::from_fn(|_, _| rng.random_range(-scale..scale));
    p.controller.bias = MotorArray::from_fn(|_, _| rng.random_range(-0.5..0.5));
    p.predictor.weights = ModelMatrix::from_fn(|_, _| rng.random_range(-scale..scale));
    p.predictor.bias = SensorArray::from_fn(|_, _| rng.random_range(-0.5..0.5));
    p
}

fn random_sensor(rng: &mut ChaCha8Rng) -> SensorVector {
    SensorVector::clamped(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn scalar_controller(pair: &NetworkPair, x: &[f64; 5]) -> [f64; 2] {
    let mut y = [0.0; 2];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = pair.controller.bias[i];
        for (j, xj) in x.iter().enumerate() {
            acc += pair.controller.weights[(i, j)] * xj;
        }
        *out = acc.tanh();
    }
    y
}

#[test]
fn zero_controller_gives_zero_motors() {
    let y = controller_step(&NetworkPair::zeros().controller, &SensorVector::clamped([0.3, -0.2, 1.0, 0.5, -1.0])).unwrap();
    assert_eq!(y, MotorVector::default());
}

#[test]
fn saturated_bias_stays_below_one() {
    let mut net = NetworkPair::zeros().controller;
    net.bias = MotorArray::new(5.0, 5.0);
    let y = controller_step(&net, &SensorVector::ZERO).unwrap();
    assert!(y.speed_cmd > 0.9999 && y.speed_cmd < 1.0);
    assert!(y.heading_rate_cmd > 0.9999 && y.heading_rate_cmd < 1.0);
}

#[test]
fn controller_and_predictor_match_scalar_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let pair = random_pair(&mut rng, 2.0);
        let x = random_sensor(&mut rng);
        let y = controller_step(&pair.controller, &x).unwrap();
        let want = scalar_controller(&pair, &x.to_array());
        assert!((y.speed_cmd - want[0]).abs() < 1e-12);
        assert!((y.heading_rate_cmd - want[1]).abs() < 1e-12);

        let pred = predict(&pair.predictor, &y).unwrap();
        for i in 0..5 {
            let mut acc = pair.predictor.bias[i];
            acc += pair.predictor.weights[(i, 0)] * want[0];
            acc += pair.predictor.weights[(i, 1)] * want[1];
            assert!((pred[i] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn bias_absorbs_constant_observation() {
    let mut pair = NetworkPair::zeros();
    let x = SensorVector::clamped([0.1, -0.4, 0.2, 0.0, 0.9]);
    pair.predictor.bias = x.to_vector();
    let y = controller_step(&pair.controller, &x).unwrap();
    let err = x.to_vector() - predict(&pair.predictor, &y).unwrap();
    assert_eq!(err.norm_squared(), 0.0);
}

#[test]
fn zero_jacobian_has_zero_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pair = random_pair(&mut rng, 1.0);
    pair.controller.weights = ControllerMatrix::zeros();
    let j = pi_objective(&pair, &random_sensor(&mut rng), &LearningConfig::default()).unwrap();
    assert!(j.abs() < 1e-12, "{j}");
}

fn eigen_oracle(pair: &NetworkPair, x: &SensorVector, sigma2: f64) -> f64 {
    let y = scalar_controller(pair, &x.to_array());
    let mut l = SquareSensor::zeros();
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..2 {
                l[(i, j)] += pair.predictor.weights[(i, k)] * (1.0 - y[k] * y[k]) * pair.controller.weights[(k, j)];
            }
        }
    }
    let eig = SymmetricEigen::new(l * l.transpose());
    eig.eigenvalues.iter().map(|lam| 0.5 * (1.0 + lam.max(0.0) / sigma2).ln()).sum()
}

#[test]
fn objective_matches_eigenvalue_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = LearningConfig::default();
    for _ in 0..100 {
        let pair = random_pair(&mut rng, 1.5);
        let x = random_sensor(&mut rng);
        let j = pi_objective(&pair, &x, &cfg).unwrap();
        let oracle = eigen_oracle(&pair, &x, cfg.noise_variance);
        assert!((j - oracle).abs() < 1e-9, "{j} vs {oracle}");
    }
}

#[test]
fn objective_invariant_under_orthogonal_model_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = LearningConfig::default();
    for _ in 0..20 {
        let pair = random_pair(&mut rng, 1.0);
        let x = random_sensor(&mut rng);
        let raw = SquareSensor::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        let mut rotated = pair;
        rotated.predictor.weights = q * pair.predictor.weights;
        let a = pi_objective(&pair, &x, &cfg).unwrap();
        let b = pi_objective(&rotated, &x, &cfg).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

fn finite_difference(pair: &NetworkPair, x: &SensorVector, cfg: &LearningConfig, h: f64) -> (ControllerMatrix, MotorArray) {
    let j = |p: &NetworkPair| pi_objective(p, x, cfg).unwrap();
    let mut gc = ControllerMatrix::zeros();
    for idx in 0..gc.len() {
        let mut plus = *pair;
        let mut minus = *pair;
        plus.controller.weights[idx] += h;
        minus.controller.weights[idx] -= h;
        gc[idx] = (j(&plus) - j(&minus)) / (2.0 * h);
    }
    let mut gh = MotorArray::zeros();
    for idx in 0..2 {
        let mut plus = *pair;
        let mut minus = *pair;
        plus.controller.bias[idx] += h;
        minus.controller.bias[idx] -= h;
        gh[idx] = (j(&plus) - j(&minus)) / (2.0 * h);
    }
    (gc, gh)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = LearningConfig::default();
    for _ in 0..100 {
        let pair = random_pair(&mut rng, 1.0);
        let x = random_sensor(&mut rng);
        let (gc, gh) = objective_gradient(&pair, &x, &cfg).unwrap();
        let (fc, fh) = finite_difference(&pair, &x, &cfg, 1e-5);
        let err = ((gc - fc).norm_squared() + (gh - fh).norm_squared()).sqrt();
        let scale = (fc.norm_squared() + fh.norm_squared()).sqrt().max(1e-8);
        assert!(err / scale < 1e-4, "relative error {}", err / scale);
    }
}

#[test]
fn zero_rates_leave_networks_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pair = random_pair(&mut rng, 1.0);
    let cfg = LearningConfig {
        eps_controller: 0.0,
        eps_model: 0.0,
        ..LearningConfig::default()
    };
    let (next, diag) = update_step(&pair, &random_sensor(&mut rng), &random_sensor(&mut rng), &cfg).unwrap();
    assert_eq!(snapshot(&next), snapshot(&pair));
    assert!(diag.prediction_error_sq > 0.0);
}

#[test]
fn frozen_mode_populates_diagnostics_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pair = random_pair(&mut rng, 1.0);
    let cfg = LearningConfig::default().frozen();
    let (next, diag) = update_step(&pair, &random_sensor(&mut rng), &random_sensor(&mut rng), &cfg).unwrap();
    assert_eq!(snapshot(&next), snapshot(&pair));
    assert!(diag.pi_value > 0.0);
    assert!(diag.controller_grad_norm > 0.0);
}

#[test]
fn repeated_transition_reduces_prediction_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pair = random_pair(&mut rng, 1.0);
    let cfg = LearningConfig {
        eps_controller: 0.0,
        eps_model: 0.05,
        ..LearningConfig::default()
    };
    let x_t = random_sensor(&mut rng);
    let x_next = random_sensor(&mut rng);
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let (next, diag) = update_step(&pair, &x_t, &x_next, &cfg).unwrap();
        assert!(diag.prediction_error_sq < last);
        last = diag.prediction_error_sq;
        pair = next;
    }
}

#[test]
fn updates_respect_weight_clip() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut pair = random_pair(&mut rng, 1.0);
    let cfg = LearningConfig {
        eps_controller: 50.0,
        eps_model: 50.0,
        weight_clip: 2.0,
        ..LearningConfig::default()
    };
    for _ in 0..200 {
        let (next, _) = update_step(&pair, &random_sensor(&mut rng), &random_sensor(&mut rng), &cfg).unwrap();
        assert!(next.max_abs_weight() <= 2.0);
        pair = next;
    }
    assert_eq!(pair.step_count, 200);
}

#[test]
fn update_trajectory_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pair = NetworkPair::random_init(&mut rng, 0.1);
        for _ in 0..500 {
            let (next, _) = update_step(&pair, &random_sensor(&mut rng), &random_sensor(&mut rng), &LearningConfig::default()).unwrap();
            pair = next;
        }
        snapshot(&pair)
    };
    assert_eq!(run(), run());
}

#[test]
fn invalid_noise_variance_rejected() {
    let cfg = LearningConfig {
        noise_variance: 0.0,
        ..LearningConfig::default()
    };
    assert!(pi_objective(&NetworkPair::zeros(), &SensorVector::ZERO, &cfg).is_err());
}

#[test]
fn snapshot_round_trip_of_fresh_pair() {
    let p = NetworkPair::zeros();
    assert_eq!(restore(&snapshot(&p)).unwrap(), p);
}

#[test]
fn truncated_snapshot_reports_offset() {
    let bytes = snapshot(&NetworkPair::zeros());
    match restore(&bytes[..bytes.len() - 3]) {
        Err(PiError::Decode { offset, .. }) => assert_eq!(offset, bytes.len() - 8),
        other => panic!("expected decode error, got {other:?}"),
    }
    assert!(matches!(restore(b"PINX"), Err(PiError::Decode { offset: 0, .. })));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(restore(&extra).is_err());
}

#[test]
fn snapshot_layout_is_row_major() {
    let mut p = NetworkPair::zeros();
    p.controller.weights[(0, 1)] = 1.5;
    p.step_count = 42;
    let bytes = snapshot(&p);
    assert_eq!(&bytes[..4], b"PINW");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 5);
    assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 2);
    assert_eq!(f64::from_le_bytes(bytes[18..26].try_into().unwrap()), 1.5);
    assert_eq!(u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap()), 42);
}

proptest! {
    #[test]
    fn tanh_outputs_stay_open_interval(ws in proptest::collection::vec(-5.0f64..5.0, 12), xs in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let mut net = NetworkPair::zeros().controller;
        for (i, w) in ws.iter().take(10).enumerate() { net.weights[i] = *w; }
        net.bias = MotorArray::new(ws[10], ws[11]);
        let y = controller_step(&net, &SensorVector::clamped([xs[0], xs[1], xs[2], xs[3], xs[4]])).unwrap();
        prop_assert!(y.speed_cmd.abs() < 1.0 && y.heading_rate_cmd.abs() < 1.0);
    }

    #[test]
    fn objective_nonnegative(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, scale.max(1e-6));
        let j = pi_objective(&pair, &random_sensor(&mut rng), &LearningConfig::default()).unwrap();
        prop_assert!(j >= 0.0);
    }

    #[test]
    fn snapshot_round_trip_after_updates(seed in any::<u64>(), steps in 0usize..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pair = NetworkPair::random_init(&mut rng, 0.1);
        for _ in 0..steps {
            pair = update_step(&pair, &random_sensor(&mut rng), &random_sensor(&mut rng), &LearningConfig::default()).unwrap().0;
        }
        let back = restore(&snapshot(&pair)).unwrap();
        prop_assert_eq!(back, pair);
        prop_assert_eq!(snapshot(&back), snapshot(&pair));
    }
}
