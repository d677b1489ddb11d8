mod common;

use common::covariance_oracle;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scso::eda2::{
    estimate_covariance, estimate_mean, run_eda2, sample, select, Bounds, Eda2Config, Eda2Error, Eda2State,
    GaussianModel,
};

#[test]
fn truncation_selection() {
    assert_eq!(select(&[3.0, 1.0, 2.0, 9.0], 0.5), vec![1, 2]);
    assert_eq!(select(&[3.0, 1.0, 2.0], 1.0).len(), 3);
    assert_eq!(select(&[5.0; 6], 0.5), vec![0, 1, 2]);
}

#[test]
fn mean_examples() {
    let s = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
    assert_eq!(estimate_mean(&s).unwrap(), vec![3.0, 4.0]);
    assert_eq!(estimate_mean(&[vec![7.0, -1.0]]).unwrap(), vec![7.0, -1.0]);
    assert_eq!(estimate_mean(&[vec![-2.0], vec![2.0]]).unwrap(), vec![0.0]);
    assert!(matches!(estimate_mean::<Vec<f64>>(&[]), Err(Eda2Error::EmptySelection)));
}

#[test]
fn covariance_is_centered_at_the_given_mean() {
    let h = [[1.0], [3.0]];
    let it = || h.iter().map(|p| p.as_slice());
    assert_eq!(estimate_covariance(it(), &[2.0]).unwrap()[(0, 0)], 1.0);
    assert_eq!(estimate_covariance(it(), &[0.0]).unwrap()[(0, 0)], 5.0);
}

#[test]
fn covariance_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [2, 5, 9] {
        let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..n).map(|_| rng.random_range(-10.0..30.0)).collect()).collect();
        let mean = estimate_mean(&pts[..14]).unwrap();
        let got = estimate_covariance(pts.iter().map(Vec::as_slice), &mean).unwrap();
        let want = covariance_oracle(&pts, &mean);
        for i in 0..n {
            for j in 0..n {
                assert!((got[(i, j)] - want[i][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn sample_is_mean_plus_factor_times_draw() {
    let model = GaussianModel {
        mean: vec![10.0],
        covariance: DMatrix::from_element(1, 1, 4.0),
    };
    let l = model.factor().unwrap();
    assert!((model.transform(&l, &[1.0])[0] - 12.0).abs() < 1e-8);
}

#[test]
fn zero_covariance_samples_stay_at_the_mean() {
    let model = GaussianModel {
        mean: vec![1.0, 2.0, 3.0],
        covariance: DMatrix::zeros(3, 3),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pts = sample(&model, 200, &Bounds::uniform(3, -10.0, 10.0), &mut rng).unwrap();
    for p in pts {
        for (x, m) in p.iter().zip(&model.mean) {
            assert!((x - m).abs() < 1e-3);
        }
    }
}

#[test]
fn samples_follow_the_model() {
    let n = 3;
    let model = GaussianModel {
        mean: vec![0.0; n],
        covariance: DMatrix::identity(n, n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pts = sample(&model, 10_000, &Bounds::uniform(n, -1e6, 1e6), &mut rng).unwrap();
    let mean = estimate_mean(&pts).unwrap();
    assert!(mean.iter().all(|m| m.abs() < 0.05));
    let cov = covariance_oracle(&pts, &mean);
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((cov[i][j] - want).abs() < 0.1);
        }
    }
}

#[test]
fn samples_are_clamped() {
    let model = GaussianModel {
        mean: vec![0.0, 0.0],
        covariance: DMatrix::identity(2, 2) * 100.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = Bounds::uniform(2, -1.0, 1.0);
    for p in sample(&model, 500, &b, &mut rng).unwrap() {
        assert!(p.iter().all(|x| (-1.0..=1.0).contains(x)));
    }
}

#[test]
fn archive_holds_the_last_l_plus_one_sets() {
    let config = Eda2Config {
        population_size: 20,
        archive_length: 2,
        max_iterations: 0,
        truncation: 0.5,
    };
    let mut state = Eda2State::new(config, Bounds::uniform(2, -1.0, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut selected_sets = Vec::new();
    for g in 0..5 {
        let pts = state.ask(&mut rng).unwrap();
        let f: Vec<f64> = pts.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        state.tell(pts, f).unwrap();
        selected_sets.push(state.archive()[0].clone());
        assert_eq!(state.archive().len(), (g + 1).min(3));
    }
    assert_eq!(state.archive()[2], selected_sets[2]);
    // with the incumbent in the pool, each selected set has ⌈0.5·21⌉ points
    assert_eq!(state.archive()[0].len(), 11);
}

#[test]
fn zero_length_archive_is_the_ml_covariance() {
    let config = Eda2Config {
        population_size: 40,
        archive_length: 0,
        max_iterations: 0,
        truncation: 0.3,
    };
    let mut state = Eda2State::new(config, Bounds::uniform(3, -5.0, 5.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let pts = state.ask(&mut rng).unwrap();
        let f: Vec<f64> = pts.iter().map(|p| p.iter().map(|x| (x - 1.0).abs()).sum()).collect();
        state.tell(pts, f).unwrap();
        let archive = state.archive();
        let s = &archive[0];
        let model = state.model().unwrap();
        assert_eq!(model.mean, estimate_mean(s).unwrap());
        let want = covariance_oracle(s, &model.mean);
        for i in 0..3 {
            for j in 0..3 {
                assert!((model.covariance[(i, j)] - want[i][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn constant_objective_and_zero_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = Bounds::uniform(2, 0.0, 1.0);
    let cfg = Eda2Config {
        max_iterations: 0,
        ..Eda2Config::default()
    };
    let out = run_eda2(|_| Ok::<_, Eda2Error>(4.5), &b, &cfg, &mut rng).unwrap();
    assert_eq!(out.best_value, 4.5);
    assert_eq!(out.history, vec![4.5]);

    let mut first = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let out = run_eda2(
        |x| {
            if first.len() < 200 {
                first.push(x[0] + x[1]);
            }
            Ok::<_, Eda2Error>(x[0] + x[1])
        },
        &b,
        &cfg,
        &mut rng,
    )
    .unwrap();
    assert_eq!(out.best_value, first.iter().copied().fold(f64::INFINITY, f64::min));
}

#[test]
fn history_is_monotone_and_sphere_converges() {
    let b = Bounds::uniform(10, -5.0, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let out = run_eda2(
        |x| Ok::<_, Eda2Error>(x.iter().map(|v| v * v).sum()),
        &b,
        &Eda2Config::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(out.history.len(), 101);
    assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.best_value < 1e-3, "{}", out.best_value);
}

#[test]
fn invalid_configurations() {
    let b = Bounds::uniform(1, 0.0, 1.0);
    for cfg in [
        Eda2Config {
            truncation: 0.0,
            ..Eda2Config::default()
        },
        Eda2Config {
            population_size: 2,
            truncation: 0.5,
            ..Eda2Config::default()
        },
    ] {
        assert!(matches!(Eda2State::new(cfg, b.clone()), Err(Eda2Error::InvalidConfig(_))));
    }
}
