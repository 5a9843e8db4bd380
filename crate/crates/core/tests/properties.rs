//! Randomized invariants of the steppers.

mod common;

use hisd::dynamics::{initial_frame, step, SaddleState, Scheme, SolverConfig};
use hisd::linalg::{orthonormality_error, orthonormalize};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;

fn scheme_strategy() -> impl Strategy<Value = (Scheme, f64)> {
    prop_oneof![
        Just((Scheme::Euler, 0.0)),
        (0.0..0.95f64).prop_map(|g| (Scheme::HeavyBall, g)),
        Just((Scheme::Nesterov, 0.0)),
        Just((
            Scheme::Continuous {
                dt: 1e-2,
                horizon: 1.0
            },
            0.0
        )),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frames_stay_orthonormal(
        (scheme, gamma) in scheme_strategy(),
        k in 5usize..=10,
        offset in prop::collection::vec(-0.05..0.05f64, 18),
    ) {
        let (_, land) = nn();
        let model = land.model.as_ref();
        let theta = &land.saddle + DVector::from_vec(offset);
        let mut cfg = SolverConfig::new(k, 0.1, scheme);
        cfg.gamma = gamma;
        let mut state = SaddleState::new(theta.clone(), initial_frame(model, &theta, k).unwrap()).unwrap();
        for _ in 0..10 {
            state = step(&state, model, &cfg).unwrap();
            prop_assert!(orthonormality_error(&state.frame) <= 1e-10);
        }
    }

    #[test]
    fn split_manifold_points_are_fixed(
        (scheme, gamma) in scheme_strategy(),
        k in 5usize..=10,
        coords in prop::collection::vec(-0.2..0.2f64, 5),
    ) {
        let (_, land) = nn();
        let model = land.model.as_ref();
        let spec = &land.manifold.spec;
        let theta = spec.anchor() + spec.basis() * DVector::from_vec(coords);
        let mut cfg = SolverConfig::new(k, 0.1, scheme);
        cfg.gamma = gamma;
        let mut state = SaddleState::new(theta.clone(), initial_frame(model, &theta, k).unwrap()).unwrap();
        for _ in 0..5 {
            let before = state.theta.clone();
            state = step(&state, model, &cfg).unwrap();
            prop_assert!((&state.theta - &before).norm() <= 1e-10);
        }
    }

    #[test]
    fn quadratic_manifold_block_never_moves(
        (scheme, gamma) in scheme_strategy(),
        extra in 0usize..=2,
        theta in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let land = canonical(6, 2, 2);
        let model = land.model.as_ref();
        let theta = DVector::from_vec(theta);
        let mut cfg = SolverConfig::new(2 + extra, 0.1, scheme);
        cfg.gamma = gamma;
        let mut state = SaddleState::new(theta.clone(), initial_frame(model, &theta, 2 + extra).unwrap()).unwrap();
        for _ in 0..20 {
            state = step(&state, model, &cfg).unwrap();
            prop_assert_eq!(state.theta[0], theta[0]);
            prop_assert_eq!(state.theta[1], theta[1]);
        }
    }

    #[test]
    fn heavy_ball_without_momentum_is_euler(
        k in 5usize..=10,
        offset in prop::collection::vec(-0.05..0.05f64, 18),
    ) {
        let (_, land) = nn();
        let model = land.model.as_ref();
        let theta = &land.saddle + DVector::from_vec(offset);
        let v0 = initial_frame(model, &theta, k).unwrap();
        let mut a = SaddleState::new(theta.clone(), v0.clone()).unwrap();
        let mut b = SaddleState::new(theta, v0).unwrap();
        let euler = SolverConfig::new(k, 0.1, Scheme::Euler);
        let hb = SolverConfig::new(k, 0.1, Scheme::HeavyBall);
        for _ in 0..10 {
            a = step(&a, model, &euler).unwrap();
            b = step(&b, model, &hb).unwrap();
            prop_assert_eq!(&a.theta, &b.theta);
            prop_assert_eq!(&a.frame, &b.frame);
        }
    }

    #[test]
    fn orthonormalize_is_a_positive_qr(
        d in 2usize..12,
        entries in prop::collection::vec(-1.0..1.0f64, 144),
    ) {
        let k = (d / 2).max(1);
        let a = DMatrix::from_fn(d, k, |i, j| entries[i * 12 + j]);
        let q = orthonormalize(&a).unwrap();
        prop_assert!(orthonormality_error(&q) <= 1e-12);
        let r = q.transpose() * &a;
        for j in 0..k {
            prop_assert!(r[(j, j)] > 0.0);
            for i in j + 1..k {
                prop_assert!(r[(i, j)].abs() <= 1e-12);
            }
        }
        prop_assert!((&q * &r - &a).norm() <= 1e-12);
    }
}
