//! Discrete schemes on the canonical quadratic against the scalar recursion.

#![allow(clippy::needless_range_loop)]

mod common;

use hisd::dynamics::{initial_frame, step, SaddleState, Scheme, SolverConfig};
use nalgebra::DVector;

use common::*;

const STEPS: usize = 150;

fn trace(
    d: usize,
    m: usize,
    s: usize,
    k: usize,
    cfg: &SolverConfig,
    theta0: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let land = canonical(d, m, s);
    let model = land.model.as_ref();
    let v0 = initial_frame(model, theta0, k).unwrap();
    let mut state = SaddleState::new(theta0.clone(), v0).unwrap();
    let mut out = vec![state.theta.clone()];
    for _ in 0..STEPS {
        state = step(&state, model, cfg).unwrap();
        out.push(state.theta.clone());
    }
    out
}

fn schemes() -> Vec<(Scheme, f64)> {
    vec![
        (Scheme::Euler, 0.0),
        (Scheme::HeavyBall, 0.0),
        (Scheme::HeavyBall, 0.6),
        (Scheme::HeavyBall, 0.9),
        (Scheme::Nesterov, 0.0),
    ]
}

fn compare(d: usize, m: usize, s: usize, theta0: &DVector<f64>, tol: f64) {
    for (scheme, gamma) in schemes() {
        for k in s..=s + m {
            let mut cfg = SolverConfig::new(k, 0.1, scheme);
            cfg.gamma = gamma;
            cfg.nesterov_restart = 37;
            let got = trace(d, m, s, k, &cfg, theta0);
            for i in 0..d {
                let want = if i < m {
                    vec![theta0[i]; STEPS + 1]
                } else {
                    scalar_recursion(scheme, 0.1, gamma, 37, theta0[i], STEPS)
                };
                for (t, th) in got.iter().enumerate() {
                    let ok = if tol == 0.0 {
                        th[i].to_bits() == want[t].to_bits()
                    } else {
                        (th[i] - want[t]).abs() <= tol
                    };
                    assert!(
                        ok,
                        "{scheme:?} gamma {gamma} k {k}: coordinate {i} at t = {t}: {} vs {}",
                        th[i], want[t]
                    );
                }
            }
        }
    }
}

#[test]
fn simple_unstable_and_null_directions_match_bit_for_bit() {
    compare(
        4,
        1,
        1,
        &DVector::from_vec(vec![0.3, 0.05, -0.04, 0.03]),
        0.0,
    );
    compare(
        6,
        1,
        1,
        &DVector::from_vec(vec![-1.2, 0.05, -0.04, 0.03, 0.02, -0.01]),
        0.0,
    );
}

/// Repeated eigenvalues let the eigensolver return any basis of the
/// eigenspace, so the reflection is exact only up to rounding.
#[test]
fn degenerate_blocks_match_to_rounding() {
    compare(
        6,
        2,
        2,
        &DVector::from_vec(vec![0.3, -0.7, 0.05, -0.04, 0.03, 0.02]),
        1e-14,
    );
}

#[test]
fn euler_contracts_the_normal_block_by_four_fifths() {
    let theta0 = DVector::from_vec(vec![1.5, 0.2, -0.1, 0.3]);
    let got = trace(
        4,
        1,
        1,
        1,
        &SolverConfig::new(1, 0.1, Scheme::Euler),
        &theta0,
    );
    for w in got.windows(2) {
        assert_eq!(w[1][0], 1.5);
        for i in 1..4 {
            assert!((w[1][i] - 0.8 * w[0][i]).abs() <= 1e-14 * w[0][i].abs());
        }
    }
}
