//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use hisd::config::{ExperimentConfig, Landscape};
use hisd::dynamics::Scheme;
use hisd::energy::Neuron;
use hisd::linalg::random_orthonormal;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

/// The frozen split-network landscape shared by the figure configs.
pub fn nn() -> (ExperimentConfig, Landscape) {
    let cfg = load("figure2.toml");
    let land = cfg.build_landscape().unwrap();
    (cfg, land)
}

/// Canonical quadratic: unit curvatures.
pub fn canonical(dim: usize, nullity: usize, index: usize) -> Landscape {
    let text = format!(
        "[landscape]\nkind = \"quadratic\"\ndim = {dim}\nnullity = {nullity}\nindex = {index}\n\
         [solver]\nk = {index}\n[init]\nseed = 0\n"
    );
    ExperimentConfig::from_toml(&text)
        .unwrap()
        .build_landscape()
        .unwrap()
}

/// Squared-loss risk of a one-dimensional two-layer tanh network, written out
/// from its definition: `(1/2n) Σ_i (Σ_j a_j tanh(w_j x_i + b_j) − y_i)²`.
pub fn tanh_risk(theta: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let f: f64 = theta
                .chunks(3)
                .map(|p| p[0] * (p[1] * x + p[2]).tanh())
                .sum();
            (f - y).powi(2)
        })
        .sum();
    total / (2.0 * xs.len() as f64)
}

pub fn teacher_output(teacher: &[Neuron], x: f64) -> f64 {
    teacher.iter().map(|n| n.a * (n.w * x + n.b).tanh()).sum()
}

/// Central differences of `f`.
pub fn fd_grad(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let (mut p, mut m) = (x.clone(), x.clone());
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

/// Second-order central differences of `f`.
pub fn fd_hess(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let at = |i: usize, si: f64, j: usize, sj: f64| {
        let mut y = x.clone();
        y[i] += si * h;
        y[j] += sj * h;
        f(&y)
    };
    let mut hm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0)
                + at(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// One normal coordinate of the canonical quadratic under exact frames. The
/// reflected gradient of such a coordinate is `2y` (unstable: `−(−2y)`,
/// stable: `2y`), so each scheme reduces to a scalar recursion.
pub fn scalar_recursion(
    scheme: Scheme,
    beta: f64,
    gamma: f64,
    restart: usize,
    y0: f64,
    steps: usize,
) -> Vec<f64> {
    let (mut y, mut prev, mut tau) = (y0, y0, 0usize);
    let mut out = vec![y0];
    for t in 1..=steps {
        let next = match scheme {
            Scheme::Euler => y - (2.0 * y) * beta,
            Scheme::HeavyBall if gamma == 0.0 => y - (2.0 * y) * beta,
            Scheme::HeavyBall => y - (2.0 * y) * beta + (y - prev) * gamma,
            Scheme::Nesterov => {
                let c = tau as f64 / (tau as f64 + 3.0);
                let xi = y + (y - prev) * c;
                xi - (2.0 * xi) * beta
            }
            Scheme::Continuous { .. } => unreachable!(),
        };
        prev = y;
        y = next;
        tau += 1;
        if scheme == Scheme::Nesterov && restart > 0 && t % restart == 0 {
            tau = 0;
            prev = y;
        }
        out.push(y);
    }
    out
}

/// `Q diag(λ) Qᵀ` with random `Q` and a spectrum in `[-3, 5)` containing a
/// near-degenerate pair when `d > 4`.
pub fn test_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let q = random_orthonormal(rng, d, d);
    let mut lam: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..5.0)).collect();
    if d > 4 {
        lam[1] = lam[0] + 1e-3;
    }
    &q * DMatrix::from_diagonal(&DVector::from_vec(lam)) * q.transpose()
}
