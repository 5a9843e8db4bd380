use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, EnergyModel};
use crate::error::{Error, Result};

/// One hidden unit `a · tanh(w x + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub a: f64,
    pub w: f64,
    pub b: f64,
}

impl Neuron {
    pub const fn new(a: f64, w: f64, b: f64) -> Self {
        Self { a, w, b }
    }
}

pub(crate) fn network_output(neurons: &[Neuron], x: f64) -> f64 {
    neurons.iter().map(|n| n.a * (n.w * x + n.b).tanh()).sum()
}

/// Network description used to build a [`TwoLayerTanh`] landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerTanhSpec {
    pub width: usize,
    pub teacher: Vec<Neuron>,
    pub dataset: Dataset,
}

/// Empirical risk `E(θ) = 1/(2n) Σ (f_θ(x_i) - y_i)²` of the network
/// `f_θ(x) = Σ a_j tanh(w_j x + b_j)`.
///
/// Parameters are stored neuron-major: `θ[3j..3j+3] = (a_j, w_j, b_j)`.
#[derive(Debug, Clone)]
pub struct TwoLayerTanh {
    width: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

/// Builds the empirical-risk landscape of the spec's network and dataset.
pub fn make_two_layer_tanh(spec: &TwoLayerTanhSpec) -> Result<TwoLayerTanh> {
    TwoLayerTanh::new(spec.width, &spec.dataset)
}

impl TwoLayerTanh {
    pub fn new(width: usize, dataset: &Dataset) -> Result<Self> {
        if width == 0 {
            return Err(Error::config("network width must be >= 1"));
        }
        if dataset.is_empty() || dataset.inputs.len() != dataset.targets.len() {
            return Err(Error::config(
                "dataset must be non-empty with matching lengths",
            ));
        }
        Ok(Self {
            width,
            inputs: dataset.inputs.clone(),
            targets: dataset.targets.clone(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn samples(&self) -> usize {
        self.inputs.len()
    }

    pub fn pack(neurons: &[Neuron]) -> DVector<f64> {
        DVector::from_iterator(
            3 * neurons.len(),
            neurons.iter().flat_map(|n| [n.a, n.w, n.b]),
        )
    }

    pub fn unpack(theta: &DVector<f64>) -> Vec<Neuron> {
        theta
            .as_slice()
            .chunks_exact(3)
            .map(|c| Neuron::new(c[0], c[1], c[2]))
            .collect()
    }

    pub fn output(&self, theta: &DVector<f64>, x: f64) -> f64 {
        let mut f = 0.0;
        for j in 0..self.width {
            f += theta[3 * j] * (theta[3 * j + 1] * x + theta[3 * j + 2]).tanh();
        }
        f
    }

    fn residuals(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(&x, &y)| self.output(theta, x) - y)
            .collect()
    }

    /// Per-sample activations `(tanh, tanh')` for every neuron.
    fn activations(&self, theta: &DVector<f64>, x: f64) -> Vec<(f64, f64)> {
        (0..self.width)
            .map(|j| {
                let t = (theta[3 * j + 1] * x + theta[3 * j + 2]).tanh();
                (t, 1.0 - t * t)
            })
            .collect()
    }

    /// Jacobian row `∂f(x)/∂θ`.
    fn output_jacobian(&self, theta: &DVector<f64>, x: f64, act: &[(f64, f64)]) -> DVector<f64> {
        let mut jac = DVector::zeros(3 * self.width);
        for (j, &(t, s)) in act.iter().enumerate() {
            let a = theta[3 * j];
            jac[3 * j] = t;
            jac[3 * j + 1] = a * s * x;
            jac[3 * j + 2] = a * s;
        }
        jac
    }

    fn check_dim(&self, theta: &DVector<f64>) {
        assert_eq!(
            theta.len(),
            3 * self.width,
            "parameter vector has wrong dimension"
        );
    }
}

impl EnergyModel for TwoLayerTanh {
    fn dim(&self) -> usize {
        3 * self.width
    }

    fn energy(&self, theta: &DVector<f64>) -> f64 {
        self.check_dim(theta);
        let n = self.inputs.len() as f64;
        self.residuals(theta).iter().map(|r| r * r).sum::<f64>() / (2.0 * n)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.check_dim(theta);
        let n = self.inputs.len() as f64;
        let mut g = DVector::zeros(self.dim());
        for (&x, &y) in self.inputs.iter().zip(&self.targets) {
            let act = self.activations(theta, x);
            let f: f64 = act
                .iter()
                .enumerate()
                .map(|(j, (t, _))| theta[3 * j] * t)
                .sum();
            let r = f - y;
            for (j, &(t, s)) in act.iter().enumerate() {
                let a = theta[3 * j];
                g[3 * j] += r * t;
                g[3 * j + 1] += r * a * s * x;
                g[3 * j + 2] += r * a * s;
            }
        }
        g / n
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.check_dim(theta);
        let d = self.dim();
        let n = self.inputs.len() as f64;
        let mut h = DMatrix::zeros(d, d);
        for (&x, &y) in self.inputs.iter().zip(&self.targets) {
            let act = self.activations(theta, x);
            let jac = self.output_jacobian(theta, x, &act);
            let r = act
                .iter()
                .enumerate()
                .map(|(j, (t, _))| theta[3 * j] * t)
                .sum::<f64>()
                - y;
            // Gauss-Newton part, upper triangle only.
            for p in 0..d {
                for q in p..d {
                    h[(p, q)] += jac[p] * jac[q];
                }
            }
            // Residual-weighted second derivatives of f, block diagonal.
            for (j, &(t, s)) in act.iter().enumerate() {
                let a = theta[3 * j];
                let t2 = -2.0 * t * s;
                let (ia, iw, ib) = (3 * j, 3 * j + 1, 3 * j + 2);
                h[(ia, iw)] += r * s * x;
                h[(ia, ib)] += r * s;
                h[(iw, iw)] += r * a * t2 * x * x;
                h[(iw, ib)] += r * a * t2 * x;
                h[(ib, ib)] += r * a * t2;
            }
        }
        for p in 0..d {
            for q in p..d {
                let v = h[(p, q)] / n;
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
        h
    }

    fn hvp(&self, theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.check_dim(theta);
        let n = self.inputs.len() as f64;
        let mut out = DVector::zeros(self.dim());
        for (&x, &y) in self.inputs.iter().zip(&self.targets) {
            let act = self.activations(theta, x);
            let jac = self.output_jacobian(theta, x, &act);
            let r = act
                .iter()
                .enumerate()
                .map(|(j, (t, _))| theta[3 * j] * t)
                .sum::<f64>()
                - y;
            let jw = jac.dot(w);
            out.axpy(jw, &jac, 1.0);
            for (j, &(t, s)) in act.iter().enumerate() {
                let a = theta[3 * j];
                let t2 = -2.0 * t * s;
                let (ia, iw, ib) = (3 * j, 3 * j + 1, 3 * j + 2);
                let (va, vw, vb) = (w[ia], w[iw], w[ib]);
                out[ia] += r * (s * x * vw + s * vb);
                out[iw] += r * (s * x * va + a * t2 * x * x * vw + a * t2 * x * vb);
                out[ib] += r * (s * va + a * t2 * x * vw + a * t2 * vb);
            }
        }
        out / n
    }
}
