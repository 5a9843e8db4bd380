//! Differentiable energy landscapes.
//!
//! Two concrete models are provided: the Morse–Bott normal form
//! ([`QuadraticMorseBott`]) and the empirical risk of a one-dimensional
//! two-layer tanh network ([`TwoLayerTanh`]), together with the dataset
//! generator and the neuron-splitting construction that produces a linear
//! critical manifold in the latter.

mod dataset;
mod quadratic;
mod split;
mod tanh_net;

use nalgebra::{DMatrix, DVector};

pub use dataset::{generate_dataset, Dataset};
pub use quadratic::{make_quadratic, QuadraticMorseBott, QuadraticMorseBottSpec};
pub use split::{find_narrow_critical, split_embed, SplitPlan, SplitSlot};
pub use tanh_net::{make_two_layer_tanh, Neuron, TwoLayerTanh, TwoLayerTanhSpec};

/// A twice-differentiable scalar field on `R^d`.
///
/// Implementations must be immutable and are shared read-only between
/// concurrent solver runs.
pub trait EnergyModel: Send + Sync {
    fn dim(&self) -> usize;

    fn energy(&self, theta: &DVector<f64>) -> f64;

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Symmetric Hessian matrix.
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    /// Hessian-vector product. The default forms the full Hessian.
    fn hvp(&self, theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.hessian(theta) * w
    }
}

impl<T: EnergyModel + ?Sized> EnergyModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, theta: &DVector<f64>) -> f64 {
        (**self).energy(theta)
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(theta)
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        (**self).hessian(theta)
    }
    fn hvp(&self, theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        (**self).hvp(theta, w)
    }
}

impl<T: EnergyModel + ?Sized> EnergyModel for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, theta: &DVector<f64>) -> f64 {
        (**self).energy(theta)
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(theta)
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        (**self).hessian(theta)
    }
    fn hvp(&self, theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        (**self).hvp(theta, w)
    }
}
