use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EnergyModel;
use crate::error::{Error, Result};
use crate::manifold::LinearManifoldSpec;

/// Parameters of the Morse–Bott normal form
/// `E(x, y) = offset - Σ_{i≤s} c_i y_i² + Σ_{i>s} c_i y_i²`
/// with `x ∈ R^m` spanning the critical manifold and `y ∈ R^{d-m}`.
///
/// The curvature weights `c_i` default to one, which is the canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticMorseBottSpec {
    pub dim: usize,
    pub nullity: usize,
    pub index: usize,
    #[serde(default)]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvatures: Option<Vec<f64>>,
}

impl QuadraticMorseBottSpec {
    pub fn new(dim: usize, nullity: usize, index: usize) -> Self {
        Self {
            dim,
            nullity,
            index,
            offset: 0.0,
            curvatures: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("quadratic landscape needs dim >= 1"));
        }
        if self.index + self.nullity > self.dim {
            return Err(Error::config(format!(
                "index {} + nullity {} exceeds dim {}",
                self.index, self.nullity, self.dim
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::config("quadratic offset must be finite"));
        }
        if let Some(c) = &self.curvatures {
            if c.len() != self.dim - self.nullity {
                return Err(Error::config(format!(
                    "expected {} curvatures, got {}",
                    self.dim - self.nullity,
                    c.len()
                )));
            }
            if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config("curvatures must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// The Morse–Bott quadratic landscape. Its critical manifold is the
/// coordinate plane `{(x, 0)}`.
#[derive(Debug, Clone)]
pub struct QuadraticMorseBott {
    spec: QuadraticMorseBottSpec,
    /// Signed diagonal of `E - offset`, zero on the manifold block.
    coeffs: Vec<f64>,
}

impl QuadraticMorseBott {
    pub fn new(spec: QuadraticMorseBottSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.nullity;
        let coeffs = (0..spec.dim)
            .map(|i| {
                if i < m {
                    return 0.0;
                }
                let j = i - m;
                let c = spec.curvatures.as_ref().map_or(1.0, |c| c[j]);
                if j < spec.index {
                    -c
                } else {
                    c
                }
            })
            .collect();
        Ok(Self { spec, coeffs })
    }

    pub fn spec(&self) -> &QuadraticMorseBottSpec {
        &self.spec
    }

    /// The critical manifold `{(x, 0)}` through the origin.
    pub fn manifold(&self) -> LinearManifoldSpec {
        let d = self.spec.dim;
        let m = self.spec.nullity;
        let basis = DMatrix::from_fn(d, m, |i, j| if i == j { 1.0 } else { 0.0 });
        LinearManifoldSpec::new(DVector::zeros(d), basis).expect("coordinate basis is orthonormal")
    }
}

/// Builds the quadratic Morse–Bott landscape.
pub fn make_quadratic(spec: QuadraticMorseBottSpec) -> Result<QuadraticMorseBott> {
    QuadraticMorseBott::new(spec)
}

impl EnergyModel for QuadraticMorseBott {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn energy(&self, theta: &DVector<f64>) -> f64 {
        let quad: f64 = self
            .coeffs
            .iter()
            .zip(theta.iter())
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, v)| c * v * v)
            .sum();
        self.spec.offset + quad
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.spec.dim,
            self.coeffs
                .iter()
                .zip(theta.iter())
                .map(|(c, v)| 2.0 * c * v),
        )
    }

    fn hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.spec.dim,
            self.coeffs.iter().map(|c| 2.0 * c),
        ))
    }

    fn hvp(&self, _theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.spec.dim,
            self.coeffs.iter().zip(w.iter()).map(|(c, v)| 2.0 * c * v),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_4_1_1() -> QuadraticMorseBott {
        make_quadratic(QuadraticMorseBottSpec::new(4, 1, 1)).unwrap()
    }

    #[test]
    fn energy_in_unstable_direction() {
        let e = model_4_1_1().energy(&DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]));
        assert_eq!(e, -1.0);
    }

    #[test]
    fn gradient_vanishes_on_manifold() {
        let g = model_4_1_1().gradient(&DVector::from_vec(vec![3.7, 0.0, 0.0, 0.0]));
        assert_eq!(g, DVector::zeros(4));
    }

    #[test]
    fn hessian_is_constant_diagonal() {
        let h = model_4_1_1().hessian(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let mut diag: Vec<f64> = h.diagonal().iter().copied().collect();
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, vec![-2.0, 0.0, 2.0, 2.0]);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn curvatures_scale_the_normal_form() {
        let mut spec = QuadraticMorseBottSpec::new(3, 1, 1);
        spec.curvatures = Some(vec![0.5, 3.0]);
        let q = make_quadratic(spec).unwrap();
        let theta = DVector::from_vec(vec![9.0, 2.0, 1.0]);
        assert_eq!(q.energy(&theta), -0.5 * 4.0 + 3.0);
        assert_eq!(q.gradient(&theta), DVector::from_vec(vec![0.0, -2.0, 6.0]));
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert!(make_quadratic(QuadraticMorseBottSpec::new(3, 2, 2)).is_err());
        assert!(make_quadratic(QuadraticMorseBottSpec::new(0, 0, 0)).is_err());
        let mut spec = QuadraticMorseBottSpec::new(3, 1, 1);
        spec.curvatures = Some(vec![1.0]);
        assert!(make_quadratic(spec).is_err());
    }

    #[test]
    fn energy_is_constant_on_manifold() {
        use rand::{Rng, SeedableRng};
        let mut spec = QuadraticMorseBottSpec::new(6, 3, 1);
        spec.offset = 0.75;
        let q = make_quadratic(spec).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut theta = DVector::zeros(6);
            for i in 0..3 {
                theta[i] = rng.random_range(-50.0..50.0);
            }
            assert_eq!(q.energy(&theta), 0.75);
        }
    }
}
