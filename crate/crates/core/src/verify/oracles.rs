use nalgebra::{DMatrix, DVector};

use crate::dynamics::Scheme;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};

/// Central-difference gradient. Coordinate `i` uses the step
/// `h · (1 + |θ_i|)`.
pub fn fd_gradient<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let mut probe = theta.clone();
    DVector::from_fn(theta.len(), |i, _| {
        let step = h * (1.0 + theta[i].abs());
        probe[i] = theta[i] + step;
        let up = model.energy(&probe);
        probe[i] = theta[i] - step;
        let down = model.energy(&probe);
        probe[i] = theta[i];
        (up - down) / (2.0 * step)
    })
}

/// Central differences of the analytic gradient, column by column. The
/// result is not symmetrized.
pub fn fd_hessian<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let d = theta.len();
    let mut out = DMatrix::zeros(d, d);
    let mut probe = theta.clone();
    for j in 0..d {
        let step = h * (1.0 + theta[j].abs());
        probe[j] = theta[j] + step;
        let up = model.gradient(&probe);
        probe[j] = theta[j] - step;
        let down = model.gradient(&probe);
        probe[j] = theta[j];
        out.set_column(j, &((up - down) / (2.0 * step)));
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` in the Frobenius norm; 0 when both vanish.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Vector form of [`relative_error`].
pub fn relative_error_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Scalar recursion obeyed by one normal coordinate of the canonical
/// quadratic (unit curvature) under exact frames, returning `y_1 … y_steps`.
///
/// The arithmetic mirrors the steppers: the reflected gradient of a normal
/// coordinate is exactly `2y`, so every scheme evaluates `y − (2y)·β`.
pub fn quadratic_recursion_oracle(
    scheme: Scheme,
    beta: f64,
    gamma: f64,
    restart: usize,
    y0: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps);
    let (mut y, mut prev) = (y0, y0);
    let mut tau = 0usize;
    for t in 1..=steps {
        let next = match scheme {
            Scheme::Euler => y - (2.0 * y) * beta,
            Scheme::HeavyBall => {
                let plain = y - (2.0 * y) * beta;
                if gamma != 0.0 {
                    plain + (y - prev) * gamma
                } else {
                    plain
                }
            }
            Scheme::Nesterov => {
                let tf = tau as f64;
                let xi = y + (y - prev) * (tf / (tf + 3.0));
                xi - (2.0 * xi) * beta
            }
            Scheme::Continuous { .. } => {
                return Err(Error::precondition(
                    "no scalar recursion for the continuous scheme",
                ))
            }
        };
        prev = y;
        y = next;
        tau += 1;
        if matches!(scheme, Scheme::Nesterov) && restart > 0 && t % restart == 0 {
            tau = 0;
            prev = y;
        }
        out.push(y);
    }
    Ok(out)
}
