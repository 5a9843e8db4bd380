//! High-index saddle dynamics: the continuous right-hand side, the discrete
//! explicit-Euler iteration, its Heavy-Ball and Nesterov variants, and the
//! trajectory driver.

mod driver;
mod stepper;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::LobpcgOptions;
use crate::error::{Error, Result};
use crate::linalg::orthonormality_error;

pub use driver::{
    initial_frame, integrate_continuous, run, ContinuousTrajectory, RunStatus, Trajectory,
    TrajectoryRecord,
};
pub use stepper::{continuous_step, euler_step, heavy_ball_step, hisd_rhs, nesterov_step, step};

/// Time-stepping scheme for the `θ` update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Euler,
    HeavyBall,
    Nesterov,
    /// Explicit Euler co-integration of `θ` and the frame with step `dt`
    /// over `[0, horizon]`.
    Continuous {
        dt: f64,
        horizon: f64,
    },
}

/// How the unstable frame is refreshed after each step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSolverConfig {
    #[default]
    Dense,
    Lobpcg(LobpcgOptions),
}

fn default_beta() -> f64 {
    0.1
}
fn default_restart() -> usize {
    500
}
fn default_max_iter() -> usize {
    10_000
}
fn default_grad_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of ascent directions of the dynamics.
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Relaxation rate of the frame dynamics; defaults to `beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// Heavy-Ball momentum.
    #[serde(default)]
    pub gamma: f64,
    /// Nesterov restart period in iterations; 0 disables restarts.
    #[serde(default = "default_restart")]
    pub nesterov_restart: usize,
    #[serde(default)]
    pub eigensolver: EigenSolverConfig,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once `‖∇E‖ ≤ grad_tol`. A non-finite value disables the test.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn new(k: usize, beta: f64, scheme: Scheme) -> Self {
        Self {
            k,
            beta,
            zeta: None,
            gamma: 0.0,
            nesterov_restart: default_restart(),
            eigensolver: EigenSolverConfig::Dense,
            max_iter: default_max_iter(),
            grad_tol: default_grad_tol(),
            scheme,
        }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or(self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("solver.k must be >= 1"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("solver.beta must be finite and positive"));
        }
        if let Some(z) = self.zeta {
            if !(z.is_finite() && z > 0.0) {
                return Err(Error::config("solver.zeta must be finite and positive"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("solver.gamma must lie in [0, 1)"));
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return Err(Error::config("solver.grad_tol must be non-negative"));
        }
        if let Scheme::Continuous { dt, horizon } = self.scheme {
            if !(dt.is_finite() && dt > 0.0 && horizon.is_finite() && horizon >= 0.0) {
                return Err(Error::config(
                    "continuous scheme needs dt > 0 and a finite horizon >= 0",
                ));
            }
        }
        if let EigenSolverConfig::Lobpcg(o) = self.eigensolver {
            if !(o.tol.is_finite() && o.tol > 0.0) {
                return Err(Error::config("lobpcg tol must be positive"));
            }
        }
        Ok(())
    }
}

/// Iterate of the saddle search.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub theta: DVector<f64>,
    /// Orthonormal `d × k` frame `(v_1 … v_k)`.
    pub frame: DMatrix<f64>,
    pub t: usize,
    /// Previous iterate; equals `theta` at `t = 0`.
    pub prev_theta: DVector<f64>,
    /// Iterations since the last Nesterov restart.
    pub since_restart: usize,
    /// Number of frame updates where an iterative eigensolver stopped at its
    /// iteration cap.
    pub eigen_misses: usize,
}

impl SaddleState {
    pub fn new(theta: DVector<f64>, frame: DMatrix<f64>) -> Result<Self> {
        if frame.nrows() != theta.len() {
            return Err(Error::precondition(format!(
                "frame has {} rows but theta has dimension {}",
                frame.nrows(),
                theta.len()
            )));
        }
        let drift = orthonormality_error(&frame);
        if !(drift <= 1e-10) {
            return Err(Error::precondition(format!(
                "initial frame is not orthonormal (max |VᵀV - I| = {drift:e})"
            )));
        }
        Ok(Self {
            prev_theta: theta.clone(),
            theta,
            frame,
            t: 0,
            since_restart: 0,
            eigen_misses: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.frame.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip_and_defaults() {
        let cfg: SolverConfig = toml::from_str(
            r#"
            k = 5
            scheme = "nesterov"
            eigensolver = { lobpcg = { tol = 1e-10, max_iter = 30 } }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.zeta(), 0.1);
        assert_eq!(cfg.nesterov_restart, 500);
        assert_eq!(cfg.grad_tol, 1e-12);
        assert_eq!(cfg.scheme, Scheme::Nesterov);
        assert_eq!(
            cfg.eigensolver,
            EigenSolverConfig::Lobpcg(LobpcgOptions {
                tol: 1e-10,
                max_iter: 30
            })
        );
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<SolverConfig>(&text).unwrap(), cfg);

        let cont: SolverConfig =
            toml::from_str("k = 1\nscheme = { continuous = { dt = 0.001, horizon = 5.0 } }")
                .unwrap();
        assert_eq!(
            cont.scheme,
            Scheme::Continuous {
                dt: 1e-3,
                horizon: 5.0
            }
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SolverConfig::new(1, 0.1, Scheme::HeavyBall);
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.5;
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
        assert!(SolverConfig::new(0, 0.1, Scheme::Euler).validate().is_err());
        assert!(toml::from_str::<SolverConfig>("k = 1\nbogus = 2").is_err());
    }

    #[test]
    fn state_starts_with_zero_momentum() {
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let s = SaddleState::new(theta.clone(), DMatrix::identity(2, 1)).unwrap();
        assert_eq!(s.prev_theta, theta);
        assert!(SaddleState::new(theta, DMatrix::from_element(2, 1, 1.0)).is_err());
    }
}
