use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::stepper::step;
use super::{SaddleState, Scheme, SolverConfig};
use crate::eigen::dense_eigs;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::manifold::{alignment_from_parts, ManifoldContext};

/// One diagnostics row. Manifold-dependent fields are `None` when no manifold
/// was supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub dist: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub z_over_g: Option<f64>,
    pub lambda_min: Option<f64>,
}

impl TrajectoryRecord {
    pub fn z_over_y(&self) -> Option<f64> {
        match (self.y, self.z) {
            (Some(0.0), Some(z)) => Some(if z == 0.0 { 0.0 } else { f64::INFINITY }),
            (Some(y), Some(z)) => Some(z / y),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Converged,
    MaxIter,
    Diverged { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Rows for `t = 0..=iterations`.
    pub records: Vec<TrajectoryRecord>,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_state: SaddleState,
    pub eigen_misses: usize,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records
            .last()
            .expect("trajectory always has the t = 0 row")
    }
}

/// Output of [`integrate_continuous`]: the trajectory plus `G = ½‖∇E‖²` per
/// recorded step.
#[derive(Debug, Clone)]
pub struct ContinuousTrajectory {
    pub trajectory: Trajectory,
    pub lyapunov: Vec<f64>,
    pub dt: f64,
}

/// The `k` eigenvectors of the smallest eigenvalues of `∇²E(θ)`.
pub fn initial_frame<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k == 0 || k > model.dim() {
        return Err(Error::precondition(format!(
            "k = {k} must lie in 1..={}",
            model.dim()
        )));
    }
    Ok(dense_eigs(&model.hessian(theta))?.leading_frame(k))
}

fn record<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    t: usize,
    manifold: Option<&ManifoldContext>,
) -> Result<TrajectoryRecord> {
    let g = model.gradient(theta);
    let energy = model.energy(theta);
    let grad_norm = g.norm();
    if !energy.is_finite() || !grad_norm.is_finite() {
        return Err(Error::Diverged(format!("energy or gradient at t = {t}")));
    }
    let mut rec = TrajectoryRecord {
        t,
        energy,
        grad_norm,
        dist: None,
        y: None,
        z: None,
        z_over_g: None,
        lambda_min: None,
    };
    if let Some(ctx) = manifold {
        let h = model.hessian(theta);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("Hessian at t = {t}")));
        }
        let info = dense_eigs(&h)?;
        let a = alignment_from_parts(&g, &info, ctx.index, ctx.nullity)?;
        rec.dist = Some(ctx.spec.distance(theta));
        rec.y = Some(a.y);
        rec.z = Some(a.z);
        rec.z_over_g = Some(a.ratio_z_over_g());
        rec.lambda_min = Some(a.lambda_min);
    }
    Ok(rec)
}

fn stop(config: &SolverConfig, rec: &TrajectoryRecord) -> bool {
    config.grad_tol.is_finite() && rec.grad_norm <= config.grad_tol
}

/// Iterates the configured scheme from `(theta0, v0)` until
/// `‖∇E‖ ≤ grad_tol` or `max_iter` steps. For the continuous scheme the step
/// count is `min(max_iter, ⌈horizon / dt⌉)`.
///
/// A non-finite iterate ends the run with [`RunStatus::Diverged`]; the
/// records then cover only the finite prefix. Other failures (eigensolver
/// breakdown) are returned as errors with the iteration attached.
pub fn run<M: EnergyModel + ?Sized>(
    model: &M,
    config: &SolverConfig,
    theta0: DVector<f64>,
    v0: DMatrix<f64>,
    manifold: Option<&ManifoldContext>,
) -> Result<Trajectory> {
    config.validate()?;
    if theta0.len() != model.dim() {
        return Err(Error::precondition(format!(
            "theta0 has dimension {} but the model has {}",
            theta0.len(),
            model.dim()
        )));
    }
    if v0.ncols() != config.k {
        return Err(Error::precondition(format!(
            "initial frame has {} columns but k = {}",
            v0.ncols(),
            config.k
        )));
    }
    let budget = match config.scheme {
        Scheme::Continuous { dt, horizon } => config.max_iter.min((horizon / dt).ceil() as usize),
        _ => config.max_iter,
    };
    let mut state = SaddleState::new(theta0, v0)?;
    let first = match record(model, &state.theta, 0, manifold) {
        Ok(r) => r,
        Err(Error::Diverged(_)) => {
            return Ok(Trajectory {
                records: Vec::new(),
                status: RunStatus::Diverged { iteration: 0 },
                iterations: 0,
                eigen_misses: 0,
                final_state: state,
            })
        }
        Err(e) => return Err(e),
    };
    let mut status = if stop(config, &first) {
        RunStatus::Converged
    } else {
        RunStatus::MaxIter
    };
    let mut records = vec![first];
    if status == RunStatus::MaxIter {
        for t in 1..=budget {
            let next = step(&state, model, config).and_then(|s| {
                let rec = record(model, &s.theta, t, manifold)?;
                Ok((s, rec))
            });
            match next {
                Ok((s, rec)) => {
                    state = s;
                    let done = stop(config, &rec);
                    records.push(rec);
                    if done {
                        status = RunStatus::Converged;
                        break;
                    }
                }
                Err(Error::Diverged(_)) => {
                    status = RunStatus::Diverged { iteration: t };
                    break;
                }
                Err(e) => return Err(e.at_iteration(t)),
            }
        }
    }
    Ok(Trajectory {
        iterations: records.len() - 1,
        eigen_misses: state.eigen_misses,
        records,
        status,
        final_state: state,
    })
}

/// Explicit-Euler co-integration of `θ` and the frame over the configured
/// horizon, recording `G(θ) = ½‖∇E(θ)‖²` at every step.
pub fn integrate_continuous<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
    manifold: Option<&ManifoldContext>,
) -> Result<ContinuousTrajectory> {
    let Scheme::Continuous { dt, .. } = config.scheme else {
        return Err(Error::config(
            "integrate_continuous needs the continuous scheme",
        ));
    };
    let traj = run(
        model,
        config,
        state.theta.clone(),
        state.frame.clone(),
        manifold,
    )?;
    let lyapunov = traj
        .records
        .iter()
        .map(|r| 0.5 * r.grad_norm * r.grad_norm)
        .collect();
    Ok(ContinuousTrajectory {
        trajectory: traj,
        lyapunov,
        dt,
    })
}
