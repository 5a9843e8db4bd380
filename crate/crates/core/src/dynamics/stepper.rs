use nalgebra::{DMatrix, DVector};

use super::{EigenSolverConfig, SaddleState, Scheme, SolverConfig};
use crate::eigen::{align_signs, dense_eigs, lobpcg_smallest};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, reflect};

/// Right-hand side of the continuous dynamics:
/// `θ̇ = −β (I − 2 Σ v_p v_pᵀ) ∇E(θ)` and
/// `v̇_p = −ζ (I − v_p v_pᵀ − 2 Σ_{q<p} v_q v_qᵀ) ∇²E(θ) v_p`.
pub fn hisd_rhs<M: EnergyModel + ?Sized>(
    theta: &DVector<f64>,
    frame: &DMatrix<f64>,
    model: &M,
    beta: f64,
    zeta: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let g = model.gradient(theta);
    let dtheta = reflect(frame, &g) * -beta;
    let k = frame.ncols();
    let mut dframe = DMatrix::zeros(frame.nrows(), k);
    for p in 0..k {
        let v = frame.column(p).into_owned();
        let hv = model.hvp(theta, &v);
        let mut col = hv.clone();
        col.axpy(-v.dot(&hv), &v, 1.0);
        for q in 0..p {
            let vq = frame.column(q);
            col.axpy(-2.0 * vq.dot(&hv), &vq, 1.0);
        }
        dframe.set_column(p, &(col * -zeta));
    }
    (dtheta, dframe)
}

fn ensure_finite(theta: &DVector<f64>, what: &str) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged(format!(
            "{what} produced a non-finite iterate"
        )))
    }
}

/// Refreshes the frame at `theta` with the configured eigensolver, aligns its
/// signs with `prev` and re-orthonormalizes. Returns whether an iterative
/// solve converged.
fn eigen_update<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    prev: &DMatrix<f64>,
    solver: &EigenSolverConfig,
) -> Result<(DMatrix<f64>, bool)> {
    let k = prev.ncols();
    let h = model.hessian(theta);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("Hessian has non-finite entries".into()));
    }
    let (frame, converged) = match solver {
        EigenSolverConfig::Dense => (dense_eigs(&h)?.leading_frame(k), true),
        EigenSolverConfig::Lobpcg(opts) => {
            let info = lobpcg_smallest(|w| &h * w, prev, opts)?;
            (info.eigenvectors, info.converged)
        }
    };
    let aligned = align_signs(&frame, prev)?;
    Ok((orthonormalize(&aligned)?, converged))
}

fn finish<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
    theta_next: DVector<f64>,
    scheme: &str,
) -> Result<SaddleState> {
    ensure_finite(&theta_next, scheme)?;
    let (frame, converged) = eigen_update(model, &theta_next, &state.frame, &config.eigensolver)?;
    Ok(SaddleState {
        prev_theta: state.theta.clone(),
        theta: theta_next,
        frame,
        t: state.t + 1,
        since_restart: state.since_restart + 1,
        eigen_misses: state.eigen_misses + usize::from(!converged),
    })
}

/// One explicit-Euler iteration followed by the frame update at the new point.
pub fn euler_step<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
) -> Result<SaddleState> {
    let g = model.gradient(&state.theta);
    let dir = reflect(&state.frame, &g);
    let next = &state.theta - dir * config.beta;
    finish(state, model, config, next, "euler step")
}

/// Euler step plus the momentum term `γ (θ − θ_prev)`.
pub fn heavy_ball_step<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
) -> Result<SaddleState> {
    let g = model.gradient(&state.theta);
    let dir = reflect(&state.frame, &g);
    let mut next = &state.theta - dir * config.beta;
    if config.gamma != 0.0 {
        next += (&state.theta - &state.prev_theta) * config.gamma;
    }
    finish(state, model, config, next, "heavy-ball step")
}

/// Nesterov step: extrapolate to `ξ = θ + γ_τ (θ − θ_prev)` with
/// `γ_τ = τ / (τ + 3)`, `τ` counting iterations since the last restart, then
/// take the reflected gradient step from `ξ` using the current frame.
pub fn nesterov_step<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
) -> Result<SaddleState> {
    let tau = state.since_restart as f64;
    let gamma_t = tau / (tau + 3.0);
    let xi = &state.theta + (&state.theta - &state.prev_theta) * gamma_t;
    let g = model.gradient(&xi);
    let dir = reflect(&state.frame, &g);
    let next = &xi - dir * config.beta;
    let mut out = finish(state, model, config, next, "nesterov step")?;
    if config.nesterov_restart > 0 && out.t % config.nesterov_restart == 0 {
        out.since_restart = 0;
        out.prev_theta = out.theta.clone();
    }
    Ok(out)
}

/// One explicit-Euler step of length `dt` of the coupled continuous dynamics.
/// The frame is re-orthonormalized afterwards.
pub fn continuous_step<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
    dt: f64,
) -> Result<SaddleState> {
    let (dtheta, dframe) = hisd_rhs(
        &state.theta,
        &state.frame,
        model,
        config.beta,
        config.zeta(),
    );
    let next = &state.theta + dtheta * dt;
    ensure_finite(&next, "continuous step")?;
    let frame = orthonormalize(&(&state.frame + dframe * dt))?;
    Ok(SaddleState {
        prev_theta: state.theta.clone(),
        theta: next,
        frame,
        t: state.t + 1,
        since_restart: state.since_restart + 1,
        eigen_misses: state.eigen_misses,
    })
}

/// Dispatches on the configured scheme.
pub fn step<M: EnergyModel + ?Sized>(
    state: &SaddleState,
    model: &M,
    config: &SolverConfig,
) -> Result<SaddleState> {
    match config.scheme {
        Scheme::Euler => euler_step(state, model, config),
        Scheme::HeavyBall => heavy_ball_step(state, model, config),
        Scheme::Nesterov => nesterov_step(state, model, config),
        Scheme::Continuous { dt, .. } => continuous_step(state, model, config, dt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{make_quadratic, QuadraticMorseBottSpec};

    fn quad(d: usize, m: usize, s: usize) -> crate::energy::QuadraticMorseBott {
        make_quadratic(QuadraticMorseBottSpec::new(d, m, s)).unwrap()
    }

    fn exact_frame(model: &impl EnergyModel, theta: &DVector<f64>, k: usize) -> DMatrix<f64> {
        dense_eigs(&model.hessian(theta)).unwrap().leading_frame(k)
    }

    #[test]
    fn rhs_vanishes_on_manifold() {
        let q = quad(4, 2, 1);
        let theta = DVector::from_vec(vec![0.7, -0.2, 0.0, 0.0]);
        let frame = DMatrix::from_column_slice(4, 1, &[0.6, 0.0, 0.8, 0.0]);
        let (dtheta, _) = hisd_rhs(&theta, &frame, &q, 0.1, 0.1);
        assert_eq!(dtheta, DVector::zeros(4));
    }

    #[test]
    fn exact_eigenvector_is_frame_fixed_point() {
        let q = quad(2, 0, 1);
        let theta = DVector::from_vec(vec![0.3, 0.4]);
        let frame = exact_frame(&q, &theta, 1);
        let (_, dframe) = hisd_rhs(&theta, &frame, &q, 0.1, 1.0);
        assert_eq!(dframe, DMatrix::zeros(2, 1));
    }

    #[test]
    fn frame_along_gradient_gives_pure_ascent() {
        let q = quad(3, 0, 0);
        let theta = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let g = q.gradient(&theta);
        let frame = DMatrix::from_column_slice(3, 1, (&g / g.norm()).as_slice());
        let (dtheta, _) = hisd_rhs(&theta, &frame, &q, 0.1, 0.1);
        assert!((dtheta - &g * 0.1).norm() < 1e-15);
    }

    #[test]
    fn euler_contracts_normal_block() {
        let q = quad(4, 1, 1);
        let theta = DVector::from_vec(vec![0.5, 0.2, -0.4, 1.0]);
        let state = SaddleState::new(theta.clone(), exact_frame(&q, &theta, 1)).unwrap();
        let cfg = SolverConfig::new(1, 0.1, Scheme::Euler);
        let next = euler_step(&state, &q, &cfg).unwrap();
        assert_eq!(next.theta[0], 0.5);
        for i in 1..4 {
            assert!((next.theta[i] - 0.8 * theta[i]).abs() < 1e-16);
        }
        assert_eq!(next.t, 1);
    }

    #[test]
    fn manifold_point_is_fixed_for_every_scheme() {
        let q = quad(5, 2, 2);
        let theta = DVector::from_vec(vec![1.0, -3.0, 0.0, 0.0, 0.0]);
        for scheme in [Scheme::Euler, Scheme::HeavyBall, Scheme::Nesterov] {
            for k in 2..=4 {
                let mut cfg = SolverConfig::new(k, 0.1, scheme);
                cfg.gamma = 0.9;
                let state = SaddleState::new(theta.clone(), exact_frame(&q, &theta, k)).unwrap();
                assert_eq!(step(&state, &q, &cfg).unwrap().theta, theta);
            }
        }
    }

    #[test]
    fn heavy_ball_first_step_has_no_momentum() {
        let q = quad(3, 1, 1);
        let theta = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let state = SaddleState::new(theta.clone(), exact_frame(&q, &theta, 1)).unwrap();
        let mut cfg = SolverConfig::new(1, 0.1, Scheme::HeavyBall);
        cfg.gamma = 0.9;
        let hb = heavy_ball_step(&state, &q, &cfg).unwrap();
        let eu = euler_step(&state, &q, &cfg).unwrap();
        assert_eq!(hb.theta, eu.theta);
    }

    #[test]
    fn nesterov_restarts_on_period() {
        let q = quad(3, 1, 1);
        let theta = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let mut state = SaddleState::new(theta.clone(), exact_frame(&q, &theta, 1)).unwrap();
        let mut cfg = SolverConfig::new(1, 0.1, Scheme::Nesterov);
        cfg.nesterov_restart = 4;
        for t in 1..=9 {
            state = nesterov_step(&state, &q, &cfg).unwrap();
            assert_eq!(state.since_restart, t % 4);
            if t % 4 == 0 {
                assert_eq!(state.prev_theta, state.theta);
            }
        }
    }

    #[test]
    fn non_finite_iterate_reports_divergence() {
        let q = quad(2, 0, 0);
        let theta = DVector::from_vec(vec![1e308, 1e308]);
        let state = SaddleState::new(theta, DMatrix::identity(2, 1)).unwrap();
        let cfg = SolverConfig::new(1, 10.0, Scheme::Euler);
        assert!(matches!(
            euler_step(&state, &q, &cfg),
            Err(Error::Diverged(_))
        ));
    }
}
