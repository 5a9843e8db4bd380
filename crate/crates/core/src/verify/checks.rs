use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{CheckName, CheckStatus, VerificationReport, VerifyOptions};
use crate::dynamics::{
    initial_frame, run, step, EigenSolverConfig, RunStatus, SaddleState, Scheme, SolverConfig,
    Trajectory, TrajectoryRecord,
};
use crate::eigen::dense_eigs;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal, random_unit_vector};
use crate::manifold::{
    descent_functional, estimate_constants, subspace_distance, AnalysisConstants, ManifoldContext,
    TubeSampler,
};

/// Least-squares slope of `ln r` against `t` over the points with
/// `r > floor`. `None` with fewer than two such points.
pub fn log_slope(records: &[TrajectoryRecord], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.dist.filter(|d| *d > floor).map(|d| (r.t as f64, d.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, ml) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, l)| (a + t / n, b + l / n));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| {
        (a + (t - mt) * (l - ml), b + (t - mt) * (t - mt))
    });
    Some(num / den)
}

/// `z/y` behaviour over the final decade of the distance, i.e. the suffix of
/// the trajectory starting at the first record with `r_t ≤ 10 r_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentTail {
    pub terminal_ratio: f64,
    /// Suffix maximum of `z/y` at the start and at the end of the window.
    pub envelope_start: f64,
    pub envelope_end: f64,
    pub window: usize,
    /// Smallest `y_t / r_t` in the window.
    pub min_y_over_r: f64,
}

impl AlignmentTail {
    /// The envelope strictly drops across the window, or the ratio is 0
    /// throughout.
    pub fn envelope_decreases(&self) -> bool {
        self.envelope_end < self.envelope_start || self.envelope_start == 0.0
    }
}

pub fn alignment_tail(records: &[TrajectoryRecord]) -> Option<AlignmentTail> {
    let r_end = records.last()?.dist?;
    let start = records
        .iter()
        .position(|r| r.dist.is_some_and(|d| d <= 10.0 * r_end))?;
    let window = &records[start..];
    let ratios: Vec<f64> = window
        .iter()
        .map(|r| r.z_over_y().unwrap_or(f64::NAN))
        .collect();
    if ratios.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut envelope = vec![0.0; ratios.len()];
    let mut running = 0.0f64;
    for i in (0..ratios.len()).rev() {
        running = running.max(ratios[i]);
        envelope[i] = running;
    }
    let min_y_over_r = window
        .iter()
        .filter_map(|r| match (r.y, r.dist) {
            (Some(y), Some(d)) if d > 0.0 => Some(y / d),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    Some(AlignmentTail {
        terminal_ratio: *ratios.last()?,
        envelope_start: envelope[0],
        envelope_end: *envelope.last()?,
        window: window.len(),
        min_y_over_r,
    })
}

/// Worst ratios of the subspace and gradient-decomposition bounds over tube
/// samples: `dist(U, Û) / (C r)`, `‖P_U ∇E‖ / (M r²)` and `‖∇E‖ / (L r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeBounds {
    pub max_subspace_ratio: f64,
    pub max_kernel_gradient_ratio: f64,
    pub max_gradient_ratio: f64,
    /// Largest raw `dist(U, Û)`; relevant when `C = 0`.
    pub max_subspace_distance: f64,
    pub samples: usize,
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        value / bound
    } else if value == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn tube_bounds<M: EnergyModel + ?Sized>(
    model: &M,
    ctx: &ManifoldContext,
    constants: &AnalysisConstants,
    samples: usize,
    seed: u64,
) -> Result<TubeBounds> {
    let (s, m) = (ctx.index, ctx.nullity);
    let sampler = TubeSampler::new(ctx, constants.delta, constants.delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TubeBounds {
        max_subspace_ratio: 0.0,
        max_kernel_gradient_ratio: 0.0,
        max_gradient_ratio: 0.0,
        max_subspace_distance: 0.0,
        samples,
    };
    for _ in 0..samples {
        let (theta, hat) = sampler.sample(&mut rng);
        let r = (&theta - &hat).norm();
        let u = dense_eigs(&model.hessian(&theta))?.frame(s, m);
        let u_hat = dense_eigs(&model.hessian(&hat))?.frame(s, m);
        let dist = subspace_distance(&u, &u_hat)?;
        let g = model.gradient(&theta);
        let pu = (&u * u.tr_mul(&g)).norm();
        out.max_subspace_distance = out.max_subspace_distance.max(dist);
        out.max_subspace_ratio = out.max_subspace_ratio.max(ratio(dist, constants.c() * r));
        out.max_kernel_gradient_ratio = out
            .max_kernel_gradient_ratio
            .max(ratio(pu, constants.hessian_lipschitz * r * r));
        out.max_gradient_ratio = out
            .max_gradient_ratio
            .max(ratio(g.norm(), constants.eig_cap * r));
    }
    Ok(out)
}

/// Runs one named check. Every check owns a generator seeded with `seed`.
pub fn check_theorem<M: EnergyModel + ?Sized>(
    name: CheckName,
    model: &M,
    ctx: &ManifoldContext,
    config: &SolverConfig,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<VerificationReport> {
    config.validate()?;
    if !(opts.delta > 0.0 && opts.start_radius > 0.0) {
        return Err(Error::config(
            "verify.delta and verify.start_radius must be positive",
        ));
    }
    let env = Env {
        model,
        ctx,
        config,
        opts,
        seed,
    };
    match name {
        CheckName::Descent => env.descent(),
        CheckName::Stability => env.stability(),
        CheckName::OneStep => env.one_step(),
        CheckName::Rate => env.rate(),
        CheckName::Alignment => env.alignment(),
    }
}

/// Runs several checks concurrently; reports come back in input order.
pub fn check_all<M: EnergyModel + ?Sized>(
    names: &[CheckName],
    model: &M,
    ctx: &ManifoldContext,
    config: &SolverConfig,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<Vec<VerificationReport>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = names
            .iter()
            .map(|&n| scope.spawn(move || check_theorem(n, model, ctx, config, opts, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("check thread panicked"))
            .collect()
    })
}

struct Env<'a, M: ?Sized> {
    model: &'a M,
    ctx: &'a ManifoldContext,
    config: &'a SolverConfig,
    opts: &'a VerifyOptions,
    seed: u64,
}

fn report(check: CheckName, seed: u64) -> VerificationReport {
    VerificationReport {
        check,
        status: CheckStatus::Pass,
        measured: BTreeMap::new(),
        threshold: 0.0,
        samples: 0,
        seed,
        note: String::new(),
        replay: None,
    }
}

fn append_note(r: &mut VerificationReport, text: &str) {
    if !r.note.is_empty() {
        r.note.push_str("; ");
    }
    r.note.push_str(text);
}

fn theta_json(theta: &DVector<f64>) -> serde_json::Value {
    json!(theta.iter().copied().collect::<Vec<_>>())
}

impl<M: EnergyModel + ?Sized> Env<'_, M> {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn sampler(&self) -> TubeSampler<'_> {
        TubeSampler::new(
            self.ctx,
            self.opts.delta,
            self.opts.patch_radius.unwrap_or(self.opts.delta),
        )
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let (s, m) = (self.ctx.index, self.ctx.nullity);
        if k < s || k > s + m || k == 0 {
            return Err(Error::precondition(format!(
                "k = {k} is outside the admissible range [max(s,1), s+m] = [{}, {}]",
                s.max(1),
                s + m
            )));
        }
        Ok(())
    }

    fn run_ks(&self) -> Result<Vec<usize>> {
        let ks = self.opts.ks.clone().unwrap_or_else(|| vec![self.config.k]);
        for &k in &ks {
            self.check_k(k)?;
        }
        Ok(ks)
    }

    /// A manifold point near the anchor displaced by exactly `start_radius`
    /// along a random normal direction.
    fn start(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let base = self.sampler().manifold_point(rng);
        let normal = self.ctx.spec.normal_basis();
        if normal.ncols() == 0 {
            return base;
        }
        base + normal
            * (random_unit_vector(rng, self.ctx.spec.ambient_dim() - self.ctx.spec.dim())
                * self.opts.start_radius)
    }

    /// Discrete trajectories from `trajectories` seeded starts for each `k`.
    fn trajectories(
        &self,
        config: &SolverConfig,
    ) -> Result<Vec<(usize, DVector<f64>, Trajectory)>> {
        let mut rng = self.rng();
        let mut out = Vec::new();
        for k in self.run_ks()? {
            let cfg = SolverConfig {
                k,
                ..config.clone()
            };
            for _ in 0..self.opts.trajectories {
                let theta0 = self.start(&mut rng);
                let v0 = initial_frame(self.model, &theta0, k)?;
                let tr = run(self.model, &cfg, theta0.clone(), v0, Some(self.ctx))?;
                out.push((k, theta0, tr));
            }
        }
        Ok(out)
    }

    fn exact_euler(&self) -> SolverConfig {
        SolverConfig {
            scheme: Scheme::Euler,
            eigensolver: EigenSolverConfig::Dense,
            ..self.config.clone()
        }
    }

    fn constants(&self) -> Result<AnalysisConstants> {
        estimate_constants(
            self.model,
            self.ctx,
            self.opts.delta,
            self.opts.constant_samples,
            self.seed,
        )
    }

    fn descent(&self) -> Result<VerificationReport> {
        let (s, m) = (self.ctx.index, self.ctx.nullity);
        let mut rep = report(CheckName::Descent, self.seed);
        let ks: Vec<usize> = match &self.opts.ks {
            Some(ks) => ks.clone(),
            None => (s.max(1)..=s + m).collect(),
        };
        for &k in &ks {
            self.check_k(k)?;
        }
        let sampler = self.sampler();
        let mut rng = self.rng();
        let mut worst = f64::NEG_INFINITY;
        let mut violations = 0usize;
        for &k in &ks {
            for _ in 0..self.opts.descent_samples {
                let (theta, _) = sampler.sample(&mut rng);
                let info = dense_eigs(&self.model.hessian(&theta))?;
                let w = &info.frame(s, m) * random_orthonormal(&mut rng, m, k - s);
                let value = descent_functional(&theta, self.model, k, s, m, &w)?;
                let g2 = self.model.gradient(&theta).norm_squared();
                let scaled = if g2 > 0.0 { value / g2 } else { value };
                worst = worst.max(scaled);
                rep.samples += 1;
                if !(value < 0.0) {
                    violations += 1;
                    if rep.replay.is_none() {
                        rep.replay = Some(json!({
                            "k": k,
                            "theta": theta_json(&theta),
                            "w": w.iter().copied().collect::<Vec<_>>(),
                            "K": value,
                        }));
                    }
                }
            }
        }
        rep.measure("max_K_over_grad2", worst);
        rep.measure("violations", violations as f64);
        rep.threshold = 0.0;
        if violations > 0 {
            rep.status = CheckStatus::Fail;
        }
        append_note(
            &mut rep,
            &format!("k in {ks:?}, tube radius {}", self.opts.delta),
        );
        Ok(rep)
    }

    fn stability(&self) -> Result<VerificationReport> {
        let mut rep = report(CheckName::Stability, self.seed);
        let (dt, horizon) = (self.opts.dt, self.opts.horizon);
        let cfg = SolverConfig {
            scheme: Scheme::Continuous { dt, horizon },
            ..self.config.clone()
        };
        cfg.validate()?;
        let k = cfg.k;
        self.check_k(k)?;
        let steps = (horizon / dt).ceil() as usize;
        let sampler = self.sampler();
        let mut rng = self.rng();
        let tol = self.opts.stability_grad_tol;
        let (mut failed, mut left_tube) = (0usize, 0usize);
        let mut worst_terminal = 0.0f64;
        let mut worst_increase = f64::NEG_INFINITY;
        let mut longest = 0usize;
        for _ in 0..self.opts.stability_runs {
            let (theta0, _) = sampler.sample(&mut rng);
            let mut state =
                SaddleState::new(theta0.clone(), initial_frame(self.model, &theta0, k)?)?;
            let mut g_norm = self.model.gradient(&state.theta).norm();
            let mut lyap = 0.5 * g_norm * g_norm;
            let (mut monotone, mut outside, mut diverged) = (true, false, false);
            let mut taken = 0;
            while taken < steps && g_norm > tol {
                state = match step(&state, self.model, &cfg) {
                    Ok(s) => s,
                    Err(Error::Diverged(_)) => {
                        diverged = true;
                        break;
                    }
                    Err(e) => return Err(e.at_iteration(taken + 1)),
                };
                taken += 1;
                g_norm = self.model.gradient(&state.theta).norm();
                let next = 0.5 * g_norm * g_norm;
                worst_increase = worst_increase.max(next - lyap);
                monotone &= next <= lyap;
                lyap = next;
                outside |= self.ctx.spec.distance(&state.theta) > self.opts.delta;
            }
            longest = longest.max(taken);
            rep.samples += 1;
            worst_terminal = worst_terminal.max(g_norm);
            let ok = monotone && !diverged && g_norm <= tol;
            if outside {
                left_tube += 1;
            } else if !ok {
                failed += 1;
                if rep.replay.is_none() {
                    rep.replay = Some(json!({
                        "theta0": theta_json(&theta0),
                        "k": k,
                        "monotone": monotone,
                        "diverged": diverged,
                        "terminal_grad_norm": g_norm,
                    }));
                }
            }
        }
        rep.threshold = tol;
        rep.measure("max_terminal_grad_norm", worst_terminal);
        rep.measure("max_lyapunov_increase", worst_increase);
        rep.measure("runs_left_tube", left_tube as f64);
        rep.measure("max_steps", longest as f64);
        rep.status = if failed > 0 {
            CheckStatus::Fail
        } else if left_tube > 0 {
            append_note(&mut rep, "some runs left the tube");
            CheckStatus::Inconclusive
        } else {
            CheckStatus::Pass
        };
        append_note(
            &mut rep,
            &format!("k = {k}, dt = {dt}, zeta = {}", cfg.zeta()),
        );
        Ok(rep)
    }

    fn hypothesis_notes(&self, rep: &mut VerificationReport, c: &AnalysisConstants, beta: f64) {
        if beta > c.step_cap() {
            append_note(
                rep,
                &format!("beta = {beta} exceeds 2/(L+mu) = {:e}", c.step_cap()),
            );
        }
        if self.opts.start_radius >= c.r_hat(beta) {
            append_note(
                rep,
                &format!("start radius is not below r_hat = {:e}", c.r_hat(beta)),
            );
        }
    }

    fn one_step(&self) -> Result<VerificationReport> {
        let mut rep = report(CheckName::OneStep, self.seed);
        let c = self.constants()?;
        let beta = self.config.beta;
        let (mu, lip) = (c.gap, c.hessian_lipschitz);
        let factor = 1.0 - mu * beta;
        let exact = lip == 0.0;
        // Relative roundoff allowance for the exact (M = 0) comparison.
        let allowance = 16.0 * f64::EPSILON;
        let mut fitted = f64::NEG_INFINITY;
        let mut violations = 0usize;
        for (k, theta0, tr) in self.trajectories(&self.exact_euler())? {
            if let RunStatus::Diverged { iteration } = tr.status {
                violations += 1;
                append_note(
                    &mut rep,
                    &format!("k = {k}: diverged at iteration {iteration}"),
                );
                rep.replay
                    .get_or_insert_with(|| json!({"k": k, "theta0": theta_json(&theta0)}));
                continue;
            }
            for pair in tr.records.windows(2) {
                let (r0, r1) = (pair[0].dist.unwrap(), pair[1].dist.unwrap());
                if r0 <= self.opts.r_floor {
                    continue;
                }
                rep.samples += 1;
                fitted = fitted.max((r1 - factor * r0) / (r0 * r0));
                if exact && r1 > factor * r0 * (1.0 + allowance) {
                    violations += 1;
                    rep.replay.get_or_insert_with(|| {
                        json!({"k": k, "theta0": theta_json(&theta0), "t": pair[0].t, "r_t": r0, "r_next": r1})
                    });
                }
            }
        }
        let threshold = if exact {
            0.0
        } else {
            self.opts.c_slack * (c.c() + 2.5 * lip * beta)
        };
        rep.threshold = threshold;
        rep.measure("mu", mu);
        rep.measure("M", lip);
        rep.measure("L", c.eig_cap);
        rep.measure("fitted_c", fitted);
        rep.measure("violations", violations as f64);
        let pass = violations == 0 && (exact || fitted <= threshold);
        rep.status = if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        if exact {
            append_note(
                &mut rep,
                "M = 0: checked r_{t+1} <= (1 - mu beta) r_t up to 16 ulp",
            );
        }
        self.hypothesis_notes(&mut rep, &c, beta);
        Ok(rep)
    }

    fn rate(&self) -> Result<VerificationReport> {
        let mut rep = report(CheckName::Rate, self.seed);
        let c = self.constants()?;
        let beta = self.config.beta;
        let threshold = -(1.0 + c.gap * beta).ln() * (1.0 - self.opts.rate_slack);
        let mut worst = f64::NEG_INFINITY;
        let mut failed = false;
        for (k, theta0, tr) in self.trajectories(&self.exact_euler())? {
            rep.samples += 1;
            if let RunStatus::Diverged { iteration } = tr.status {
                failed = true;
                worst = f64::INFINITY;
                append_note(
                    &mut rep,
                    &format!("diverged at iteration {iteration} (k = {k})"),
                );
                rep.replay
                    .get_or_insert_with(|| json!({"k": k, "theta0": theta_json(&theta0)}));
                continue;
            }
            match log_slope(&tr.records, self.opts.r_floor) {
                Some(slope) => {
                    worst = worst.max(slope);
                    if !(slope <= threshold) {
                        failed = true;
                        rep.replay.get_or_insert_with(
                            || json!({"k": k, "theta0": theta_json(&theta0), "slope": slope}),
                        );
                    }
                }
                None => append_note(&mut rep, &format!("k = {k}: too few points above r_floor")),
            }
        }
        rep.threshold = threshold;
        rep.measure("max_slope", worst);
        rep.measure("mu", c.gap);
        rep.measure("r_hat", c.r_hat(beta));
        rep.status = if failed {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        };
        self.hypothesis_notes(&mut rep, &c, beta);
        Ok(rep)
    }

    fn alignment(&self) -> Result<VerificationReport> {
        let mut rep = report(CheckName::Alignment, self.seed);
        let (s, m) = (self.ctx.index, self.ctx.nullity);
        rep.threshold = self.opts.alignment_threshold;
        let lam = dense_eigs(&self.model.hessian(self.ctx.spec.anchor()))?.eigenvalues;
        if s >= 1 && s + m < lam.len() {
            let (a, b) = (lam[s - 1].abs(), lam[s + m].abs());
            if (a - b).abs() <= self.opts.tie_tol * a.max(b) {
                rep.status = CheckStatus::Inconclusive;
                rep.measure("lambda_s", lam[s - 1]);
                rep.measure("lambda_s_m_1", lam[s + m]);
                append_note(
                    &mut rep,
                    "|lambda_s| and |lambda_{s+m+1}| are tied, so lambda_min is not separated",
                );
                return Ok(rep);
            }
        }
        let mut worst_terminal = 0.0f64;
        let mut min_y_over_r = f64::INFINITY;
        let mut failed = false;
        for (k, theta0, tr) in self.trajectories(self.config)? {
            rep.samples += 1;
            let tail = match (tr.status, alignment_tail(&tr.records)) {
                (RunStatus::Diverged { iteration }, _) => {
                    append_note(
                        &mut rep,
                        &format!("diverged at iteration {iteration} (k = {k})"),
                    );
                    None
                }
                (_, t) => t,
            };
            let Some(tail) = tail else {
                failed = true;
                rep.replay
                    .get_or_insert_with(|| json!({"k": k, "theta0": theta_json(&theta0)}));
                continue;
            };
            worst_terminal = worst_terminal.max(tail.terminal_ratio);
            min_y_over_r = min_y_over_r.min(tail.min_y_over_r);
            if !(tail.terminal_ratio <= self.opts.alignment_threshold && tail.envelope_decreases())
            {
                failed = true;
                rep.replay.get_or_insert_with(|| {
                    json!({
                        "k": k,
                        "theta0": theta_json(&theta0),
                        "terminal_ratio": tail.terminal_ratio,
                        "envelope_start": tail.envelope_start,
                        "envelope_end": tail.envelope_end,
                    })
                });
            }
        }
        rep.measure("max_terminal_z_over_y", worst_terminal);
        rep.measure("min_tail_y_over_r", min_y_over_r);
        rep.status = if failed {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        };
        Ok(rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, dist: f64, y: f64, z: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            energy: 0.0,
            grad_norm: (y * y + z * z).sqrt(),
            dist: Some(dist),
            y: Some(y),
            z: Some(z),
            z_over_g: None,
            lambda_min: None,
        }
    }

    #[test]
    fn slope_of_geometric_sequence() {
        let recs: Vec<_> = (0..40)
            .map(|t| rec(t, 0.5f64.powi(t as i32), 1.0, 0.0))
            .collect();
        let slope = log_slope(&recs, 0.0).unwrap();
        assert!((slope - 0.5f64.ln()).abs() < 1e-12);
        assert!(log_slope(&recs[..1], 0.0).is_none());
    }

    #[test]
    fn tail_window_is_final_decade() {
        let recs: Vec<_> = (0..10)
            .map(|t| rec(t, 10f64.powi(-(t as i32) / 2), 1.0, 2f64.powi(-(t as i32))))
            .collect();
        let tail = alignment_tail(&recs).unwrap();
        assert_eq!(tail.window, 4);
        assert_eq!(tail.terminal_ratio, 2f64.powi(-9));
        assert!(tail.envelope_decreases());
        let flat: Vec<_> = (0..5).map(|t| rec(t, 1.0, 1.0, 0.5)).collect();
        assert!(!alignment_tail(&flat).unwrap().envelope_decreases());
    }
}
