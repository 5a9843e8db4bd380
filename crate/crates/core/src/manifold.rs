//! Geometry of linear critical manifolds and the diagnostics built on it:
//! nearest-point projection, subspace distances, spectrum classification,
//! the descent functional, gradient-alignment quantities and tube constants.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_eigs, SpectralInfo};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::linalg::{
    orthogonal_complement, orthonormality_error, projector, random_unit_vector,
    symmetric_spectral_norm,
};

/// An affine critical manifold `anchor + span(basis)` with orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearManifoldSpec {
    anchor: DVector<f64>,
    basis: DMatrix<f64>,
}

impl LinearManifoldSpec {
    pub fn new(anchor: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != anchor.len() {
            return Err(Error::precondition(format!(
                "basis has {} rows but anchor has dimension {}",
                basis.nrows(),
                anchor.len()
            )));
        }
        if basis.ncols() > 0 {
            let drift = orthonormality_error(&basis);
            if !(drift <= 1e-12) {
                return Err(Error::precondition(format!(
                    "manifold basis is not orthonormal (max |BᵀB - I| = {drift:e})"
                )));
            }
        }
        Ok(Self { anchor, basis })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Manifold dimension `m`.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        project_linear(theta, self)
    }

    /// `‖θ − P_M(θ)‖`.
    pub fn distance(&self, theta: &DVector<f64>) -> f64 {
        (theta - self.project(theta)).norm()
    }

    /// Orthonormal basis of the normal space.
    pub fn normal_basis(&self) -> DMatrix<f64> {
        orthogonal_complement(&self.basis)
    }
}

/// Nearest point of `spec` to `theta`: `anchor + B Bᵀ (θ − anchor)`.
pub fn project_linear(theta: &DVector<f64>, spec: &LinearManifoldSpec) -> DVector<f64> {
    let offset = theta - &spec.anchor;
    let coords = spec.basis.tr_mul(&offset);
    &spec.anchor + &spec.basis * coords
}

/// Spectral norm of the difference of the orthogonal projectors onto the
/// spans of two orthonormal frames. Lies in `[0, 1]` and is exactly symmetric.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::precondition(format!(
            "frames have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let pa = projector(a);
    let pb = projector(b);
    let forward = symmetric_spectral_norm(&(&pa - &pb));
    let backward = symmetric_spectral_norm(&(&pb - &pa));
    Ok(forward.max(backward).clamp(0.0, 1.0))
}

/// Counts of negative, zero and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumSignature {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Classifies eigenvalues against `zero_tol`, defaulting to
/// `1e-8 · max|λ|`.
pub fn classify_spectrum(info: &SpectralInfo, zero_tol: Option<f64>) -> SpectrumSignature {
    let scale = info.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = zero_tol.unwrap_or(1e-8 * scale);
    let mut sig = SpectrumSignature {
        negative: 0,
        zero: 0,
        positive: 0,
    };
    for &v in info.eigenvalues.iter() {
        if v < -tol {
            sig.negative += 1;
        } else if v > tol {
            sig.positive += 1;
        } else {
            sig.zero += 1;
        }
    }
    sig
}

/// A linear critical manifold together with the index `s` and nullity `m` of
/// its points.
#[derive(Debug, Clone)]
pub struct ManifoldContext {
    pub spec: LinearManifoldSpec,
    pub index: usize,
    pub nullity: usize,
}

impl ManifoldContext {
    /// Checks that the anchor is critical and that the Hessian kernel there
    /// has exactly the manifold's dimension, then records the index.
    pub fn classify<M: EnergyModel + ?Sized>(
        model: &M,
        spec: LinearManifoldSpec,
        zero_tol: Option<f64>,
    ) -> Result<Self> {
        if spec.ambient_dim() != model.dim() {
            return Err(Error::precondition(format!(
                "manifold lives in R^{} but the model has dimension {}",
                spec.ambient_dim(),
                model.dim()
            )));
        }
        let g = model.gradient(spec.anchor()).norm();
        if !(g <= 1e-10) {
            return Err(Error::precondition(format!(
                "manifold anchor is not critical: gradient norm {g:e}"
            )));
        }
        let info = dense_eigs(&model.hessian(spec.anchor()))?;
        let sig = classify_spectrum(&info, zero_tol);
        if sig.zero != spec.dim() {
            return Err(Error::precondition(format!(
                "Hessian kernel at the anchor has dimension {} but the manifold has dimension {}",
                sig.zero,
                spec.dim()
            )));
        }
        Ok(Self {
            index: sig.negative,
            nullity: spec.dim(),
            spec,
        })
    }
}

/// Tube and spectral constants of a critical manifold neighbourhood.
///
/// `hessian_lipschitz` is `M`, `eig_cap` is `L`, `gap` is `μ` and `delta` the
/// tube radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub hessian_lipschitz: f64,
    pub eig_cap: f64,
    pub gap: f64,
    pub delta: f64,
    /// Whether the values are Monte-Carlo estimates rather than exact.
    pub empirical: bool,
    pub samples: usize,
    pub seed: u64,
}

impl AnalysisConstants {
    /// Subspace-perturbation constant `C = 2M/μ`.
    pub fn c(&self) -> f64 {
        2.0 * self.hessian_lipschitz / self.gap
    }

    /// Radius `r̂(β) = 2μ²β / ((5μβ + 4) M)`; infinite when `M = 0`.
    pub fn r_hat(&self, beta: f64) -> f64 {
        let mu = self.gap;
        let denom = (5.0 * mu * beta + 4.0) * self.hessian_lipschitz;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            2.0 * mu * mu * beta / denom
        }
    }

    /// `M δ ≤ μ / 4`.
    pub fn tube_condition(&self) -> bool {
        self.hessian_lipschitz * self.delta <= self.gap / 4.0
    }

    /// Largest step size covered by the one-step contraction estimate,
    /// `2 / (L + μ)`.
    pub fn step_cap(&self) -> f64 {
        2.0 / (self.eig_cap + self.gap)
    }
}

/// Draws points of the tube `{θ : ‖θ − θ̂‖ < δ}` around a patch of the
/// manifold of radius `patch_radius` centred at the anchor.
pub struct TubeSampler<'a> {
    ctx: &'a ManifoldContext,
    normal: DMatrix<f64>,
    pub delta: f64,
    pub patch_radius: f64,
}

impl<'a> TubeSampler<'a> {
    pub fn new(ctx: &'a ManifoldContext, delta: f64, patch_radius: f64) -> Self {
        Self {
            normal: ctx.spec.normal_basis(),
            ctx,
            delta,
            patch_radius,
        }
    }

    /// A manifold point within `patch_radius` of the anchor.
    pub fn manifold_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let m = self.ctx.spec.dim();
        let anchor = self.ctx.spec.anchor().clone();
        if m == 0 || self.patch_radius == 0.0 {
            return anchor;
        }
        let dir = random_unit_vector(rng, m);
        let radius = self.patch_radius * rng.random::<f64>().powf(1.0 / m as f64);
        anchor + self.ctx.spec.basis() * (dir * radius)
    }

    /// Returns `(θ, θ̂)` with `0 < ‖θ − θ̂‖ ≤ δ` along a random normal direction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let base = self.manifold_point(rng);
        let n = self.normal.ncols();
        if n == 0 {
            return (base.clone(), base);
        }
        let dir = random_unit_vector(rng, n);
        let radius = self.delta * (1.0 - rng.random::<f64>());
        (&base + &self.normal * (dir * radius), base)
    }
}

/// Monte-Carlo estimates of `M`, `L` and `μ` over the tube.
///
/// The first sample is always the anchor itself. `M` is the largest quotient
/// `‖H(θ_i) − H(θ_j)‖ / ‖θ_i − θ_j‖` over each sample paired with the anchor
/// and with its next four successors.
pub fn estimate_constants<M: EnergyModel + ?Sized>(
    model: &M,
    ctx: &ManifoldContext,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<AnalysisConstants> {
    if !(delta > 0.0) || samples == 0 {
        return Err(Error::precondition(
            "need delta > 0 and at least one sample",
        ));
    }
    let (s, m) = (ctx.index, ctx.nullity);
    let sampler = TubeSampler::new(ctx, delta, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![ctx.spec.anchor().clone()];
    while points.len() < samples {
        points.push(sampler.sample(&mut rng).0);
    }
    let hessians: Vec<DMatrix<f64>> = points.iter().map(|p| model.hessian(p)).collect();

    let mut eig_cap = 0.0f64;
    let mut gap = f64::INFINITY;
    for h in &hessians {
        let info = dense_eigs(h)?;
        let lam = &info.eigenvalues;
        eig_cap = eig_cap.max(lam.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if s >= 1 {
            gap = gap.min(lam[s - 1].abs());
        }
        if s + m < lam.len() {
            gap = gap.min(lam[s + m].abs());
        }
    }

    let mut lipschitz = 0.0f64;
    let n = points.len();
    for i in 0..n {
        let partners = std::iter::once(0).chain((1..=4).map(|o| (i + o) % n));
        for j in partners {
            if j == i {
                continue;
            }
            let dist = (&points[i] - &points[j]).norm();
            if dist > 0.0 {
                let diff = symmetric_spectral_norm(&(&hessians[i] - &hessians[j]));
                lipschitz = lipschitz.max(diff / dist);
            }
        }
    }

    Ok(AnalysisConstants {
        hessian_lipschitz: lipschitz,
        eig_cap,
        gap,
        delta,
        empirical: true,
        samples: n,
        seed,
    })
}

/// Descent functional `K(θ) = −gᵀ H (I − 2 Σ_{p≤s} u_p u_pᵀ − 2 W Wᵀ) g`.
///
/// `w_frame` must be an orthonormal `d × (k − s)` frame inside the span of
/// eigenvectors `s+1..s+m` of the Hessian at `theta`.
pub fn descent_functional<M: EnergyModel + ?Sized>(
    theta: &DVector<f64>,
    model: &M,
    k: usize,
    s: usize,
    m: usize,
    w_frame: &DMatrix<f64>,
) -> Result<f64> {
    if k < s || k > s + m {
        return Err(Error::precondition(format!(
            "index k = {k} outside [s, s+m] = [{s}, {}]",
            s + m
        )));
    }
    if w_frame.ncols() != k - s || w_frame.nrows() != model.dim() {
        return Err(Error::precondition(format!(
            "W frame has shape {:?}, expected ({}, {})",
            w_frame.shape(),
            model.dim(),
            k - s
        )));
    }
    let h = model.hessian(theta);
    let info = dense_eigs(&h)?;
    if w_frame.ncols() > 0 {
        let u_mid = info.frame(s, m);
        let outside = (w_frame - &u_mid * u_mid.tr_mul(w_frame)).norm();
        if !(orthonormality_error(w_frame) <= 1e-10 && outside <= 1e-8) {
            return Err(Error::precondition(
                "W frame must be orthonormal and lie in the near-kernel eigenspace",
            ));
        }
    }
    let g = model.gradient(theta);
    let mut dir = g.clone();
    for p in 0..s {
        let u = info.eigenvectors.column(p);
        dir.axpy(-2.0 * u.dot(&g), &u, 1.0);
    }
    if w_frame.ncols() > 0 {
        dir -= w_frame * w_frame.tr_mul(&g) * 2.0;
    }
    Ok(-g.dot(&(h * dir)))
}

/// Gradient-alignment quantities at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// `|⟨u, ∇E⟩|`.
    pub y: f64,
    /// Norm of the gradient component orthogonal to `u`.
    pub z: f64,
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub u: DVector<f64>,
}

impl AlignmentReport {
    pub fn ratio_z_over_g(&self) -> f64 {
        if self.grad_norm == 0.0 {
            0.0
        } else {
            self.z / self.grad_norm
        }
    }

    pub fn ratio_z_over_y(&self) -> f64 {
        if self.y == 0.0 {
            if self.z == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.z / self.y
        }
    }
}

/// Picks `λ_min`: the eigenvalue of smaller magnitude between `λ_s` and
/// `λ_{s+m+1}` (1-based), preferring `λ_s` on ties. Returns its position.
pub fn select_lambda_min(info: &SpectralInfo, s: usize, m: usize) -> Result<usize> {
    let d = info.len();
    let lower = (s >= 1).then(|| s - 1);
    let upper = (s + m < d).then_some(s + m);
    match (lower, upper) {
        (Some(a), Some(b)) => {
            if info.eigenvalues[b].abs() < info.eigenvalues[a].abs() {
                Ok(b)
            } else {
                Ok(a)
            }
        }
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(Error::precondition(
            "no eigenvalue outside the near-kernel cluster (s = 0 and m = d)",
        )),
    }
}

/// Alignment quantities from a precomputed gradient and full spectrum.
pub fn alignment_from_parts(
    g: &DVector<f64>,
    info: &SpectralInfo,
    s: usize,
    m: usize,
) -> Result<AlignmentReport> {
    let idx = select_lambda_min(info, s, m)?;
    let u = info.eigenvectors.column(idx).into_owned();
    let along = u.dot(g);
    let z = (g - &u * along).norm();
    Ok(AlignmentReport {
        y: along.abs(),
        z,
        grad_norm: g.norm(),
        lambda_min: info.eigenvalues[idx],
        u,
    })
}

pub fn alignment_report<M: EnergyModel + ?Sized>(
    theta: &DVector<f64>,
    model: &M,
    s: usize,
    m: usize,
) -> Result<AlignmentReport> {
    let info = dense_eigs(&model.hessian(theta))?;
    alignment_from_parts(&model.gradient(theta), &info, s, m)
}

/// Asymptotic distance estimate `‖∇E(θ)‖ / |λ_min|`.
pub fn error_estimate<M: EnergyModel + ?Sized>(
    theta: &DVector<f64>,
    model: &M,
    s: usize,
    m: usize,
) -> Result<f64> {
    let report = alignment_report(theta, model, s, m)?;
    if report.lambda_min.abs() < 1e-14 {
        return Err(Error::UndefinedEstimate(format!(
            "|lambda_min| = {:e} is below 1e-14",
            report.lambda_min.abs()
        )));
    }
    Ok(report.grad_norm / report.lambda_min.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{make_quadratic, QuadraticMorseBottSpec};
    use crate::linalg::random_orthonormal;

    fn quad(d: usize, m: usize, s: usize) -> crate::energy::QuadraticMorseBott {
        make_quadratic(QuadraticMorseBottSpec::new(d, m, s)).unwrap()
    }

    #[test]
    fn projection_onto_coordinate_manifold() {
        let q = quad(4, 2, 1);
        let spec = q.manifold();
        let theta = DVector::from_vec(vec![1.5, -2.0, 0.3, 0.7]);
        let hat = spec.project(&theta);
        assert_eq!(hat, DVector::from_vec(vec![1.5, -2.0, 0.0, 0.0]));
        assert_eq!(spec.project(&hat), hat);
    }

    #[test]
    fn subspace_distance_cases() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(subspace_distance(&e1, &e1).unwrap(), 0.0);
        assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let a = std::f64::consts::FRAC_PI_6;
        let tilted = DMatrix::from_column_slice(2, 1, &[a.cos(), a.sin()]);
        assert!((subspace_distance(&e1, &tilted).unwrap() - 0.5).abs() < 1e-15);
        let bad = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(subspace_distance(&e1, &bad).is_err());
    }

    #[test]
    fn classify_known_spectra() {
        let info = dense_eigs(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.0, -2.0, 2.0, 2.0,
        ])))
        .unwrap();
        let sig = classify_spectrum(&info, None);
        assert_eq!((sig.negative, sig.zero, sig.positive), (1, 1, 2));
        let info = dense_eigs(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 3.0, 0.5,
        ])))
        .unwrap();
        assert_eq!(
            classify_spectrum(&info, None),
            SpectrumSignature {
                negative: 0,
                zero: 0,
                positive: 3
            }
        );
    }

    #[test]
    fn descent_functional_on_pure_minimum() {
        // H = 2I: K = -gᵀ H g = -(2y)ᵀ 2 (2y) = -8‖y‖².
        let q = quad(2, 0, 0);
        let theta = DVector::from_vec(vec![0.3, -1.1]);
        let k = descent_functional(&theta, &q, 0, 0, 0, &DMatrix::zeros(2, 0)).unwrap();
        let expect = -8.0 * theta.norm_squared();
        assert!((k - expect).abs() <= 1e-14 * expect.abs());
    }

    #[test]
    fn descent_functional_zero_on_manifold_and_index_checked() {
        let q = quad(4, 2, 1);
        let theta = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(
            descent_functional(&theta, &q, 1, 1, 2, &DMatrix::zeros(4, 0)).unwrap(),
            0.0
        );
        assert!(descent_functional(&theta, &q, 0, 1, 2, &DMatrix::zeros(4, 0)).is_err());
        assert!(descent_functional(&theta, &q, 4, 1, 2, &DMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn lambda_min_tie_prefers_lower_candidate() {
        let q = quad(3, 1, 1);
        let report = alignment_report(&DVector::from_vec(vec![0.0, 0.4, 0.2]), &q, 1, 1).unwrap();
        assert_eq!(report.lambda_min, -2.0);
    }

    #[test]
    fn parallel_gradient_has_zero_z() {
        let q = quad(3, 1, 1);
        let report = alignment_report(&DVector::from_vec(vec![5.0, 0.4, 0.0]), &q, 1, 1).unwrap();
        assert_eq!(report.z, 0.0);
        assert_eq!(report.ratio_z_over_g(), 0.0);
        assert!((report.y - 0.8).abs() < 1e-15);
    }

    #[test]
    fn alignment_edge_cases() {
        // s = 0: only the candidate above the cluster exists.
        let q = quad(3, 1, 0);
        let r = alignment_report(&DVector::from_vec(vec![0.0, 1.0, 1.0]), &q, 0, 1).unwrap();
        assert_eq!(r.lambda_min, 2.0);
        // s + m = d: only λ_s.
        let q = quad(2, 1, 1);
        let r = alignment_report(&DVector::from_vec(vec![0.0, 1.0]), &q, 1, 1).unwrap();
        assert_eq!(r.lambda_min, -2.0);
        // s = 0 and m = d: nothing to align with.
        let q = quad(2, 2, 0);
        assert!(alignment_report(&DVector::zeros(2), &q, 0, 2).is_err());
    }

    #[test]
    fn error_estimate_is_exact_distance_on_quadratic() {
        let q = quad(3, 1, 1);
        let theta = DVector::from_vec(vec![0.0, 0.6, 0.0]);
        let est = error_estimate(&theta, &q, 1, 1).unwrap();
        assert!((est - 0.6).abs() < 1e-15);
        let on = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        assert_eq!(error_estimate(&on, &q, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_constants_are_exact() {
        let q = quad(5, 2, 1);
        let ctx = ManifoldContext::classify(&q, q.manifold(), None).unwrap();
        assert_eq!((ctx.index, ctx.nullity), (1, 2));
        let c = estimate_constants(&q, &ctx, 0.3, 50, 1).unwrap();
        assert_eq!(c.hessian_lipschitz, 0.0);
        assert_eq!(c.eig_cap, 2.0);
        assert_eq!(c.gap, 2.0);
        assert!(c.tube_condition());
        assert_eq!(c.r_hat(0.1), f64::INFINITY);
        let at_anchor = estimate_constants(&q, &ctx, 0.3, 1, 1).unwrap();
        assert_eq!(at_anchor.samples, 1);
        assert_eq!(at_anchor.gap, 2.0);
    }

    #[test]
    fn tube_samples_stay_in_tube() {
        let q = quad(6, 2, 2);
        let ctx = ManifoldContext::classify(&q, q.manifold(), None).unwrap();
        let sampler = TubeSampler::new(&ctx, 0.2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let (theta, hat) = sampler.sample(&mut rng);
            assert!(ctx.spec.distance(&hat) < 1e-15);
            let r = (&theta - &hat).norm();
            assert!(r > 0.0 && r <= 0.2 + 1e-15);
            assert!((ctx.spec.project(&theta) - &hat).norm() < 1e-14);
        }
    }

    #[test]
    fn random_frames_distance_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_orthonormal(&mut rng, 6, 2);
            let b = random_orthonormal(&mut rng, 6, 2);
            let ab = subspace_distance(&a, &b).unwrap();
            assert_eq!(ab, subspace_distance(&b, &a).unwrap());
            assert!((0.0..=1.0).contains(&ab));
        }
    }
}
