//! Locally optimal block preconditioned conjugate gradient for the `k`
//! smallest eigenpairs, identity preconditioner.
//!
//! The search space `[X, W, P]` is explicitly orthonormalized every iteration
//! (Gram–Schmidt with one reorthogonalization pass), so the Rayleigh–Ritz
//! projection is a standard symmetric eigenproblem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SpectralInfo;
use crate::error::{Error, Result};
use crate::linalg::{orthonormality_error, orthonormalize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobpcgOptions {
    /// Residual tolerance relative to the running estimate of `‖H‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Computes the `V0.ncols()` smallest eigenpairs of the symmetric operator
/// `apply`, starting from the orthonormal block `v0`.
///
/// Hitting `max_iter` is not an error: the best Ritz pairs are returned with
/// `converged = false`.
pub fn lobpcg_smallest<F>(
    mut apply: F,
    v0: &DMatrix<f64>,
    opts: &LobpcgOptions,
) -> Result<SpectralInfo>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let (d, k) = v0.shape();
    if k == 0 || k > d {
        return Err(Error::precondition(format!(
            "block size {k} must be in 1..={d}"
        )));
    }
    let drift = orthonormality_error(v0);
    if !(drift <= 1e-10) {
        return Err(Error::precondition(format!(
            "warm-start block is not orthonormal (max |VᵀV - I| = {drift:e})"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::precondition("LOBPCG tolerance must be positive"));
    }

    match run(&mut apply, v0.clone(), opts) {
        Ok(info) => Ok(info),
        Err(Restart(x)) => {
            let x = orthonormalize(&x).map_err(|e| {
                Error::Breakdown(format!(
                    "cannot re-orthonormalize block after breakdown: {e}"
                ))
            })?;
            run(&mut apply, x, opts)
                .map_err(|_| Error::Breakdown("search block lost rank again after restart".into()))
        }
    }
}

/// Signals that the block degenerated; carries the block to restart from.
struct Restart(DMatrix<f64>);

fn apply_block<F>(apply: &mut F, block: &DMatrix<f64>) -> DMatrix<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let cols: Vec<DVector<f64>> = block
        .column_iter()
        .map(|c| apply(&c.into_owned()))
        .collect();
    DMatrix::from_columns(&cols)
}

/// Eigen-decomposition of `Qᵀ A Q`, ascending.
fn rayleigh_ritz(q: &DMatrix<f64>, aq: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut t = q.transpose() * aq;
    let n = t.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (t[(i, j)] + t[(j, i)]);
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    if t.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Some((vals, vecs))
}

/// Appends the columns of `candidates` to the orthonormal `basis`, dropping
/// those that are numerically inside the current span.
fn extend_basis(basis: &mut Vec<DVector<f64>>, candidates: &DMatrix<f64>) {
    for c in candidates.column_iter() {
        let mut v = c.into_owned();
        let original = v.norm();
        if !(original > 0.0) {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let coeff = b.dot(&v);
                v.axpy(-coeff, b, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-12 * original && n > 1e-200 {
            basis.push(v / n);
        }
    }
}

fn run<F>(apply: &mut F, x0: DMatrix<f64>, opts: &LobpcgOptions) -> Result<SpectralInfo, Restart>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let k = x0.ncols();
    let ax0 = apply_block(apply, &x0);
    let (vals, vecs) = rayleigh_ritz(&x0, &ax0).ok_or_else(|| Restart(x0.clone()))?;
    let mut x = &x0 * &vecs;
    let mut ax = &ax0 * &vecs;
    let mut lambda = vals;
    let mut p: Option<DMatrix<f64>> = None;
    let mut h_norm = lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    for iter in 0..=opts.max_iter {
        let mut r = ax.clone();
        for j in 0..k {
            r.column_mut(j).axpy(-lambda[j], &x.column(j), 1.0);
        }
        let worst = r.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !worst.is_finite() {
            return Err(Restart(x));
        }
        let threshold = opts.tol * h_norm.max(f64::MIN_POSITIVE);
        if worst <= threshold || iter == opts.max_iter {
            return Ok(SpectralInfo {
                eigenvalues: lambda,
                eigenvectors: x,
                converged: worst <= threshold,
                iterations: iter,
            });
        }
        if orthonormality_error(&x) > 1e-8 {
            return Err(Restart(x));
        }

        let mut basis: Vec<DVector<f64>> = x.column_iter().map(|c| c.into_owned()).collect();
        extend_basis(&mut basis, &r);
        if let Some(p) = &p {
            extend_basis(&mut basis, p);
        }
        let extra = basis.len() - k;
        if extra == 0 {
            // Residual directions are inside span(X): X is invariant.
            return Ok(SpectralInfo {
                eigenvalues: lambda,
                eigenvectors: x,
                converged: true,
                iterations: iter,
            });
        }
        let q = DMatrix::from_columns(&basis);
        let q_new = q.columns(k, extra).into_owned();
        let aq_new = apply_block(apply, &q_new);
        let mut aq = DMatrix::zeros(q.nrows(), k + extra);
        aq.columns_mut(0, k).copy_from(&ax);
        aq.columns_mut(k, extra).copy_from(&aq_new);

        let (vals, vecs) = rayleigh_ritz(&q, &aq).ok_or_else(|| Restart(x.clone()))?;
        h_norm = vals.iter().fold(h_norm, |m, v| m.max(v.abs()));
        let c = vecs.columns(0, k).into_owned();
        x = &q * &c;
        ax = &aq * &c;
        p = Some(&q_new * c.rows(k, extra));
        lambda = vals.rows(0, k).into_owned();
    }
    unreachable!("loop returns at iter == max_iter")
}
