//! Eigenpairs of symmetric Hessians: a dense reference solver and a
//! warm-started LOBPCG solver for the few smallest pairs.

mod lobpcg;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::max_abs;

pub use lobpcg::{lobpcg_smallest, LobpcgOptions};

/// Ascending eigenvalues with orthonormal eigenvectors stored as columns.
///
/// Partial solves carry only the first few pairs; `converged` is false when an
/// iterative solver stopped at its iteration cap.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SpectralInfo {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// First `k` eigenvectors as a `d × k` frame.
    pub fn leading_frame(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).into_owned()
    }

    /// Columns `start..start+count` of the eigenvector matrix.
    pub fn frame(&self, start: usize, count: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(start, count).into_owned()
    }

    /// Largest residual `‖H u_p − λ_p u_p‖` over the stored pairs.
    pub fn max_residual(&self, h: &DMatrix<f64>) -> f64 {
        (0..self.len())
            .map(|p| {
                let u = self.eigenvectors.column(p);
                (h * u - u * self.eigenvalues[p]).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
///
/// Each eigenvector is normalized so that its largest-magnitude component is
/// positive (first such index on ties), making the output deterministic.
pub fn dense_eigs(h: &DMatrix<f64>) -> Result<SpectralInfo> {
    let d = h.nrows();
    if h.ncols() != d {
        return Err(Error::precondition(format!(
            "matrix is {}x{}, expected square",
            d,
            h.ncols()
        )));
    }
    let asym = max_abs(&(h - h.transpose()));
    let scale = max_abs(h).max(1.0);
    if !(asym <= 1e-10 * scale) {
        return Err(Error::precondition(format!(
            "matrix is not symmetric: max |H - Hᵀ| = {asym:e}"
        )));
    }
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralInfo {
        eigenvalues,
        eigenvectors,
        converged: true,
        iterations: 0,
    })
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Flips each column of `new` whose inner product with the matching column
/// of `prev` is negative. Zero inner products leave the column unchanged.
pub fn align_signs(new: &DMatrix<f64>, prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if new.shape() != prev.shape() {
        return Err(Error::precondition(format!(
            "frame shapes differ: {:?} vs {:?}",
            new.shape(),
            prev.shape()
        )));
    }
    let mut out = new.clone();
    for j in 0..new.ncols() {
        if new.column(j).dot(&prev.column(j)) < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    Ok(out)
}
