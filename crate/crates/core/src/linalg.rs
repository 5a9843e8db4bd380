//! Small dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest entrywise deviation of `VᵀV` from the identity.
pub fn orthonormality_error(frame: &DMatrix<f64>) -> f64 {
    let gram = frame.transpose() * frame;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Thin QR of `frame` by modified Gram–Schmidt with one reorthogonalization
/// pass, returning the orthonormal factor (R has a positive diagonal). An
/// already orthonormal coordinate frame is returned unchanged, bit for bit.
///
/// Fails when the columns are numerically rank deficient.
pub fn orthonormalize(frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = frame.ncols();
    if k > frame.nrows() {
        return Err(Error::precondition(format!(
            "cannot orthonormalize {k} columns in dimension {}",
            frame.nrows()
        )));
    }
    let mut q = frame.clone();
    for j in 0..k {
        let original = q.column(j).norm();
        let mut col = q.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let c = qi.dot(&col);
                if c != 0.0 {
                    col.axpy(-c, &qi, 1.0);
                }
            }
        }
        let norm = col.norm();
        if !norm.is_finite() || !(norm > 1e-13 * original) {
            return Err(Error::Breakdown(format!(
                "frame column {j} is linearly dependent on the previous ones"
            )));
        }
        if norm != 1.0 {
            col /= norm;
        }
        q.set_column(j, &col);
    }
    Ok(q)
}

/// Applies the HiSD reflector `(I - 2 V Vᵀ) g`.
pub fn reflect(frame: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if frame.ncols() == 0 {
        return g.clone();
    }
    let coeffs = frame.tr_mul(g);
    g - (frame * coeffs) * 2.0
}

/// Orthogonal projector `V Vᵀ` onto the span of an orthonormal frame.
pub fn projector(frame: &DMatrix<f64>) -> DMatrix<f64> {
    frame * frame.transpose()
}

/// Spectral norm of a symmetric matrix (largest eigenvalue magnitude).
pub fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Vector of i.i.d. standard normal entries.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, dim);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Random `dim × cols` matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, dim: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(dim, cols, |_, _| rng.sample(StandardNormal));
        if let Ok(q) = orthonormalize(&m) {
            return q;
        }
    }
}

/// Orthonormal basis of the orthogonal complement of `span(frame)`.
pub fn orthogonal_complement(frame: &DMatrix<f64>) -> DMatrix<f64> {
    let d = frame.nrows();
    let m = frame.ncols();
    let p = DMatrix::identity(d, d) - projector(frame);
    let eig = p.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<DVector<f64>> = order
        .into_iter()
        .take(d - m)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    DMatrix::from_columns(&cols)
}
