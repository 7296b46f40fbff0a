//! Dense symmetric eigendecomposition with a reproducible ordering.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::FactorMatrix;

/// Relative asymmetry tolerated on input, scaled by `max(1, max|s_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Top-`k` eigenpairs of a symmetric matrix.
///
/// Eigenvalues come back in descending order; equal eigenvalues keep the
/// solver's original index order. Each eigenvector is signed so that its
/// largest-magnitude entry (the first one, on ties) is positive.
pub fn eig_sym_topk(s: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, FactorMatrix)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, s.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::EigenRank { k, n });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    // nalgebra only reads the lower triangle; symmetrize so both halves count.
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100 * n.max(10)).ok_or(Error::EigenFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut vectors = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
        values.push(eig.eigenvalues[src]);
    }
    Ok((values, FactorMatrix::new(vectors)?))
}
