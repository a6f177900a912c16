//! LAPACK-backed dense eigensolver for test oracles.
//!
//! nalgebra's SymmetricEigen eigenvalues are fine, but its eigenvectors
//! can be off by 1e-6 on well-conditioned matrices (measured against
//! 50-digit arithmetic), which is far too loose to referee head weights
//! at 1e-10. dsyevd through ndarray-linalg does not have that problem,
//! so oracle comparisons route through here. Test builds only; nothing
//! in the library proper links LAPACK.

use nalgebra::DMatrix;
use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};

/// Ascending eigenvalues with the squared first component of each
/// orthonormal eigenvector.
pub fn head_eigendecomposition(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let a = Array2::from_shape_fn((n, n), |(i, j)| m[(i, j)]);
    let (vals, vecs) = a.eigh(UPLO::Lower).expect("dense eigendecomposition");
    // eigh returns ascending order already; keep a sort for safety
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let eigenvalues = idx.iter().map(|&i| vals[i]).collect();
    let weights = idx
        .iter()
        .map(|&i| {
            let v0 = vecs[(0, i)];
            v0 * v0
        })
        .collect();
    (eigenvalues, weights)
}
