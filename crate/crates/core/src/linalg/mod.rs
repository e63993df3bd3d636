//! Dense matrices, sparse three-way tensors and their factorizations.

mod cp;
mod dense;
mod svd;
mod tensor;

pub use cp::{cp_als, cp_als_with, cp_reconstruct, CpFactors, CpInit, CpOptions, RECONSTRUCT_LIMIT};
pub use dense::DenseMatrix;
pub use svd::{
    dense_truncated_svd, randomized_svd, truncated_svd, RandomizedSvdOptions, SvdFactors,
    DENSE_SVD_MAX_DIM,
};
pub use tensor::SparseTensor3;

use nalgebra::{DMatrix, SymmetricEigen};

/// Flips the sign of column `col` in `m`.
pub(crate) fn negate_column(m: &mut DMatrix<f64>, col: usize) {
    m.column_mut(col).iter_mut().for_each(|x| *x = -*x);
}

/// Index of the entry with the largest magnitude (first one on ties).
pub(crate) fn argmax_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        let a = v.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((idx, a));
        }
    }
    best.map(|(idx, _)| idx)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvector signs fixed so the largest-magnitude
/// entry of each vector is positive.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        if let Some(idx) = argmax_abs(vectors.column(dst).iter()) {
            if vectors[(idx, dst)] < 0.0 {
                negate_column(&mut vectors, dst);
            }
        }
    }
    (values, vectors)
}
