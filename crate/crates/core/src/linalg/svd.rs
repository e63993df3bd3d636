use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{argmax_abs, negate_column, DenseMatrix};
use crate::error::{KnhError, Result};

/// Inputs whose smaller dimension is at most this size take the exact path.
pub const DENSE_SVD_MAX_DIM: usize = 512;

/// Leading singular triplets `X ≈ U diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let u = self.u.as_matrix();
        let v = self.v.as_matrix();
        let mut us = u.clone();
        for (c, s) in self.s.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        DenseMatrix::from_matrix_unchecked(us * v.transpose())
    }
}

/// Rank-`r` truncated SVD.
///
/// Uses the exact Golub–Kahan path when `min(rows, cols) <= DENSE_SVD_MAX_DIM`
/// and a randomized range finder otherwise.
pub fn truncated_svd(x: &DenseMatrix, r: usize) -> Result<SvdFactors> {
    check_rank(x, r)?;
    if x.rows().min(x.cols()) <= DENSE_SVD_MAX_DIM {
        dense_truncated_svd(x, r)
    } else {
        randomized_svd(x, r, &RandomizedSvdOptions::default())
    }
}

fn check_rank(x: &DenseMatrix, r: usize) -> Result<()> {
    let max = x.rows().min(x.cols());
    if r == 0 || r > max {
        return Err(KnhError::Rank { rank: r, max });
    }
    Ok(())
}

/// Exact truncated SVD via a full thin decomposition.
pub fn dense_truncated_svd(x: &DenseMatrix, r: usize) -> Result<SvdFactors> {
    check_rank(x, r)?;
    let svd = x.as_matrix().clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(finish(&u, svd.singular_values.as_slice(), &v_t.transpose(), r))
}

/// Orders triplets by descending singular value, keeps `r`, and applies the
/// sign convention (largest-magnitude entry of each `U` column positive).
fn finish(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>, r: usize) -> SvdFactors {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(r);
    let mut u_r = u.select_columns(&order);
    let mut v_r = v.select_columns(&order);
    let s_r: Vec<f64> = order.iter().map(|&i| s[i].max(0.0)).collect();
    for c in 0..r {
        if let Some(idx) = argmax_abs(u_r.column(c).iter()) {
            if u_r[(idx, c)] < 0.0 {
                negate_column(&mut u_r, c);
                negate_column(&mut v_r, c);
            }
        }
    }
    SvdFactors {
        u: DenseMatrix::from_matrix_unchecked(u_r),
        s: s_r,
        v: DenseMatrix::from_matrix_unchecked(v_r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedSvdOptions {
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for RandomizedSvdOptions {
    fn default() -> Self {
        Self {
            oversampling: 8,
            power_iterations: 2,
            seed: 0x5eed_5eed,
        }
    }
}

/// Randomized range finder with power iterations followed by an exact SVD
/// of the small projected matrix.
pub fn randomized_svd(x: &DenseMatrix, r: usize, opts: &RandomizedSvdOptions) -> Result<SvdFactors> {
    check_rank(x, r)?;
    let a = x.as_matrix();
    let (n, p) = a.shape();
    let width = (r + opts.oversampling).min(n.min(p));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(p, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(a * omega);
    for _ in 0..opts.power_iterations {
        let z = orthonormal_basis(a.transpose() * &q);
        q = orthonormal_basis(a * z);
    }

    let b = q.transpose() * a;
    let svd = b.svd(true, true);
    let u_small = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let u = q * u_small;
    Ok(finish(&u, svd.singular_values.as_slice(), &v_t.transpose(), r))
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag3() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![3., 0., 0.], vec![0., 2., 0.], vec![0., 0., 1.]]).unwrap()
    }

    #[test]
    fn diagonal_singular_values() {
        let f = truncated_svd(&diag3(), 2).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-14);
        assert!((f.s[1] - 2.0).abs() < 1e-14);
        assert_eq!(f.rank(), 2);
    }

    #[test]
    fn rank_out_of_range() {
        assert!(matches!(
            truncated_svd(&diag3(), 0),
            Err(KnhError::Rank { rank: 0, max: 3 })
        ));
        assert!(matches!(
            truncated_svd(&diag3(), 4),
            Err(KnhError::Rank { rank: 4, max: 3 })
        ));
    }

    #[test]
    fn sign_convention_applied() {
        let x = DenseMatrix::from_rows(&[vec![-1., 0.], vec![0., -2.], vec![0.5, 0.1]]).unwrap();
        let f = truncated_svd(&x, 2).unwrap();
        for c in 0..2 {
            let col = f.u.column(c);
            let idx = argmax_abs(col.iter()).unwrap();
            assert!(col[idx] > 0.0);
        }
        assert!(f.reconstruct().max_abs_diff(&x).unwrap() < 1e-12);
    }
}
