use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax_abs, negate_column, sorted_symmetric_eigen, DenseMatrix, SparseTensor3};
use crate::error::{KnhError, Result};

/// Largest `I·J·K` that [`cp_reconstruct`] will expand.
pub const RECONSTRUCT_LIMIT: usize = 1_000_000;

/// Mode dimension above which HOSVD initialization falls back to random.
const HOSVD_MAX_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CpInit {
    /// Uniform entries in `[0, 1)` drawn from the seed.
    #[default]
    Random,
    /// Leading eigenvectors of each mode's Gram matrix.
    Hosvd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpOptions {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Stop once the fit changes by less than this between sweeps.
    pub tol: f64,
    pub seed: u64,
    pub init: CpInit,
}

impl CpOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_sweeps: 200,
            tol: 1e-8,
            seed: 0,
            init: CpInit::Random,
        }
    }
}

/// Rank-R CP model `Σ_r a_r ∘ b_r ∘ c_r`.
///
/// Columns of `a` and `b` have unit norm, `c` carries the component scale,
/// and components are ordered by decreasing scale.
#[derive(Debug, Clone)]
pub struct CpFactors {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub rank: usize,
    /// `1 - ‖X - model‖ / ‖X‖` after the final sweep.
    pub fit: f64,
    /// Squared residual norm after each sweep.
    pub loss_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl CpFactors {
    /// Value of the model at one coordinate.
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        (0..self.rank)
            .map(|r| self.a.get(i, r) * self.b.get(j, r) * self.c.get(k, r))
            .sum()
    }
}

pub fn cp_als(
    tensor: &SparseTensor3,
    rank: usize,
    max_sweeps: usize,
    tol: f64,
    seed: u64,
) -> Result<CpFactors> {
    cp_als_with(
        tensor,
        &CpOptions {
            rank,
            max_sweeps,
            tol,
            seed,
            init: CpInit::Random,
        },
    )
}

/// CP decomposition by alternating least squares over the nonzeros.
///
/// Each sweep updates A, B, then C. After the A and B updates their columns
/// are normalized and the scale moved into C, which leaves the model
/// unchanged, so the per-sweep loss never increases.
pub fn cp_als_with(tensor: &SparseTensor3, opts: &CpOptions) -> Result<CpFactors> {
    let rank = opts.rank;
    if rank == 0 {
        return Err(KnhError::validation("CP rank must be at least 1"));
    }
    if opts.max_sweeps == 0 {
        return Err(KnhError::validation("max_sweeps must be at least 1"));
    }
    if !(opts.tol >= 0.0) {
        return Err(KnhError::validation("tol must be non-negative"));
    }
    if tensor.nnz() == 0 {
        return Err(KnhError::validation("tensor has no nonzero entries"));
    }
    let [di, dj, dk] = tensor.dims();
    let min_dim = di.min(dj).min(dk);
    if rank > min_dim * min_dim {
        warn!("CP rank {rank} exceeds min(I,J,K)^2 = {}; over-factoring", min_dim * min_dim);
    }

    let (mut a, mut b, mut c) = initial_factors(tensor, opts);
    let norm_x2 = tensor.entries().iter().map(|e| e.3 * e.3).sum::<f64>();
    let norm_x = norm_x2.sqrt();

    let mut loss_history = Vec::with_capacity(opts.max_sweeps);
    let mut fit = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let m = mttkrp(tensor, 0, &b, &c, di);
        a = solve_normal(&m, &gram(&b).component_mul(&gram(&c)));
        move_scale(&mut a, &mut c);

        let m = mttkrp(tensor, 1, &a, &c, dj);
        b = solve_normal(&m, &gram(&a).component_mul(&gram(&c)));
        move_scale(&mut b, &mut c);

        let m = mttkrp(tensor, 2, &a, &b, dk);
        c = solve_normal(&m, &gram(&a).component_mul(&gram(&b)));

        let inner = c.component_mul(&m).sum();
        let model2 = gram(&a)
            .component_mul(&gram(&b))
            .component_mul(&gram(&c))
            .sum();
        let loss = (norm_x2 - 2.0 * inner + model2).max(0.0);
        loss_history.push(loss);

        let prev = fit;
        fit = 1.0 - loss.sqrt() / norm_x;
        if loss_history.len() > 1 && (fit - prev).abs() < opts.tol {
            converged = true;
            break;
        }
    }

    let order = component_order(&c);
    let mut a = a.select_columns(&order);
    let mut b = b.select_columns(&order);
    let mut c = c.select_columns(&order);
    for r in 0..rank {
        for m in [&mut a, &mut b] {
            if let Some(idx) = argmax_abs(m.column(r).iter()) {
                if m[(idx, r)] < 0.0 {
                    negate_column(m, r);
                    negate_column(&mut c, r);
                }
            }
        }
    }

    Ok(CpFactors {
        a: DenseMatrix::from_matrix(a)?,
        b: DenseMatrix::from_matrix(b)?,
        c: DenseMatrix::from_matrix(c)?,
        rank,
        fit,
        sweeps: loss_history.len(),
        loss_history,
        converged,
    })
}

/// Expands a CP model into an explicit tensor.
pub fn cp_reconstruct(f: &CpFactors) -> Result<SparseTensor3> {
    let dims = [f.a.rows(), f.b.rows(), f.c.rows()];
    let size = dims[0]
        .checked_mul(dims[1])
        .and_then(|x| x.checked_mul(dims[2]));
    match size {
        Some(s) if s <= RECONSTRUCT_LIMIT => SparseTensor3::from_fn(dims, |i, j, k| f.value(i, j, k)),
        _ => Err(KnhError::Capacity(format!(
            "reconstructing a {}x{}x{} tensor exceeds {RECONSTRUCT_LIMIT} entries",
            dims[0], dims[1], dims[2]
        ))),
    }
}

fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.tr_mul(m)
}

/// Matricized tensor times Khatri–Rao product for one mode.
fn mttkrp(
    tensor: &SparseTensor3,
    mode: usize,
    f1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    rows: usize,
) -> DMatrix<f64> {
    let rank = f1.ncols();
    let mut out = DMatrix::zeros(rows, rank);
    for &(i, j, k, v) in tensor.entries() {
        let (row, p, q) = match mode {
            0 => (i, j, k),
            1 => (j, i, k),
            _ => (k, i, j),
        };
        for r in 0..rank {
            out[(row, r)] += v * f1[(p, r)] * f2[(q, r)];
        }
    }
    out
}

/// Solves `X · G = M` for symmetric positive semidefinite `G`.
fn solve_normal(m: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let rhs = m.transpose();
    let sol = match g.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            let svd = g.clone().svd(true, true);
            let eps = f64::EPSILON * g.nrows() as f64 * svd.singular_values.max();
            svd.solve(&rhs, eps).expect("u and v_t requested")
        }
    };
    sol.transpose()
}

/// Normalizes the columns of `factor` and multiplies the norms into `sink`.
fn move_scale(factor: &mut DMatrix<f64>, sink: &mut DMatrix<f64>) {
    for r in 0..factor.ncols() {
        let norm = factor.column(r).norm();
        if norm > 0.0 {
            factor.column_mut(r).unscale_mut(norm);
            sink.column_mut(r).scale_mut(norm);
        }
    }
}

fn component_order(c: &DMatrix<f64>) -> Vec<usize> {
    let weights: Vec<f64> = (0..c.ncols()).map(|r| c.column(r).norm()).collect();
    let mut order: Vec<usize> = (0..c.ncols()).collect();
    order.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]).then(x.cmp(&y)));
    order
}

fn initial_factors(
    tensor: &SparseTensor3,
    opts: &CpOptions,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dims = tensor.dims();
    let mut uniform = |rows: usize| DMatrix::from_fn(rows, opts.rank, |_, _| rng.random::<f64>());
    let mut factors = [uniform(dims[0]), uniform(dims[1]), uniform(dims[2])];
    if opts.init == CpInit::Hosvd {
        for (mode, factor) in factors.iter_mut().enumerate() {
            if dims[mode] > HOSVD_MAX_DIM {
                warn!("mode {mode} has {} rows; using random init for it", dims[mode]);
                continue;
            }
            let (_, vectors) = sorted_symmetric_eigen(&mode_gram(tensor, mode));
            for r in 0..opts.rank.min(dims[mode]) {
                factor.set_column(r, &vectors.column(r));
            }
        }
    }
    let [a, b, c] = factors;
    (a, b, c)
}

/// `X_(n) X_(n)ᵀ` for the unfolding along `mode`.
fn mode_gram(tensor: &SparseTensor3, mode: usize) -> DMatrix<f64> {
    let n = tensor.dims()[mode];
    let mut keyed: Vec<((usize, usize), usize, f64)> = tensor
        .entries()
        .iter()
        .map(|&(i, j, k, v)| match mode {
            0 => ((j, k), i, v),
            1 => ((i, k), j, v),
            _ => ((i, j), k, v),
        })
        .collect();
    keyed.sort_by_key(|e| (e.0, e.1));
    let mut g = DMatrix::zeros(n, n);
    for group in keyed.chunk_by(|x, y| x.0 == y.0) {
        for &(_, p, vp) in group {
            for &(_, q, vq) in group {
                g[(p, q)] += vp * vq;
            }
        }
    }
    g
}
