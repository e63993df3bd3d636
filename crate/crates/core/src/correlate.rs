//! Canonical correlation between views.
//!
//! Two views go through classic CCA: whiten each view with its ridge
//! regularized covariance, then take the SVD of the whitened
//! cross-covariance. Three views go through tensor CCA: the whitened
//! covariance tensor is CP-decomposed and each component yields one
//! canonical direction per view.
//!
//! Every view is centered first. Canonical directions are normalized so
//! each projected column has unit variance under the regularized
//! covariance, `hᵀ (C + εI) h = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KnhError, Result};
use crate::linalg::{cp_als_with, truncated_svd, CpOptions, DenseMatrix, SparseTensor3};

/// Relative eigenvalue level under which an unregularized covariance is
/// treated as singular.
const SINGULAR_RTOL: f64 = 1e-12;
/// Eigenvalue clamp for inverse square roots.
const EIGEN_FLOOR: f64 = 1e-12;
/// Largest covariance tensor that will be materialized.
const COVARIANCE_TENSOR_LIMIT: usize = 10_000_000;
const TCCA_MAX_SWEEPS: usize = 500;
const TCCA_TOL: f64 = 1e-12;
const TCCA_RESTARTS: u64 = 3;

/// One view of the entity set: row `i` describes entity `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    pub view_id: usize,
    values: DenseMatrix,
}

impl ViewMatrix {
    pub fn new(view_id: usize, values: DenseMatrix) -> Self {
        Self { view_id, values }
    }

    pub fn entities(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn into_values(self) -> DenseMatrix {
        self.values
    }
}

/// Ridge added to each view's covariance before whitening.
///
/// Serialized as `"auto"` or as the fixed value itself.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RidgeRepr", into = "RidgeRepr")]
pub enum Ridge {
    /// `1e-6 · trace(C) / d` per view.
    #[default]
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub fn resolve(&self, cov: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Auto => 1e-6 * cov.trace() / cov.nrows().max(1) as f64,
            Ridge::Fixed(eps) => eps,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Ridge::Fixed(eps) if !(eps >= 0.0 && eps.is_finite()) => Err(KnhError::validation(
                format!("ridge must be finite and non-negative, got {eps}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RidgeRepr {
    Fixed(f64),
    Named(RidgeName),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RidgeName {
    Auto,
}

impl From<RidgeRepr> for Ridge {
    fn from(r: RidgeRepr) -> Self {
        match r {
            RidgeRepr::Fixed(eps) => Ridge::Fixed(eps),
            RidgeRepr::Named(RidgeName::Auto) => Ridge::Auto,
        }
    }
}

impl From<Ridge> for RidgeRepr {
    fn from(r: Ridge) -> Self {
        match r {
            Ridge::Auto => RidgeRepr::Named(RidgeName::Auto),
            Ridge::Fixed(eps) => RidgeRepr::Fixed(eps),
        }
    }
}

impl From<f64> for Ridge {
    fn from(eps: f64) -> Self {
        Ridge::Fixed(eps)
    }
}

/// Projection of every view into the shared canonical space.
#[derive(Debug, Clone)]
pub struct CanonicalProjection {
    pub view_ids: Vec<usize>,
    /// Per view, `d_m × R`.
    pub directions: Vec<DenseMatrix>,
    /// Per view, `N × R`: centered view times its directions.
    pub projected: Vec<DenseMatrix>,
    /// Canonical correlation of each component, descending.
    pub correlations: Vec<f64>,
    /// Ridge actually used for each view.
    pub ridges: Vec<f64>,
    /// False when the tensor decomposition hit its sweep limit.
    pub converged: bool,
}

/// Sidecar record written next to serialized projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMetadata {
    pub view_ids: Vec<usize>,
    pub rank: usize,
    pub ridges: Vec<f64>,
    pub correlations: Vec<f64>,
    pub converged: bool,
}

impl CanonicalProjection {
    pub fn rank(&self) -> usize {
        self.correlations.len()
    }

    pub fn metadata(&self) -> ProjectionMetadata {
        ProjectionMetadata {
            view_ids: self.view_ids.clone(),
            rank: self.rank(),
            ridges: self.ridges.clone(),
            correlations: self.correlations.clone(),
            converged: self.converged,
        }
    }
}

/// Dense `d_1 × … × d_M` array in row-major order (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl CovarianceTensor {
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.dims.len(), "index order mismatch");
        let flat = index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index out of range");
                acc * d + i
            });
        self.values[flat]
    }

    fn to_sparse3(&self) -> Result<SparseTensor3> {
        let [d1, d2, d3] = self.dims[..] else {
            return Err(KnhError::validation("expected a three-way covariance tensor"));
        };
        SparseTensor3::from_fn([d1, d2, d3], |i, j, k| self.values[(i * d2 + j) * d3 + k])
    }
}

pub fn center_columns(view: &ViewMatrix) -> Result<ViewMatrix> {
    let n = view.entities();
    if n < 2 {
        return Err(KnhError::validation(format!(
            "centering needs at least 2 entities, got {n}"
        )));
    }
    let mut m = view.values.as_matrix().clone();
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    Ok(ViewMatrix::new(view.view_id, DenseMatrix::from_matrix(m)?))
}

/// `(1/N) VᵀV + ridge·I` for an already centered view.
pub fn variance_matrix(view: &ViewMatrix, ridge: f64) -> Result<DenseMatrix> {
    let n = view.entities();
    if n < 2 {
        return Err(KnhError::validation(format!(
            "variance needs at least 2 entities, got {n}"
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(KnhError::validation(format!("invalid ridge {ridge}")));
    }
    let x = view.values.as_matrix();
    let mut c = x.tr_mul(x) / n as f64;
    for i in 0..c.nrows() {
        c[(i, i)] += ridge;
    }
    DenseMatrix::from_matrix(c)
}

/// `(1/N) Σ_n x_1n ∘ x_2n ∘ … ∘ x_Mn` over already centered views.
pub fn covariance_tensor(views: &[ViewMatrix]) -> Result<CovarianceTensor> {
    if views.len() < 2 {
        return Err(KnhError::validation("covariance tensor needs at least 2 views"));
    }
    let n = shared_entities(views)?;
    let dims: Vec<usize> = views.iter().map(ViewMatrix::dims).collect();
    let size = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&s| s <= COVARIANCE_TENSOR_LIMIT)
        .ok_or_else(|| {
            KnhError::Capacity(format!("covariance tensor with dims {dims:?} is too large"))
        })?;

    let mut values = vec![0.0; size];
    let mut outer = vec![0.0; size];
    for row in 0..n {
        // Outer product of this sample's rows, built one view at a time.
        outer[0] = 1.0;
        let mut len = 1;
        for view in views {
            let x = view.values.as_matrix();
            let d = x.ncols();
            for idx in (0..len).rev() {
                let base = outer[idx];
                for j in (0..d).rev() {
                    outer[idx * d + j] = base * x[(row, j)];
                }
            }
            len *= d;
        }
        for (acc, v) in values.iter_mut().zip(&outer) {
            *acc += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    values.iter_mut().for_each(|v| *v *= inv_n);
    Ok(CovarianceTensor { dims, values })
}

fn shared_entities(views: &[ViewMatrix]) -> Result<usize> {
    let n = views[0].entities();
    if let Some(v) = views.iter().find(|v| v.entities() != n) {
        return Err(KnhError::validation(format!(
            "view {} has {} entities, expected {n}",
            v.view_id,
            v.entities()
        )));
    }
    Ok(n)
}

/// Symmetric inverse square root with eigenvalues clamped from below.
pub fn inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(EIGEN_FLOOR).sqrt());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&inv) * v.transpose()
}

/// A centered view with its regularized whitening transform.
struct Whitened {
    centered: ViewMatrix,
    whitener: DMatrix<f64>,
    ridge: f64,
}

fn whiten(view: &ViewMatrix, ridge: Ridge) -> Result<Whitened> {
    let centered = center_columns(view)?;
    let raw = variance_matrix(&centered, 0.0)?.into_matrix();
    let eps = ridge.resolve(&raw);
    let mut cov = raw;
    for i in 0..cov.nrows() {
        cov[(i, i)] += eps;
    }
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= SINGULAR_RTOL * max {
        return Err(KnhError::Singular(format!(
            "covariance of view {} is rank deficient (eigenvalues {min:e}..{max:e})",
            view.view_id
        )));
    }
    Ok(Whitened {
        whitener: inverse_sqrt(&cov),
        centered,
        ridge: eps,
    })
}

fn check_rank(views: &[ViewMatrix], rank: usize) -> Result<()> {
    let max = views.iter().map(ViewMatrix::dims).min().unwrap_or(0);
    if rank == 0 || rank > max {
        return Err(KnhError::Rank { rank, max });
    }
    Ok(())
}

/// Two-view canonical correlation analysis.
pub fn cca(v1: &ViewMatrix, v2: &ViewMatrix, rank: usize, ridge: Ridge) -> Result<CanonicalProjection> {
    let views = [v1.clone(), v2.clone()];
    shared_entities(&views)?;
    check_rank(&views, rank)?;
    ridge.validate()?;
    let wx = whiten(v1, ridge)?;
    let wy = whiten(v2, ridge)?;
    let n = v1.entities() as f64;
    let x = wx.centered.values.as_matrix();
    let y = wy.centered.values.as_matrix();
    let cxy = x.tr_mul(y) / n;
    let t = &wx.whitener * cxy * &wy.whitener;
    let svd = truncated_svd(&DenseMatrix::from_matrix(t)?, rank)?;
    let hx = &wx.whitener * svd.u.as_matrix();
    let hy = &wy.whitener * svd.v.as_matrix();
    let correlations = svd.s.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    finish(vec![wx, wy], vec![hx, hy], correlations, &views, true)
}

/// Tensor canonical correlation analysis for two or three views.
///
/// With two views the whitened covariance tensor is a matrix and its
/// orthogonal rank-R decomposition is the truncated SVD. With three views
/// it is CP-decomposed by ALS; the best of a few deterministic restarts
/// derived from `seed` is kept.
pub fn tcca(views: &[ViewMatrix], rank: usize, ridge: Ridge, seed: u64) -> Result<CanonicalProjection> {
    match views.len() {
        2 | 3 => {}
        m => {
            return Err(KnhError::validation(format!(
                "tensor CCA supports 2 or 3 views, got {m}"
            )))
        }
    }
    shared_entities(views)?;
    check_rank(views, rank)?;
    ridge.validate()?;
    let whitened: Vec<Whitened> = views
        .iter()
        .map(|v| whiten(v, ridge))
        .collect::<Result<_>>()?;
    let rotated: Vec<ViewMatrix> = whitened
        .iter()
        .map(|w| {
            let m = w.centered.values.as_matrix() * &w.whitener;
            DenseMatrix::from_matrix(m).map(|d| ViewMatrix::new(w.centered.view_id, d))
        })
        .collect::<Result<_>>()?;
    let cov = covariance_tensor(&rotated)?;

    let (units, converged) = if views.len() == 2 {
        let t = DenseMatrix::from_row_major(cov.dims[0], cov.dims[1], cov.values.clone())?;
        let svd = truncated_svd(&t, rank)?;
        (vec![svd.u.into_matrix(), svd.v.into_matrix()], true)
    } else {
        let tensor = cov.to_sparse3()?;
        if tensor.nnz() == 0 {
            return Err(KnhError::Singular(
                "whitened covariance tensor is identically zero".into(),
            ));
        }
        let mut best = None;
        for restart in 0..TCCA_RESTARTS {
            let opts = CpOptions {
                max_sweeps: TCCA_MAX_SWEEPS,
                tol: TCCA_TOL,
                seed: seed.wrapping_add(restart),
                ..CpOptions::new(rank)
            };
            let f = cp_als_with(&tensor, &opts)?;
            if best.as_ref().is_none_or(|b: &crate::linalg::CpFactors| f.fit > b.fit) {
                best = Some(f);
            }
        }
        let f = best.expect("at least one restart");
        if !f.converged {
            log::warn!("tensor CCA: CP did not converge in {TCCA_MAX_SWEEPS} sweeps");
        }
        let mut c = f.c.into_matrix();
        for mut col in c.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col.unscale_mut(norm);
            }
        }
        (vec![f.a.into_matrix(), f.b.into_matrix(), c], f.converged)
    };

    let directions: Vec<DMatrix<f64>> = whitened
        .iter()
        .zip(&units)
        .map(|(w, u)| &w.whitener * u)
        .collect();
    finish(whitened, directions, Vec::new(), views, converged)
}

/// Fixes signs so every view's component correlates non-negatively with the
/// first view, computes correlations when not supplied, orders components
/// by decreasing correlation, and projects the centered views.
fn finish(
    whitened: Vec<Whitened>,
    mut directions: Vec<DMatrix<f64>>,
    correlations: Vec<f64>,
    views: &[ViewMatrix],
    converged: bool,
) -> Result<CanonicalProjection> {
    let rank = directions[0].ncols();
    let mut projected: Vec<DMatrix<f64>> = whitened
        .iter()
        .zip(&directions)
        .map(|(w, h)| w.centered.values.as_matrix() * h)
        .collect();
    let n = views[0].entities() as f64;
    let cross = |p: &[DMatrix<f64>], a: usize, b: usize, r: usize| {
        p[a].column(r).dot(&p[b].column(r)) / n
    };
    for m in 1..projected.len() {
        for r in 0..rank {
            if cross(&projected, 0, m, r) < 0.0 {
                directions[m].column_mut(r).neg_mut();
                projected[m].column_mut(r).neg_mut();
            }
        }
    }

    let correlations = if correlations.is_empty() {
        // Mean pairwise regularized correlation; each column already has
        // unit regularized variance.
        let m = projected.len();
        let pairs = (m * (m - 1) / 2) as f64;
        (0..rank)
            .map(|r| {
                let mut total = 0.0;
                for a in 0..m {
                    for b in a + 1..m {
                        total += cross(&projected, a, b, r);
                    }
                }
                (total / pairs).clamp(-1.0, 1.0)
            })
            .collect()
    } else {
        correlations
    };

    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| correlations[b].total_cmp(&correlations[a]).then(a.cmp(&b)));
    Ok(CanonicalProjection {
        view_ids: views.iter().map(|v| v.view_id).collect(),
        directions: directions
            .iter()
            .map(|h| DenseMatrix::from_matrix(h.select_columns(&order)))
            .collect::<Result<_>>()?,
        projected: projected
            .iter()
            .map(|p| DenseMatrix::from_matrix(p.select_columns(&order)))
            .collect::<Result<_>>()?,
        correlations: order.iter().map(|&r| correlations[r]).collect(),
        ridges: whitened.iter().map(|w| w.ridge).collect(),
        converged,
    })
}
