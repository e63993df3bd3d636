//! Geometry of entity flats.
//!
//! An entity observed through M views has M points in the shared canonical
//! space; the affine span of those points is the entity's flat (a line for
//! two views, a plane for three). Flats are compared by how far one flat's
//! defining points lie from the other flat.

use rayon::prelude::*;

use crate::error::{KnhError, Result};
use crate::linalg::DenseMatrix;

/// Directions shorter than this (relative to the point scale) are treated
/// as linearly dependent and dropped.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// `{x : a·x + d = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().chain([&offset]).any(|v| !v.is_finite()) {
            return Err(KnhError::validation("hyperplane has non-finite coefficients"));
        }
        if norm(&normal) == 0.0 {
            return Err(KnhError::validation("hyperplane normal is zero"));
        }
        Ok(Self { normal, offset })
    }

    /// The hyperplane with the given normal passing through `point`.
    pub fn through_point(normal: Vec<f64>, point: &[f64]) -> Result<Self> {
        if normal.len() != point.len() {
            return Err(dim_mismatch(point.len(), normal.len()));
        }
        let offset = -dot(&normal, point);
        Self::new(normal, offset)
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

pub fn point_hyperplane_distance(p: &[f64], h: &Hyperplane) -> Result<f64> {
    if p.len() != h.normal.len() {
        return Err(dim_mismatch(p.len(), h.normal.len()));
    }
    Ok((dot(&h.normal, p) + h.offset).abs() / norm(&h.normal))
}

/// Distance from `p0` to the line through `p1` and `p2`, via the cross
/// product `|(p2 - p0) × (p1 - p0)| / |p2 - p1|`.
pub fn point_line_distance_3d(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> Result<f64> {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let u = sub(p2, p0);
    let v = sub(p1, p0);
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let base = norm(&sub(p2, p1));
    if base == 0.0 {
        return Err(KnhError::DegenerateFlat(
            "line through two coincident points".into(),
        ));
    }
    Ok(norm(&cross) / base)
}

/// The affine span of one entity's projected view points.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityFlat {
    pub entity_id: usize,
    points: Vec<Vec<f64>>,
    /// Mutually orthogonal (unnormalized) spanning directions anchored at
    /// `points[0]`, each with its squared norm.
    directions: Vec<(Vec<f64>, f64)>,
}

impl EntityFlat {
    pub fn new(entity_id: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(KnhError::validation(format!(
                "a flat needs at least 2 points, got {}",
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(KnhError::validation("flat points have dimension 0"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(dim_mismatch(p.len(), dim));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(KnhError::validation(format!(
                    "flat {entity_id} has a non-finite coordinate"
                )));
            }
        }

        let scale = points
            .iter()
            .flatten()
            .fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let origin = &points[0];
        let mut directions: Vec<(Vec<f64>, f64)> = Vec::with_capacity(points.len() - 1);
        for p in &points[1..] {
            let mut q: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
            // Two Gram–Schmidt passes keep q orthogonal to earlier directions.
            for _ in 0..2 {
                for (d, dd) in &directions {
                    let t = dot(&q, d) / dd;
                    q.iter_mut().zip(d).for_each(|(x, y)| *x -= t * y);
                }
            }
            let qq = dot(&q, &q);
            if qq.sqrt() > DEPENDENCE_TOL * scale {
                directions.push((q, qq));
            }
        }
        Ok(Self {
            entity_id,
            points,
            directions,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Number of defining points (views).
    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Dimension of the affine span.
    pub fn span_dim(&self) -> usize {
        self.directions.len()
    }

    /// True when the points span fewer than `order() - 1` dimensions.
    pub fn is_degenerate(&self) -> bool {
        self.span_dim() + 1 < self.order()
    }
}

/// Euclidean distance from `p` to the affine span of `flat`.
///
/// For a line this is exactly `t = p·q / q·q`, `|p - t q|` with `q` the
/// line direction and `p` taken relative to the first point. A flat whose
/// points all coincide degrades to the distance to that point.
pub fn point_flat_distance(p: &[f64], flat: &EntityFlat) -> Result<f64> {
    if p.len() != flat.dim() {
        return Err(dim_mismatch(p.len(), flat.dim()));
    }
    Ok(residual_norm(p, flat))
}

fn residual_norm(p: &[f64], flat: &EntityFlat) -> f64 {
    let mut r: Vec<f64> = p.iter().zip(&flat.points[0]).map(|(a, b)| a - b).collect();
    for (d, dd) in &flat.directions {
        let t = dot(&r, d) / dd;
        r.iter_mut().zip(d).for_each(|(x, y)| *x -= t * y);
    }
    norm(&r)
}

/// How flat-pair distances are oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Mean distance of `F_j`'s points to `F_i`; the upper triangle is
    /// computed this way and mirrored.
    #[default]
    Directed,
    /// Average of both directions.
    Symmetric,
}

/// Mean distance from the defining points of `fj` to `fi`.
pub fn flat_pair_distance(fi: &EntityFlat, fj: &EntityFlat) -> Result<f64> {
    check_compatible(fi, fj)?;
    Ok(directed(fi, fj))
}

pub fn flat_pair_distance_with(fi: &EntityFlat, fj: &EntityFlat, mode: PairMode) -> Result<f64> {
    check_compatible(fi, fj)?;
    Ok(match mode {
        PairMode::Directed => directed(fi, fj),
        PairMode::Symmetric => 0.5 * (directed(fi, fj) + directed(fj, fi)),
    })
}

fn directed(fi: &EntityFlat, fj: &EntityFlat) -> f64 {
    let total: f64 = fj.points.iter().map(|p| residual_norm(p, fi)).sum();
    total / fj.order() as f64
}

fn check_compatible(fi: &EntityFlat, fj: &EntityFlat) -> Result<()> {
    if fi.order() != fj.order() || fi.dim() != fj.dim() {
        return Err(KnhError::validation(format!(
            "flats {} and {} differ in shape ({}x{} vs {}x{})",
            fi.entity_id,
            fj.entity_id,
            fi.order(),
            fi.dim(),
            fj.order(),
            fj.dim()
        )));
    }
    Ok(())
}

/// Symmetric matrix of flat-pair distances with a zero diagonal.
///
/// Entry `(i, j)` for `j > i` is `flat_pair_distance(F_i, F_j)` and is
/// mirrored to `(j, i)`. Rows are computed in parallel; every entry is
/// computed independently, so the result does not depend on thread count.
pub fn pairwise_flat_distances(flats: &[EntityFlat], mode: PairMode) -> Result<DenseMatrix> {
    let Some(first) = flats.first() else {
        return Err(KnhError::validation("no flats given"));
    };
    for f in flats {
        check_compatible(first, f)?;
    }
    let n = flats.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| match mode {
                    PairMode::Directed => directed(&flats[i], &flats[j]),
                    PairMode::Symmetric => {
                        0.5 * (directed(&flats[i], &flats[j]) + directed(&flats[j], &flats[i]))
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (offset, &d) in row.iter().enumerate() {
            let j = i + 1 + offset;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DenseMatrix::from_row_major(n, n, values)
}

/// One flat per entity from per-view `N × R` coordinate matrices.
pub fn flats_from_views(views: &[DenseMatrix]) -> Result<Vec<EntityFlat>> {
    let Some(first) = views.first() else {
        return Err(KnhError::validation("no views given"));
    };
    let (n, r) = first.shape();
    if let Some(v) = views.iter().find(|v| v.shape() != (n, r)) {
        return Err(KnhError::validation(format!(
            "projected views differ in shape: {n}x{r} vs {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    (0..n)
        .map(|i| EntityFlat::new(i, views.iter().map(|v| v.row(i)).collect()))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dim_mismatch(got: usize, want: usize) -> KnhError {
    KnhError::validation(format!("dimension mismatch: {got} vs {want}"))
}
