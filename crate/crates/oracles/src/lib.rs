//! Slow, direct reference computations for tests.
//!
//! Everything here works on plain nested vectors and shares no code with
//! the `knh` crate, so agreement between the two is meaningful.

use std::collections::{BTreeMap, BTreeSet};

pub type Rows = Vec<Vec<f64>>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn transpose(a: &[Vec<f64>]) -> Rows {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Singular values, descending, by one-sided Jacobi rotations.
pub fn jacobi_singular_values(a: &[Vec<f64>]) -> Vec<f64> {
    // Work on columns of the taller orientation.
    let tall = if a.len() >= a[0].len() { a.to_vec() } else { transpose(a) };
    let mut cols = transpose(&tall);
    let n = cols.len();
    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..cols[p].len() {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Every entry of Σ_r a_ir b_jr c_kr, as `[i][j][k]`.
pub fn cp_brute_force(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let r = a[0].len();
    let mut t = vec![vec![vec![0.0; c.len()]; b.len()]; a.len()];
    for i in 0..a.len() {
        for j in 0..b.len() {
            for k in 0..c.len() {
                for q in 0..r {
                    t[i][j][k] += a[i][q] * b[j][q] * c[k][q];
                }
            }
        }
    }
    t
}

fn centered(v: &[Vec<f64>]) -> Rows {
    let n = v.len() as f64;
    let d = v[0].len();
    let means: Vec<f64> = (0..d).map(|j| v.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    v.iter()
        .map(|r| r.iter().zip(&means).map(|(x, m)| x - m).collect())
        .collect()
}

/// Largest correlation between x·(cos θ, sin θ) and y·(cos φ, sin φ) over
/// a grid of angles with spacing `step` radians.
pub fn cca_angle_grid(x: &[Vec<f64>], y: &[Vec<f64>], step: f64) -> f64 {
    let (x, y) = (centered(x), centered(y));
    let n = x.len() as f64;
    let cov = |a: &Rows, i: usize, b: &Rows, j: usize| a.iter().zip(b).map(|(r, s)| r[i] * s[j]).sum::<f64>() / n;
    let cxx = [[cov(&x, 0, &x, 0), cov(&x, 0, &x, 1)], [cov(&x, 1, &x, 0), cov(&x, 1, &x, 1)]];
    let cyy = [[cov(&y, 0, &y, 0), cov(&y, 0, &y, 1)], [cov(&y, 1, &y, 0), cov(&y, 1, &y, 1)]];
    let cxy = [[cov(&x, 0, &y, 0), cov(&x, 0, &y, 1)], [cov(&x, 1, &y, 0), cov(&x, 1, &y, 1)]];
    let quad = |m: &[[f64; 2]; 2], u: [f64; 2], v: [f64; 2]| {
        u[0] * (m[0][0] * v[0] + m[0][1] * v[1]) + u[1] * (m[1][0] * v[0] + m[1][1] * v[1])
    };
    let steps_half = (std::f64::consts::PI / step).ceil() as usize;
    let dirs: Vec<[f64; 2]> = (0..steps_half).map(|i| {
        let t = i as f64 * step;
        [t.cos(), t.sin()]
    }).collect();
    let mut best = f64::NEG_INFINITY;
    for &u in &dirs {
        let vx = quad(&cxx, u, u);
        for &v in &dirs {
            // Negating v covers the other half circle.
            let rho = quad(&cxy, u, v).abs() / (vx * quad(&cyy, v, v)).sqrt();
            best = best.max(rho);
        }
    }
    best
}

/// (1/N) Σ_n x1[n] ∘ x2[n] ∘ x3[n] for three views, row-major.
pub fn covariance_tensor3_loops(v1: &[Vec<f64>], v2: &[Vec<f64>], v3: &[Vec<f64>]) -> Vec<f64> {
    let n = v1.len();
    let (d1, d2, d3) = (v1[0].len(), v2[0].len(), v3[0].len());
    let mut out = Vec::with_capacity(d1 * d2 * d3);
    for i in 0..d1 {
        for j in 0..d2 {
            for k in 0..d3 {
                let mut s = 0.0;
                for r in 0..n {
                    s += v1[r][i] * v2[r][j] * v3[r][k];
                }
                out.push(s / n as f64);
            }
        }
    }
    out
}

/// (1/N) VᵀV + ridge·I.
pub fn variance_matrix_loops(v: &[Vec<f64>], ridge: f64) -> Rows {
    let d = v[0].len();
    let n = v.len() as f64;
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            m[i][j] = v.iter().map(|r| r[i] * r[j]).sum::<f64>() / n;
        }
        m[i][i] += ridge;
    }
    m
}

/// The pair distance for two-point flats written out step by step:
/// shift so flat i passes through the origin, project each point of j onto
/// the line direction, and average the two residual lengths.
pub fn algorithm1_line_distance(fi: [&[f64]; 2], fj: [&[f64]; 2]) -> f64 {
    let p1i = fi[0];
    let p12i: Vec<f64> = fi[1].iter().zip(p1i).map(|(b, a)| b - a).collect();
    let p1: Vec<f64> = fj[0].iter().zip(p1i).map(|(b, a)| b - a).collect();
    let p2: Vec<f64> = fj[1].iter().zip(p1i).map(|(b, a)| b - a).collect();
    let t1 = dot(&p1, &p12i) / dot(&p12i, &p12i);
    let t2 = dot(&p2, &p12i) / dot(&p12i, &p12i);
    let r1: Vec<f64> = p1.iter().zip(&p12i).map(|(p, q)| p - t1 * q).collect();
    let r2: Vec<f64> = p2.iter().zip(&p12i).map(|(p, q)| p - t2 * q).collect();
    let d1 = norm(&r1);
    let d2 = norm(&r2);
    (d1 + d2) / 2.0
}

/// min over t1, t2 of ‖p − (c + t1·u + t2·v)‖ from the 2×2 normal equations.
pub fn least_squares_plane_distance(p: &[f64], c: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let r: Vec<f64> = p.iter().zip(c).map(|(a, b)| a - b).collect();
    let (uu, uv, vv) = (dot(u, u), dot(u, v), dot(v, v));
    let (ru, rv) = (dot(&r, u), dot(&r, v));
    let det = uu * vv - uv * uv;
    let t1 = (ru * vv - rv * uv) / det;
    let t2 = (uu * rv - uv * ru) / det;
    let res: Vec<f64> = (0..p.len()).map(|i| r[i] - t1 * u[i] - t2 * v[i]).collect();
    norm(&res)
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Rows, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// The FaBP system I + aD − cA for an unweighted undirected edge list.
pub fn fabp_matrix(n: usize, edges: &[(usize, usize)], h: f64) -> Rows {
    let a = 4.0 * h * h / (1.0 - 4.0 * h * h);
    let c = 2.0 * h / (1.0 - 4.0 * h * h);
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(u, v) in edges {
        m[u][v] -= c;
        m[v][u] -= c;
        m[u][u] += a;
        m[v][v] += a;
    }
    m
}

/// Co-occurrence counts by listing every window placement and collecting
/// the distinct position pairs it covers.
pub fn tta_enumeration(docs: &[Vec<usize>], window: usize) -> BTreeMap<(usize, usize, usize), u64> {
    let mut counts = BTreeMap::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut pairs = BTreeSet::new();
        let starts = doc.len().saturating_sub(window) + 1;
        for s in 0..starts {
            let end = (s + window).min(doc.len());
            for p in s..end {
                for q in p + 1..end {
                    pairs.insert((p, q));
                }
            }
        }
        for (p, q) in pairs {
            let (a, b) = (doc[p], doc[q]);
            if a != b {
                *counts.entry((a, b, d)).or_insert(0) += 1;
                *counts.entry((b, a, d)).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Indices of the k smallest entries of `row` other than `skip`, ties by index.
pub fn k_smallest(row: &[f64], skip: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != skip).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Mean over views of the Euclidean distance between rows i and j.
pub fn mean_view_distance(views: &[Rows], i: usize, j: usize) -> f64 {
    let total: f64 = views
        .iter()
        .map(|v| v[i].iter().zip(&v[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum();
    total / views.len() as f64
}

/// Pearson correlation of two samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
