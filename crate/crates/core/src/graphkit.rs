//! K-nearest graphs over entities: the flat-based KNH graph and the
//! averaged-distance KNN baseline.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlate::{cca, tcca, CanonicalProjection, Ridge, ViewMatrix};
use crate::error::{KnhError, Result};
use crate::flats::{flats_from_views, pairwise_flat_distances, PairMode};
use crate::ingest::{parse_error, read_lines, write_text};
use crate::linalg::DenseMatrix;

/// Undirected graph with non-negative distance weights.
///
/// Each edge is stored once as `(u, v, w)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(KnhError::validation(format!(
                    "edge ({u}, {v}) outside {n} nodes"
                )));
            }
            if u == v {
                return Err(KnhError::validation(format!("self-loop at node {u}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(KnhError::validation(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            canon.push((u.min(v), u.max(v), w));
        }
        canon.sort_by_key(|&(u, v, _)| (u, v));
        canon.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));

        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, w) in &canon {
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|e| e.0);
        }
        Ok(Self {
            n,
            edges: canon,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency
            .get(u)
            .is_some_and(|l| l.binary_search_by_key(&v, |e| e.0).is_ok())
    }

    /// `%nodes N` followed by one `u v weight` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = format!("%nodes {}\n", self.n);
        for (u, v, w) in &self.edges {
            let _ = writeln!(out, "{u} {v} {w}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = read_lines(path)?.into_iter().enumerate();
        let n = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((idx, l)) => {
                    let mut parts = l.split_whitespace();
                    match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
                        (Some("%nodes"), Some(Ok(n)), None) => break n,
                        _ => return Err(parse_error(path, idx + 1, "expected `%nodes N` header")),
                    }
                }
                None => return Err(parse_error(path, 1, "empty graph file")),
            }
        };
        let mut edges = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields[..] {
                [u, v, w] => u
                    .parse::<usize>()
                    .ok()
                    .zip(v.parse::<usize>().ok())
                    .zip(w.parse::<f64>().ok().filter(|w| w.is_finite())),
                _ => None,
            };
            let Some(((u, v), w)) = parsed else {
                return Err(parse_error(path, idx + 1, "expected `u v weight`"));
            };
            edges.push((u, v, w));
        }
        Self::new(n, edges).map_err(|e| parse_error(path, 0, &e.to_string()))
    }
}

/// How directed K-nearest selections become undirected edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// Keep an edge when either endpoint selected the other.
    #[default]
    Union,
    /// Keep an edge only when both endpoints selected each other.
    Mutual,
}

fn check_distance_matrix(d: &DenseMatrix) -> Result<usize> {
    let (n, m) = d.shape();
    if n != m {
        return Err(KnhError::validation(format!(
            "distance matrix must be square, got {n}x{m}"
        )));
    }
    for i in 0..n {
        if d.get(i, i) != 0.0 {
            return Err(KnhError::validation(format!(
                "distance matrix diagonal at {i} is {}",
                d.get(i, i)
            )));
        }
        for j in i + 1..n {
            let (a, b) = (d.get(i, j), d.get(j, i));
            if a < 0.0 || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(KnhError::validation(format!(
                    "distance matrix not symmetric non-negative at ({i}, {j})"
                )));
            }
        }
    }
    Ok(n)
}

/// For every node, its `k` nearest other nodes ordered by distance, ties
/// broken by lower index.
pub fn nearest_neighbors(d: &DenseMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = check_distance_matrix(d)?;
    if k == 0 || k >= n {
        return Err(KnhError::validation(format!(
            "K must satisfy 1 <= K < N, got K = {k}, N = {n}"
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|u| {
            let mut others: Vec<usize> = (0..n).filter(|&v| v != u).collect();
            let key = |v: &usize| d.get(u, *v);
            others.select_nth_unstable_by(k - 1, |a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
            others.truncate(k);
            others.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
            others
        })
        .collect())
}

/// K-nearest graph with union symmetrization.
pub fn knn_sparsify(d: &DenseMatrix, k: usize) -> Result<WeightedGraph> {
    knn_sparsify_with(d, k, Symmetrization::Union)
}

pub fn knn_sparsify_with(d: &DenseMatrix, k: usize, sym: Symmetrization) -> Result<WeightedGraph> {
    let selected = nearest_neighbors(d, k)?;
    let n = selected.len();
    let edges = match sym {
        Symmetrization::Union => selected
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v, d.get(u, v))))
            .collect(),
        Symmetrization::Mutual => selected
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| {
                let selected = &selected;
                vs.iter()
                    .filter(move |&&v| u < v && selected[v].contains(&u))
                    .map(move |&v| (u, v, d.get(u, v)))
            })
            .collect(),
    };
    WeightedGraph::new(n, edges)
}

/// Mean over views of the Euclidean distance between rows `i` and `j`.
pub fn baseline_knn_distances(views: &[DenseMatrix]) -> Result<DenseMatrix> {
    let Some(first) = views.first() else {
        return Err(KnhError::validation("no views given"));
    };
    let n = first.rows();
    if let Some(v) = views.iter().find(|v| v.rows() != n) {
        return Err(KnhError::validation(format!(
            "views disagree on entity count: {n} vs {}",
            v.rows()
        )));
    }
    let rows: Vec<Vec<Vec<f64>>> = views.iter().map(DenseMatrix::to_rows).collect();
    let m = views.len() as f64;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let total: f64 = rows
                        .iter()
                        .map(|r| {
                            r[i].iter()
                                .zip(&r[j])
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .sum();
                    total / m
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DenseMatrix::from_row_major(n, n, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnhOptions {
    pub rank: usize,
    pub k: usize,
    pub ridge: Ridge,
    pub seed: u64,
    pub pair_mode: PairMode,
    pub symmetrization: Symmetrization,
}

impl KnhOptions {
    pub fn new(rank: usize, k: usize) -> Self {
        Self {
            rank,
            k,
            ridge: Ridge::Auto,
            seed: 0,
            pair_mode: PairMode::Directed,
            symmetrization: Symmetrization::Union,
        }
    }
}

/// Every intermediate of one KNH graph construction.
#[derive(Debug, Clone)]
pub struct KnhGraph {
    pub projection: CanonicalProjection,
    /// Entities whose flat has a lower-dimensional span than expected.
    pub degenerate: Vec<usize>,
    pub distances: DenseMatrix,
    pub graph: WeightedGraph,
}

/// Projects two or three views into a shared space: CCA for two views,
/// tensor CCA for three.
pub fn project_views(views: &[ViewMatrix], rank: usize, ridge: Ridge, seed: u64) -> Result<CanonicalProjection> {
    match views {
        [v1, v2] => cca(v1, v2, rank, ridge),
        [_, _, _] => tcca(views, rank, ridge, seed),
        _ => Err(KnhError::validation(format!(
            "KNH graphs need 2 or 3 views, got {}",
            views.len()
        ))),
    }
}

/// Flat-pair distance matrix of a projection, plus the degenerate entities.
pub fn knh_distances(projection: &CanonicalProjection, mode: PairMode) -> Result<(DenseMatrix, Vec<usize>)> {
    let flats = flats_from_views(&projection.projected)?;
    let degenerate = flats
        .iter()
        .filter(|f| f.is_degenerate())
        .map(|f| f.entity_id)
        .collect();
    Ok((pairwise_flat_distances(&flats, mode)?, degenerate))
}

pub fn build_knh(views: &[ViewMatrix], opts: &KnhOptions) -> Result<KnhGraph> {
    let projection = project_views(views, opts.rank, opts.ridge, opts.seed)
        .map_err(|e| e.in_stage("projection"))?;
    let (distances, degenerate) =
        knh_distances(&projection, opts.pair_mode).map_err(|e| e.in_stage("flat distances"))?;
    let graph = knn_sparsify_with(&distances, opts.k, opts.symmetrization)
        .map_err(|e| e.in_stage("sparsify"))?;
    Ok(KnhGraph {
        projection,
        degenerate,
        distances,
        graph,
    })
}

pub fn build_knh_graph(
    views: &[ViewMatrix],
    rank: usize,
    k: usize,
    ridge: Ridge,
    seed: u64,
) -> Result<WeightedGraph> {
    let opts = KnhOptions {
        ridge,
        seed,
        ..KnhOptions::new(rank, k)
    };
    build_knh(views, &opts).map(|g| g.graph)
}
