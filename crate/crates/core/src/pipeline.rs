//! End-to-end orchestration: decompose each view, project, build the
//! entity graph, propagate a label split and score it, repeated over
//! seeded runs and optionally swept over rank and K.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlate::{ProjectionMetadata, Ridge, ViewMatrix};
use crate::error::{KnhError, Result};
use crate::flats::PairMode;
use crate::graphkit::{baseline_knn_distances, knh_distances, knn_sparsify_with, project_views, Symmetrization, WeightedGraph};
use crate::ingest::{load_dense_csv, load_labels, load_sparse_tensor, read_lines};
use crate::linalg::{cp_als_with, truncated_svd, CpOptions, DenseMatrix, SparseTensor3};
use crate::propagate::{
    classify, evaluate, fabp_with, split_labels, summarize, EdgeWeighting, FabpParams, LabelSet, Metrics,
    MetricsSummary, Split,
};

/// Graph construction compared by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Flats through the canonical projections.
    Knh,
    /// Mean per-view Euclidean distance between decomposed views.
    Knn,
    /// Mean per-view Euclidean distance between canonical projections.
    KnnCca,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Knh, Mode::Knn, Mode::KnnCca];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Knh => "knh",
            Mode::Knn => "knn",
            Mode::KnnCca => "knn_cca",
        }
    }

    pub fn projects(self) -> bool {
        self != Mode::Knn
    }
}

impl std::str::FromStr for Mode {
    type Err = KnhError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| KnhError::validation(format!("unknown mode `{s}`, expected knh, knn or knn_cca")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    /// Decomposed by truncated SVD.
    Matrix,
    /// Decomposed by CP-ALS.
    Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub path: PathBuf,
    #[serde(rename = "type")]
    pub kind: ViewKind,
    /// Decomposition rank; defaults to the projection rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Axis indexing the entities: 0 (rows) by default for matrices,
    /// 2 (third mode) by default for tensors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_mode: Option<usize>,
}

impl ViewSpec {
    pub fn entity_mode(&self) -> usize {
        self.entity_mode.unwrap_or(match self.kind {
            ViewKind::Matrix => 0,
            ViewKind::Tensor => 2,
        })
    }
}

fn default_homophily() -> f64 {
    FabpParams::default().homophily
}
fn default_train_frac() -> f64 {
    0.4
}
fn default_runs() -> usize {
    10
}
fn default_cp_sweeps() -> usize {
    200
}
fn default_cp_tol() -> f64 {
    1e-8
}
fn default_fabp_iters() -> usize {
    FabpParams::default().max_iters
}
fn default_fabp_tol() -> f64 {
    FabpParams::default().tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub views: Vec<ViewSpec>,
    pub labels: PathBuf,
    /// Canonical projection rank.
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub ridge: Ridge,
    #[serde(default = "default_homophily")]
    pub homophily: f64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub pair_mode: PairMode,
    #[serde(default)]
    pub symmetrization: Symmetrization,
    #[serde(default)]
    pub edge_weighting: EdgeWeighting,
    #[serde(default = "default_cp_sweeps")]
    pub cp_max_sweeps: usize,
    #[serde(default = "default_cp_tol")]
    pub cp_tol: f64,
    #[serde(default = "default_fabp_iters")]
    pub fabp_max_iters: usize,
    #[serde(default = "default_fabp_tol")]
    pub fabp_tol: f64,
}

fn default_mode() -> Mode {
    Mode::Knh
}

impl PipelineConfig {
    /// A config with defaults for everything but the inputs and R, K.
    pub fn new(views: Vec<ViewSpec>, labels: PathBuf, r: usize, k: usize) -> Self {
        Self {
            views,
            labels,
            r,
            k,
            ridge: Ridge::Auto,
            homophily: default_homophily(),
            train_frac: default_train_frac(),
            runs: default_runs(),
            seed: 0,
            mode: Mode::Knh,
            pair_mode: PairMode::Directed,
            symmetrization: Symmetrization::Union,
            edge_weighting: EdgeWeighting::Binary,
            cp_max_sweeps: default_cp_sweeps(),
            cp_tol: default_cp_tol(),
            fabp_max_iters: default_fabp_iters(),
            fabp_tol: default_fabp_tol(),
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_lines(path)?.join("\n");
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for v in &mut cfg.views {
            v.path = base.join(&v.path);
        }
        cfg.labels = base.join(&cfg.labels);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(KnhError::validation("config lists no views"));
        }
        if self.mode.projects() && !(2..=3).contains(&self.views.len()) {
            return Err(KnhError::validation(format!(
                "mode {} needs 2 or 3 views, got {}",
                self.mode.name(),
                self.views.len()
            )));
        }
        if self.r == 0 || self.k == 0 || self.runs == 0 {
            return Err(KnhError::validation("R, K and runs must be at least 1"));
        }
        for v in &self.views {
            let max_mode = match v.kind {
                ViewKind::Matrix => 1,
                ViewKind::Tensor => 2,
            };
            if v.entity_mode() > max_mode {
                return Err(KnhError::validation(format!(
                    "entity_mode {} invalid for {:?} view {}",
                    v.entity_mode(),
                    v.kind,
                    v.path.display()
                )));
            }
            if v.rank == Some(0) {
                return Err(KnhError::validation("view rank must be at least 1"));
            }
            if self.mode.projects() && v.rank.is_some_and(|r| r < self.r) {
                return Err(KnhError::validation(format!(
                    "view rank {} below projection rank R={}",
                    v.rank.unwrap_or(0),
                    self.r
                )));
            }
        }
        Ok(())
    }

    /// Decomposition rank of view `m`.
    pub fn view_rank(&self, m: usize) -> usize {
        self.views[m].rank.unwrap_or(self.r)
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    fn fabp_params(&self) -> FabpParams {
        FabpParams {
            homophily: self.homophily,
            max_iters: self.fabp_max_iters,
            tol: self.fabp_tol,
            weighting: self.edge_weighting,
        }
    }
}

/// A loaded view before decomposition.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewData {
    Matrix(DenseMatrix),
    Tensor(SparseTensor3),
}

/// Views and ground truth held in memory.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub views: Vec<ViewData>,
    pub truth: LabelSet,
}

fn entity_count(data: &ViewData, entity_mode: usize) -> usize {
    match data {
        ViewData::Matrix(m) => [m.rows(), m.cols()][entity_mode.min(1)],
        ViewData::Tensor(t) => t.dims()[entity_mode.min(2)],
    }
}

impl Inputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let views = cfg
            .views
            .iter()
            .map(|v| match v.kind {
                ViewKind::Matrix => load_dense_csv(&v.path).map(ViewData::Matrix),
                ViewKind::Tensor => load_sparse_tensor(&v.path).map(ViewData::Tensor),
            })
            .collect::<Result<Vec<_>>>()?;
        let n = entity_count(&views[0], cfg.views[0].entity_mode());
        let truth = load_labels(&cfg.labels, Some(n))?;
        let inputs = Self { views, truth };
        inputs.check(cfg)?;
        Ok(inputs)
    }

    /// Entity counts must agree across views and labels.
    pub fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        if self.views.len() != cfg.views.len() {
            return Err(KnhError::validation("config and inputs disagree on view count"));
        }
        for (m, (data, spec)) in self.views.iter().zip(&cfg.views).enumerate() {
            let n = entity_count(data, spec.entity_mode());
            if n != self.truth.len() {
                return Err(KnhError::validation(format!(
                    "view {m} has {n} entities, labels cover {}",
                    self.truth.len()
                )));
            }
        }
        Ok(())
    }

    pub fn entities(&self) -> usize {
        self.truth.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionInfo {
    pub rank: usize,
    /// 1 - ‖X - X̂‖ / ‖X‖.
    pub fit: f64,
    pub converged: bool,
}

/// Entity factor of one view: left or right singular vectors for a
/// matrix, the entity-mode CP factor for a tensor. Factors are unscaled.
pub fn decompose_view(
    data: &ViewData,
    rank: usize,
    entity_mode: usize,
    seed: u64,
    cp: (usize, f64),
) -> Result<(DenseMatrix, DecompositionInfo)> {
    match data {
        ViewData::Matrix(x) => {
            let f = truncated_svd(x, rank)?;
            let total = x.frobenius_norm().powi(2);
            let kept: f64 = f.s.iter().map(|s| s * s).sum();
            let fit = if total > 0.0 {
                1.0 - ((total - kept).max(0.0)).sqrt() / total.sqrt()
            } else {
                1.0
            };
            let factor = if entity_mode == 0 { f.u } else { f.v };
            Ok((factor, DecompositionInfo { rank, fit, converged: true }))
        }
        ViewData::Tensor(t) => {
            let opts = CpOptions {
                max_sweeps: cp.0,
                tol: cp.1,
                seed,
                ..CpOptions::new(rank)
            };
            let f = cp_als_with(t, &opts)?;
            let info = DecompositionInfo {
                rank,
                fit: f.fit,
                converged: f.converged,
            };
            let factor = match entity_mode {
                0 => f.a,
                1 => f.b,
                _ => f.c,
            };
            Ok((factor, info))
        }
    }
}

/// Decomposes every view with `rank_override` or each view's own rank.
pub fn decompose_views(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    rank_override: Option<usize>,
    seed: u64,
) -> Result<(Vec<ViewMatrix>, Vec<DecompositionInfo>)> {
    let mut views = Vec::with_capacity(inputs.views.len());
    let mut infos = Vec::with_capacity(inputs.views.len());
    for (m, (data, spec)) in inputs.views.iter().zip(&cfg.views).enumerate() {
        let rank = rank_override.unwrap_or_else(|| cfg.view_rank(m));
        let (factor, info) = decompose_view(data, rank, spec.entity_mode(), seed, (cfg.cp_max_sweeps, cfg.cp_tol))
            .map_err(|e| e.in_stage("decompose"))?;
        views.push(ViewMatrix::new(m, factor));
        infos.push(info);
    }
    Ok((views, infos))
}

/// Seconds spent per stage of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub decompose: f64,
    pub project: f64,
    pub distances: f64,
    pub sparsify: f64,
    pub propagate: f64,
    pub evaluate: f64,
}

/// Distances of one mode on decomposed views.
#[derive(Debug, Clone)]
pub struct ModeDistances {
    pub distances: DenseMatrix,
    pub projection: Option<ProjectionMetadata>,
    pub degenerate: Vec<usize>,
    pub project_secs: f64,
    pub distance_secs: f64,
}

pub fn mode_distances(
    mode: Mode,
    views: &[ViewMatrix],
    r: usize,
    ridge: Ridge,
    pair_mode: PairMode,
    seed: u64,
) -> Result<ModeDistances> {
    let values = |vs: &[ViewMatrix]| vs.iter().map(|v| v.values().clone()).collect::<Vec<_>>();
    if mode == Mode::Knn {
        let t = Instant::now();
        let distances = baseline_knn_distances(&values(views)).map_err(|e| e.in_stage("distances"))?;
        return Ok(ModeDistances {
            distances,
            projection: None,
            degenerate: Vec::new(),
            project_secs: 0.0,
            distance_secs: t.elapsed().as_secs_f64(),
        });
    }
    let t = Instant::now();
    let projection = project_views(views, r, ridge, seed).map_err(|e| e.in_stage("project"))?;
    let project_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (distances, degenerate) = match mode {
        Mode::Knh => knh_distances(&projection, pair_mode),
        _ => baseline_knn_distances(&projection.projected).map(|d| (d, Vec::new())),
    }
    .map_err(|e| e.in_stage("distances"))?;
    Ok(ModeDistances {
        distances,
        projection: Some(projection.metadata()),
        degenerate,
        project_secs,
        distance_secs: t.elapsed().as_secs_f64(),
    })
}

/// Graph, label split and outcome of propagating over one distance matrix.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub graph: WeightedGraph,
    pub split: Split,
    pub beliefs: Vec<f64>,
    pub predicted: LabelSet,
    pub ties: usize,
    pub unreached: usize,
    pub homophily: f64,
    pub metrics: Metrics,
}

pub fn propagate_distances(
    cfg: &PipelineConfig,
    distances: &DenseMatrix,
    k: usize,
    truth: &LabelSet,
    seed: u64,
    timings: &mut StageTimings,
) -> Result<Propagation> {
    let t = Instant::now();
    let graph = knn_sparsify_with(distances, k, cfg.symmetrization).map_err(|e| e.in_stage("sparsify"))?;
    timings.sparsify += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let split = split_labels(truth, cfg.train_frac, seed).map_err(|e| e.in_stage("split"))?;
    let beliefs = fabp_with(&graph, &split.priors, &cfg.fabp_params()).map_err(|e| e.in_stage("propagate"))?;
    timings.propagate += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (predicted, ties) = classify(&beliefs);
    let metrics = evaluate(&predicted, truth, &split.heldout).map_err(|e| e.in_stage("evaluate"))?;
    timings.evaluate += t.elapsed().as_secs_f64();
    Ok(Propagation {
        graph,
        split,
        predicted,
        ties: ties.iter().filter(|&&t| t).count(),
        unreached: beliefs.unreached.iter().filter(|&&u| u).count(),
        homophily: beliefs.homophily,
        beliefs: beliefs.values,
        metrics,
    })
}

/// Every intermediate of a single run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub seed: u64,
    pub views: Vec<ViewMatrix>,
    pub decompositions: Vec<DecompositionInfo>,
    pub distances: ModeDistances,
    pub propagation: Propagation,
    pub timings: StageTimings,
}

pub fn run_single(cfg: &PipelineConfig, inputs: &Inputs, run: usize) -> Result<RunArtifacts> {
    let seed = cfg.run_seed(run);
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let (views, decompositions) = decompose_views(cfg, inputs, None, seed)?;
    timings.decompose = t.elapsed().as_secs_f64();
    let distances = mode_distances(cfg.mode, &views, cfg.r, cfg.ridge, cfg.pair_mode, seed)?;
    timings.project = distances.project_secs;
    timings.distances = distances.distance_secs;
    let propagation = propagate_distances(cfg, &distances.distances, cfg.k, &inputs.truth, seed, &mut timings)?;
    Ok(RunArtifacts {
        seed,
        views,
        decompositions,
        distances,
        propagation,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub decompositions: Vec<DecompositionInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionMetadata>,
    pub degenerate_flats: usize,
    pub edges: usize,
    pub homophily: f64,
    pub ties: usize,
    pub unreached: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub config: PipelineConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: MetricsSummary,
}

impl RunReport {
    /// The report with every timing zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for run in &mut r.runs {
            run.timings = StageTimings::default();
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "mode {}  R={}  K={}  runs={}\n{:<10}{:>14}{:>14}{:>14}{:>14}\n",
            self.mode.name(),
            self.config.r,
            self.config.k,
            self.runs.len(),
            "run",
            "precision",
            "recall",
            "f1",
            "accuracy"
        );
        for r in &self.runs {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<10}{:>14.4}{:>14.4}{:>14.4}{:>14.4}",
                r.run, m.precision, m.recall, m.f1, m.accuracy
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:<10}{:>14}{:>14}{:>14}{:>14}",
            "mean±std",
            format!("{:.3}±{:.3}", a.precision.mean, a.precision.std),
            format!("{:.3}±{:.3}", a.recall.mean, a.recall.std),
            format!("{:.3}±{:.3}", a.f1.mean, a.f1.std),
            format!("{:.3}±{:.3}", a.accuracy.mean, a.accuracy.std),
        );
        out
    }
}

/// Runs `cfg.runs` seeded repetitions of the configured pipeline.
pub fn run_classify(cfg: &PipelineConfig, inputs: &Inputs) -> Result<RunReport> {
    cfg.validate()?;
    inputs.check(cfg)?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let a = run_single(cfg, inputs, run)?;
            Ok(RunRecord {
                run,
                seed: a.seed,
                metrics: a.propagation.metrics,
                decompositions: a.decompositions,
                projection: a.distances.projection,
                degenerate_flats: a.distances.degenerate.len(),
                edges: a.propagation.graph.edge_count(),
                homophily: a.propagation.homophily,
                ties: a.propagation.ties,
                unreached: a.propagation.unreached,
                timings: a.timings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<Metrics> = runs.iter().map(|r| r.metrics).collect();
    Ok(RunReport {
        mode: cfg.mode,
        config: cfg.clone(),
        runs,
        aggregate: summarize(&metrics),
    })
}

pub fn cmd_classify(config_path: &Path) -> Result<RunReport> {
    let cfg = PipelineConfig::load(config_path)?;
    let inputs = Inputs::load(&cfg).map_err(|e| e.in_stage("load"))?;
    run_classify(&cfg, &inputs)
}

/// One (mode, rank, K) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: Mode,
    pub rank: usize,
    pub k: usize,
    /// Present when every run of the cell succeeded.
    pub summary: Option<MetricsSummary>,
    pub runs: Vec<Metrics>,
    /// `ok` or the first error message.
    pub status: String,
}

/// Parses `a..b` or `a..b:step` (inclusive) or a comma list.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || KnhError::validation(format!("invalid range `{s}`, expected a..b[:step] or a,b,c"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let values = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, step)) => (num(b)?, num(step)?),
            None => (num(rest)?, 1),
        };
        let a = num(a)?;
        if step == 0 || b < a {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

/// Grid over decomposition rank (also used as R) and K for each mode.
///
/// Decompositions are shared across modes and K, distances across K.
/// Failed cells are recorded and the sweep continues. Rows are ordered by
/// (mode, rank, K) whatever the completion order.
pub fn run_sweep(cfg: &PipelineConfig, inputs: &Inputs, ranks: &[usize], ks: &[usize], modes: &[Mode]) -> Result<Vec<SweepRow>> {
    if ranks.is_empty() || ks.is_empty() || modes.is_empty() {
        return Err(KnhError::validation("sweep ranges must be nonempty"));
    }
    let base = PipelineConfig {
        mode: Mode::Knn,
        ..cfg.clone()
    };
    base.validate()?;
    inputs.check(cfg)?;

    // results[(rank, run)][mode][k]
    let jobs: Vec<(usize, usize)> = ranks
        .iter()
        .flat_map(|&r| (0..cfg.runs).map(move |run| (r, run)))
        .collect();
    let results: Vec<Vec<Vec<Result<Metrics, String>>>> = jobs
        .par_iter()
        .map(|&(rank, run)| {
            let seed = cfg.run_seed(run);
            let decomposed = decompose_views(cfg, inputs, Some(rank), seed);
            modes
                .iter()
                .map(|&mode| {
                    let dist = decomposed.as_ref().map_err(|e| e.to_string()).and_then(|(views, _)| {
                        if mode.projects() && !(2..=3).contains(&views.len()) {
                            return Err(format!("mode {} needs 2 or 3 views", mode.name()));
                        }
                        mode_distances(mode, views, rank, cfg.ridge, cfg.pair_mode, seed).map_err(|e| e.to_string())
                    });
                    ks.iter()
                        .map(|&k| {
                            let d = dist.as_ref().map_err(Clone::clone)?;
                            let mut t = StageTimings::default();
                            propagate_distances(cfg, &d.distances, k, &inputs.truth, seed, &mut t)
                                .map(|p| p.metrics)
                                .map_err(|e| e.to_string())
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(modes.len() * ranks.len() * ks.len());
    for (mi, &mode) in modes.iter().enumerate() {
        for (ri, &rank) in ranks.iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let cell: Vec<&Result<Metrics, String>> =
                    (0..cfg.runs).map(|run| &results[ri * cfg.runs + run][mi][ki]).collect();
                let runs: Vec<Metrics> = cell.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
                let error = cell.iter().find_map(|r| r.as_ref().err());
                rows.push(SweepRow {
                    mode,
                    rank,
                    k,
                    summary: error.is_none().then(|| summarize(&runs)),
                    runs,
                    status: error.map_or_else(|| "ok".to_string(), |e| e.replace([',', '\n'], ";")),
                });
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "mode,rank,K,f1_mean,f1_std,precision_mean,precision_std,recall_mean,recall_std,accuracy_mean,accuracy_std,status";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = write!(out, "{},{},{}", r.mode.name(), r.rank, r.k);
        match &r.summary {
            Some(s) => {
                for stat in [s.f1, s.precision, s.recall, s.accuracy] {
                    let _ = write!(out, ",{:.6},{:.6}", stat.mean, stat.std);
                }
            }
            None => out.push_str(",,,,,,,,"),
        }
        let _ = writeln!(out, ",{}", r.status);
    }
    out
}

pub fn cmd_sweep(config_path: &Path, ranks: &[usize], ks: &[usize], modes: &[Mode]) -> Result<Vec<SweepRow>> {
    let cfg = PipelineConfig::load(config_path)?;
    let inputs = Inputs::load(&cfg).map_err(|e| e.in_stage("load"))?;
    run_sweep(&cfg, &inputs, ranks, ks, modes)
}
