//! Command-line front end for the `knh` pipeline.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use knh::correlate::{Ridge, ViewMatrix};
use knh::error::{KnhError, Result};
use knh::flats::PairMode;
use knh::graphkit::knn_sparsify;
use knh::ingest::{
    build_tta_tensor, calibrate_noise_sigma, load_corpus, load_dense_csv, load_sparse_tensor, prune_vocabulary,
    save_dense_csv, save_labels, save_sparse_tensor, synth_views, SynthSpec, DEFAULT_WINDOW,
};
use knh::pipeline::{
    cmd_classify, cmd_sweep, decompose_view, mode_distances, parse_range, run_single, sweep_csv, DecompositionInfo,
    Inputs, Mode, PipelineConfig, ViewData, ViewKind, ViewSpec,
};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "knh", version, about = "K-nearest hyperplane graphs for multi-view classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured pipeline over seeded runs and report metrics.
    Classify(ClassifyArgs),
    /// Grid search over decomposition rank and K, writing a CSV table.
    Sweep(SweepArgs),
    /// Generate a synthetic multi-view dataset with labels and a config.
    Synth(SynthArgs),
    /// Decompose one view and write its entity factor.
    Decompose(DecomposeArgs),
    /// Build distances and the K-nearest graph from decomposed views.
    Graph(GraphArgs),
    /// Build the (term, term, article) co-occurrence tensor of a corpus.
    Tta(TtaArgs),
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Write the first run's decomposed views, distances and graph here.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `a..b`, `a..b:step` or `a,b,c`.
    #[arg(long)]
    pub ranks: String,
    #[arg(long)]
    pub ks: String,
    /// Comma-separated subset of knh, knn, knn_cca.
    #[arg(long, default_value = "knh,knn,knn_cca")]
    pub modes: String,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace noise_sigma by the level giving this single-view 1-NN accuracy.
    #[arg(long)]
    pub calibrate: Option<f64>,
    /// R and K written into the generated config.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Matrix,
    Tensor,
}

impl From<KindArg> for ViewKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Matrix => ViewKind::Matrix,
            KindArg::Tensor => ViewKind::Tensor,
        }
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "type", value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub rank: usize,
    /// Entity axis; 0 for matrices and 2 for tensors by default.
    #[arg(long)]
    pub entity_mode: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Entity factor CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Decomposed views (entity rows), comma-separated CSV paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub views: Vec<PathBuf>,
    #[arg(long, default_value = "knh")]
    pub mode: String,
    #[arg(short = 'R', long = "rank")]
    pub r: usize,
    #[arg(short = 'K', long = "k")]
    pub k: usize,
    /// `auto` or a fixed non-negative value.
    #[arg(long, default_value = "auto")]
    pub ridge: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub symmetric_pairs: bool,
    #[arg(long)]
    pub distances: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct TtaArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Drop terms found in fewer documents.
    #[arg(long)]
    pub min_df: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for an error.
pub fn exit_code(e: &KnhError) -> i32 {
    match e.root() {
        KnhError::Validation(_) | KnhError::Rank { .. } | KnhError::Singular(_) | KnhError::DegenerateFlat(_) => 2,
        KnhError::Parse { .. } | KnhError::Json(_) => 3,
        KnhError::Convergence { .. } => 4,
        KnhError::Capacity(_) => 5,
        KnhError::Io { .. } => 6,
        KnhError::Stage { .. } => 1,
    }
}

/// Sizes the global thread pool from `KNH_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("KNH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| KnhError::Validation(format!("KNH_THREADS must be a positive integer, got `{value}`")))?;
    // A second initialization fails harmlessly, e.g. in tests.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn parse_ridge(s: &str) -> Result<Ridge> {
    if s == "auto" {
        return Ok(Ridge::Auto);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| *v >= 0.0 && v.is_finite())
        .map(Ridge::Fixed)
        .ok_or_else(|| KnhError::Validation(format!("ridge must be `auto` or a non-negative number, got `{s}`")))
}

pub fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    let mut modes = s.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<Mode>>>()?;
    modes.sort();
    modes.dedup();
    Ok(modes)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> KnhError {
    KnhError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Classify(a) => classify(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
        Command::Decompose(a) => decompose(a),
        Command::Graph(a) => graph(a),
        Command::Tta(a) => tta(a),
    }
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let report = cmd_classify(&a.config)?;
    let json = report.to_json()? + "\n";
    if let Some(out) = &a.out {
        write_file(out, &json)?;
    }
    if a.json {
        print!("{json}");
    } else {
        print!("{}", report.table());
    }
    if let Some(dir) = &a.artifacts {
        let cfg = PipelineConfig::load(&a.config)?;
        let inputs = Inputs::load(&cfg).map_err(|e| e.in_stage("load"))?;
        let run = run_single(&cfg, &inputs, 0)?;
        for v in &run.views {
            save_dense_csv(&dir.join(format!("view{}.csv", v.view_id)), v.values())?;
        }
        save_dense_csv(&dir.join("distances.csv"), &run.distances.distances)?;
        run.propagation.graph.save(&dir.join("graph.txt"))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let ranks = parse_range(&a.ranks)?;
    let ks = parse_range(&a.ks)?;
    let modes = parse_modes(&a.modes)?;
    let rows = cmd_sweep(&a.config, &ranks, &ks, &modes)?;
    for r in rows.iter().filter(|r| r.status != "ok") {
        log::warn!("{} rank {} K {} failed: {}", r.mode.name(), r.rank, r.k, r.status);
    }
    let csv = sweep_csv(&rows);
    match &a.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| io_error(&a.spec, e))?;
    let mut spec: SynthSpec = serde_json::from_str(&text)?;
    if let Some(target) = a.calibrate {
        let seeds: Vec<u64> = (0..10).map(|i| spec.seed.wrapping_add(1000 + i)).collect();
        spec.noise_sigma = calibrate_noise_sigma(&spec, target, 0, &seeds)?;
        log::info!("calibrated noise_sigma {}", spec.noise_sigma);
    }
    let (views, truth) = synth_views(&spec)?;
    let mut specs = Vec::new();
    for v in &views {
        let name = format!("view{}.csv", v.view_id);
        save_dense_csv(&a.out.join(&name), v.values())?;
        specs.push(ViewSpec {
            path: PathBuf::from(name),
            kind: ViewKind::Matrix,
            rank: None,
            entity_mode: None,
        });
    }
    save_labels(&a.out.join("labels.csv"), &truth)?;
    let mut cfg = PipelineConfig::new(specs, PathBuf::from("labels.csv"), a.rank, a.k);
    cfg.seed = spec.seed;
    if views.len() > 3 {
        cfg.mode = Mode::Knn;
    }
    write_file(&a.out.join("config.json"), &to_json(&cfg)?)?;
    write_file(&a.out.join("spec.json"), &to_json(&spec)?)?;
    println!("wrote {} views of {} entities to {}", views.len(), truth.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DecomposeReport<'a> {
    input: &'a Path,
    kind: ViewKind,
    entity_mode: usize,
    seed: u64,
    #[serde(flatten)]
    info: DecompositionInfo,
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let kind = ViewKind::from(a.kind);
    let spec = ViewSpec {
        path: a.input.clone(),
        kind,
        rank: Some(a.rank),
        entity_mode: a.entity_mode,
    };
    let data = match kind {
        ViewKind::Matrix => ViewData::Matrix(load_dense_csv(&a.input)?),
        ViewKind::Tensor => ViewData::Tensor(load_sparse_tensor(&a.input)?),
    };
    let max_mode = if kind == ViewKind::Matrix { 1 } else { 2 };
    if spec.entity_mode() > max_mode {
        return Err(KnhError::Validation(format!("entity mode {} out of range", spec.entity_mode())));
    }
    let (factor, info) = decompose_view(&data, a.rank, spec.entity_mode(), a.seed, (a.max_sweeps, a.tol))?;
    save_dense_csv(&a.out, &factor)?;
    let report = DecomposeReport {
        input: &a.input,
        kind,
        entity_mode: spec.entity_mode(),
        seed: a.seed,
        info,
    };
    print!("{}", to_json(&report)?);
    Ok(())
}

fn graph(a: GraphArgs) -> Result<()> {
    let mode: Mode = a.mode.parse()?;
    let ridge = parse_ridge(&a.ridge)?;
    let views = a
        .views
        .iter()
        .enumerate()
        .map(|(m, p)| load_dense_csv(p).map(|v| ViewMatrix::new(m, v)))
        .collect::<Result<Vec<_>>>()?;
    let pair_mode = if a.symmetric_pairs {
        PairMode::Symmetric
    } else {
        PairMode::Directed
    };
    let d = mode_distances(mode, &views, a.r, ridge, pair_mode, a.seed)?;
    if !d.degenerate.is_empty() {
        log::warn!("{} entities have degenerate flats", d.degenerate.len());
    }
    let g = knn_sparsify(&d.distances, a.k)?;
    save_dense_csv(&a.distances, &d.distances)?;
    g.save(&a.graph)?;
    if let Some(p) = &d.projection {
        print!("{}", to_json(p)?);
    }
    Ok(())
}

fn tta(a: TtaArgs) -> Result<()> {
    let mut corpus = load_corpus(&a.corpus)?;
    if let Some(min_df) = a.min_df {
        let (pruned, kept) = prune_vocabulary(&corpus, min_df)?;
        log::info!("kept {} of {} terms", kept.len(), corpus.vocab_size());
        corpus = pruned;
    }
    let t = build_tta_tensor(&corpus, a.window)?;
    save_sparse_tensor(&a.out, &t)?;
    let [i, j, k] = t.dims();
    println!("{i}x{j}x{k} tensor with {} nonzeros", t.nnz());
    Ok(())
}
