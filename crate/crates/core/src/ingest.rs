//! File formats, the (term, term, article) co-occurrence tensor and the
//! synthetic multi-view generator.
//!
//! Formats:
//! - dense matrix: CSV, first line `rows,cols`, then one line per row
//! - sparse tensor: first line `%dims I J K`, then `i j k value` lines
//! - labels: CSV `entity_id,label` with label `1`, `0` or `-1` (unknown)
//! - corpus: one document per line, whitespace-separated token ids

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlate::ViewMatrix;
use crate::error::{KnhError, Result};
use crate::linalg::{DenseMatrix, SparseTensor3};
use crate::propagate::{Label, LabelSet};

pub(crate) fn parse_error(path: &Path, line: usize, message: &str) -> KnhError {
    KnhError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| KnhError::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| KnhError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| KnhError::io(path, e))
}

/// Parses a finite decimal; NaN and infinities are rejected.
fn parse_finite(token: &str, path: &Path, line: usize) -> Result<f64> {
    match token.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(parse_error(path, line, &format!("non-finite value `{}`", token.trim()))),
        Err(_) => Err(parse_error(path, line, &format!("invalid number `{}`", token.trim()))),
    }
}

fn parse_index(token: &str, path: &Path, line: usize) -> Result<usize> {
    token
        .trim()
        .parse::<usize>()
        .map_err(|_| parse_error(path, line, &format!("invalid index `{}`", token.trim())))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn dense_csv_string(m: &DenseMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_dense_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_text(path, &dense_csv_string(m))
}

pub fn load_dense_csv(path: &Path) -> Result<DenseMatrix> {
    let lines = read_lines(path)?;
    let mut body = content_lines(&lines);
    let Some((hline, header)) = body.next() else {
        return Err(parse_error(path, 1, "missing `rows,cols` header"));
    };
    let dims: Vec<&str> = header.split(',').collect();
    let [rows, cols] = dims[..] else {
        return Err(parse_error(path, hline, "header must be `rows,cols`"));
    };
    let rows = parse_index(rows, path, hline)?;
    let cols = parse_index(cols, path, hline)?;

    let mut values = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    let mut last_line = hline;
    for (lineno, line) in body {
        last_line = lineno;
        if seen == rows {
            return Err(parse_error(
                path,
                lineno,
                &format!("header declares {rows} rows but more follow"),
            ));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(parse_error(
                path,
                lineno,
                &format!("expected {cols} values, found {}", fields.len()),
            ));
        }
        for f in fields {
            values.push(parse_finite(f, path, lineno)?);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_error(
            path,
            last_line + 1,
            &format!("header declares {rows} rows, found {seen}"),
        ));
    }
    DenseMatrix::from_row_major(rows, cols, values)
}

pub fn save_sparse_tensor(path: &Path, t: &SparseTensor3) -> Result<()> {
    let [i, j, k] = t.dims();
    let mut out = format!("%dims {i} {j} {k}\n");
    for (i, j, k, v) in t.entries() {
        let _ = writeln!(out, "{i} {j} {k} {v}");
    }
    write_text(path, &out)
}

pub fn load_sparse_tensor(path: &Path) -> Result<SparseTensor3> {
    let lines = read_lines(path)?;
    let mut body = content_lines(&lines);
    let Some((hline, header)) = body.next() else {
        return Err(parse_error(path, 1, "missing `%dims I J K` header"));
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let ["%dims", i, j, k] = fields[..] else {
        return Err(parse_error(path, hline, "header must be `%dims I J K`"));
    };
    let dims = [
        parse_index(i, path, hline)?,
        parse_index(j, path, hline)?,
        parse_index(k, path, hline)?,
    ];
    let mut entries = Vec::new();
    for (lineno, line) in body {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, k, v] = fields[..] else {
            return Err(parse_error(path, lineno, "expected `i j k value`"));
        };
        let entry = (
            parse_index(i, path, lineno)?,
            parse_index(j, path, lineno)?,
            parse_index(k, path, lineno)?,
            parse_finite(v, path, lineno)?,
        );
        if entry.0 >= dims[0] || entry.1 >= dims[1] || entry.2 >= dims[2] {
            return Err(parse_error(path, lineno, "index outside declared dims"));
        }
        entries.push(entry);
    }
    SparseTensor3::new(dims, entries)
}

pub fn labels_csv_string(labels: &LabelSet) -> String {
    let mut out = String::new();
    for (i, l) in labels.labels().iter().enumerate() {
        let _ = writeln!(out, "{i},{}", l.code());
    }
    out
}

pub fn save_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    write_text(path, &labels_csv_string(labels))
}

/// Reads `entity_id,label` lines. Entities missing from the file are
/// unknown; `n` defaults to one past the largest id present.
pub fn load_labels(path: &Path, n: Option<usize>) -> Result<LabelSet> {
    let lines = read_lines(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in content_lines(&lines) {
        if pairs.is_empty() && line.eq_ignore_ascii_case("entity_id,label") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [id, label] = fields[..] else {
            return Err(parse_error(path, lineno, "expected `entity_id,label`"));
        };
        let id = parse_index(id, path, lineno)?;
        let label = match label.trim() {
            "1" => Label::Positive,
            "0" => Label::Negative,
            "-1" => Label::Unknown,
            other => {
                return Err(parse_error(
                    path,
                    lineno,
                    &format!("label must be 1, 0 or -1, got `{other}`"),
                ))
            }
        };
        pairs.push((lineno, id, label));
    }
    let n = n.unwrap_or_else(|| pairs.iter().map(|p| p.1 + 1).max().unwrap_or(0));
    let mut labels = vec![Label::Unknown; n];
    let mut seen = vec![false; n];
    for (lineno, id, label) in pairs {
        if id >= n {
            return Err(parse_error(path, lineno, &format!("entity {id} outside 0..{n}")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(parse_error(path, lineno, &format!("duplicate entity {id}")));
        }
        labels[id] = label;
    }
    Ok(LabelSet::new(labels))
}

/// Tokenized documents over a vocabulary of integer ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCorpus {
    documents: Vec<Vec<usize>>,
    vocab_size: usize,
    doc_ids: Vec<String>,
}

impl TokenCorpus {
    pub fn new(documents: Vec<Vec<usize>>, vocab_size: usize, doc_ids: Vec<String>) -> Result<Self> {
        if doc_ids.len() != documents.len() {
            return Err(KnhError::validation("one document id per document is required"));
        }
        if documents.iter().all(Vec::is_empty) {
            return Err(KnhError::validation("corpus has no tokens"));
        }
        if let Some(t) = documents.iter().flatten().find(|&&t| t >= vocab_size) {
            return Err(KnhError::validation(format!(
                "token {t} outside vocabulary of {vocab_size}"
            )));
        }
        Ok(Self {
            documents,
            vocab_size,
            doc_ids,
        })
    }

    /// Documents named by their position, vocabulary sized to the largest id.
    pub fn from_documents(documents: Vec<Vec<usize>>) -> Result<Self> {
        let vocab_size = documents.iter().flatten().max().map_or(0, |m| m + 1);
        let doc_ids = (0..documents.len()).map(|i| i.to_string()).collect();
        Self::new(documents, vocab_size, doc_ids)
    }

    pub fn documents(&self) -> &[Vec<usize>] {
        &self.documents
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }
}

pub fn load_corpus(path: &Path) -> Result<TokenCorpus> {
    let lines = read_lines(path)?;
    let mut documents = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let doc = line
            .split_whitespace()
            .map(|t| parse_index(t, path, i + 1))
            .collect::<Result<Vec<_>>>()?;
        documents.push(doc);
    }
    TokenCorpus::from_documents(documents)
}

/// Drops tokens that occur in fewer than `min_df` documents and renumbers
/// the rest densely. Returns the new corpus and, for each new id, the old id.
pub fn prune_vocabulary(corpus: &TokenCorpus, min_df: usize) -> Result<(TokenCorpus, Vec<usize>)> {
    let mut df = vec![0usize; corpus.vocab_size];
    for doc in &corpus.documents {
        let mut seen: Vec<usize> = doc.clone();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            df[t] += 1;
        }
    }
    let kept: Vec<usize> = (0..corpus.vocab_size).filter(|&t| df[t] >= min_df).collect();
    let mut remap = vec![usize::MAX; corpus.vocab_size];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let documents = corpus
        .documents
        .iter()
        .map(|d| d.iter().map(|&t| remap[t]).filter(|&t| t != usize::MAX).collect())
        .collect();
    let pruned = TokenCorpus::new(documents, kept.len(), corpus.doc_ids.clone())?;
    Ok((pruned, kept))
}

/// Window size used when none is configured.
pub const DEFAULT_WINDOW: usize = 5;

/// (term, term, article) co-occurrence counts.
///
/// Two token positions co-occur when they fit in one window of `window`
/// consecutive tokens, i.e. their distance is below `window`. Each such
/// position pair adds one to `(a, b, doc)` and `(b, a, doc)`; pairs of the
/// same term are skipped.
pub fn build_tta_tensor(corpus: &TokenCorpus, window: usize) -> Result<SparseTensor3> {
    if window < 2 {
        return Err(KnhError::validation(format!("window must be at least 2, got {window}")));
    }
    let mut entries = Vec::new();
    for (doc_idx, doc) in corpus.documents.iter().enumerate() {
        for (p, &a) in doc.iter().enumerate() {
            for &b in doc.iter().skip(p + 1).take(window - 1) {
                if a != b {
                    entries.push((a, b, doc_idx, 1.0));
                    entries.push((b, a, doc_idx, 1.0));
                }
            }
        }
    }
    SparseTensor3::new(
        [corpus.vocab_size, corpus.vocab_size, corpus.documents.len()],
        entries,
    )
}

/// Parameters of the synthetic clustered multi-view benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_clusters: usize,
    pub latent_dim: usize,
    pub view_dims: Vec<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Distance between cluster centers in the latent space.
    #[serde(default = "default_separation")]
    pub cluster_separation: f64,
    /// Standard deviation of entity latents around their center.
    #[serde(default = "default_spread")]
    pub cluster_spread: f64,
}

fn default_separation() -> f64 {
    4.0
}

fn default_spread() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn two_view(n_entities: usize, latent_dim: usize, dims: (usize, usize), noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_entities,
            n_clusters: 2,
            latent_dim,
            view_dims: vec![dims.0, dims.1],
            noise_sigma,
            seed,
            cluster_separation: default_separation(),
            cluster_spread: default_spread(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_clusters < 2 {
            return Err(KnhError::validation("need at least 2 clusters"));
        }
        if self.n_entities < self.n_clusters {
            return Err(KnhError::validation("fewer entities than clusters"));
        }
        if self.latent_dim == 0 || self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return Err(KnhError::validation("dimensions must be at least 1"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("cluster_separation", self.cluster_separation),
            ("cluster_spread", self.cluster_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(KnhError::validation(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Clustered entities observed through noisy random linear views.
///
/// Entity `i` belongs to cluster `i mod n_clusters`; its label is positive
/// for odd clusters. Latents are drawn around the cluster centers, mapped
/// into each view by a Gaussian matrix and perturbed by independent noise.
pub fn synth_views(spec: &SynthSpec) -> Result<(Vec<ViewMatrix>, LabelSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, l) = (spec.n_entities, spec.latent_dim);

    let raw = DMatrix::from_fn(l, spec.n_clusters, |_, _| normal());
    let centers = if spec.n_clusters <= l {
        // Orthonormal directions put every pair of centers at exactly the
        // requested separation.
        raw.qr().q()
    } else {
        let mut c = raw;
        for mut col in c.column_iter_mut() {
            col.normalize_mut();
        }
        c
    } * (spec.cluster_separation / std::f64::consts::SQRT_2);

    let cluster = |i: usize| i % spec.n_clusters;
    let latent = DMatrix::from_fn(n, l, |i, d| centers[(d, cluster(i))] + spec.cluster_spread * normal());

    let mut views = Vec::with_capacity(spec.view_dims.len());
    for (id, &dim) in spec.view_dims.iter().enumerate() {
        let map = DMatrix::from_fn(l, dim, |_, _| normal() / (l as f64).sqrt());
        let mut x = &latent * map;
        x.iter_mut().for_each(|v| *v += spec.noise_sigma * normal());
        views.push(ViewMatrix::new(id, DenseMatrix::from_matrix(x)?));
    }
    let labels = (0..n)
        .map(|i| if cluster(i) % 2 == 1 { Label::Positive } else { Label::Negative })
        .collect();
    Ok((views, LabelSet::new(labels)))
}

pub fn synth_two_view(spec: &SynthSpec) -> Result<([ViewMatrix; 2], LabelSet)> {
    if spec.view_dims.len() != 2 {
        return Err(KnhError::validation(format!(
            "two-view generator needs 2 view dims, got {}",
            spec.view_dims.len()
        )));
    }
    let (views, labels) = synth_views(spec)?;
    let [a, b]: [ViewMatrix; 2] = views.try_into().expect("two views");
    Ok(([a, b], labels))
}

/// Leave-one-out 1-nearest-neighbor accuracy over the labeled rows.
pub fn one_nn_accuracy(view: &DenseMatrix, truth: &LabelSet) -> Result<f64> {
    if view.rows() != truth.len() {
        return Err(KnhError::validation("view and labels disagree on entity count"));
    }
    let rows = view.to_rows();
    let known: Vec<usize> = (0..rows.len()).filter(|&i| truth.get(i) != Label::Unknown).collect();
    if known.len() < 2 {
        return Err(KnhError::validation("need at least 2 labeled entities"));
    }
    let mut correct = 0usize;
    for &i in &known {
        let mut best = (f64::INFINITY, usize::MAX);
        for &j in known.iter().filter(|&&j| j != i) {
            let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        if truth.get(best.1) == truth.get(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / known.len() as f64)
}

/// Mean leave-one-out 1-NN accuracy of view `view` across `seeds`, with the
/// rest of `spec` fixed and the noise level set to `sigma`.
pub fn mean_one_nn_accuracy(spec: &SynthSpec, sigma: f64, view: usize, seeds: &[u64]) -> Result<f64> {
    let mut total = 0.0;
    for &seed in seeds {
        let s = SynthSpec {
            noise_sigma: sigma,
            seed,
            ..spec.clone()
        };
        let (views, truth) = synth_views(&s)?;
        let v = views
            .get(view)
            .ok_or_else(|| KnhError::validation(format!("no view {view}")))?;
        total += one_nn_accuracy(v.values(), &truth)?;
    }
    Ok(total / seeds.len().max(1) as f64)
}

/// Bisects the noise level at which single-view 1-NN accuracy, averaged
/// over `seeds`, falls to `target`.
pub fn calibrate_noise_sigma(spec: &SynthSpec, target: f64, view: usize, seeds: &[u64]) -> Result<f64> {
    if !(0.5 < target && target < 1.0) {
        return Err(KnhError::validation("target accuracy must lie in (0.5, 1)"));
    }
    if seeds.is_empty() {
        return Err(KnhError::validation("no calibration seeds"));
    }
    let mut lo = 0.0;
    let mut hi = spec.cluster_separation.max(1.0);
    let mut expansions = 0;
    while mean_one_nn_accuracy(spec, hi, view, seeds)? > target {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 30 {
            return Err(KnhError::Convergence {
                iterations: expansions,
                residual: hi,
            });
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if mean_one_nn_accuracy(spec, mid, view, seeds)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
