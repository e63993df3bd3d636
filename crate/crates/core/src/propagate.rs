//! Binary label propagation with linearized belief propagation (FaBP),
//! stratified label splits and classification metrics.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KnhError, Result};
use crate::graphkit::WeightedGraph;

/// Positive is the misinformative class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
    Unknown,
}

impl Label {
    /// Code used in label files.
    pub fn code(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => 0,
            Label::Unknown => -1,
        }
    }

    /// Centered prior belief.
    pub fn prior(self) -> f64 {
        match self {
            Label::Positive => 0.5,
            Label::Negative => -0.5,
            Label::Unknown => 0.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
            Label::Unknown => Label::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<Label>,
}

impl LabelSet {
    pub fn new(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn unknown(n: usize) -> Self {
        Self::new(vec![Label::Unknown; n])
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Positive and negative exchanged.
    pub fn flipped(&self) -> Self {
        Self::new(self.labels.iter().map(|l| l.flipped()).collect())
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeighting {
    /// Unit weight on every edge.
    #[default]
    Binary,
    /// exp(-d²/σ²) with σ the median nonzero edge distance.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FabpParams {
    pub homophily: f64,
    pub max_iters: usize,
    pub tol: f64,
    #[serde(default)]
    pub weighting: EdgeWeighting,
}

impl Default for FabpParams {
    fn default() -> Self {
        Self {
            homophily: 0.05,
            max_iters: 10_000,
            tol: 1e-10,
            weighting: EdgeWeighting::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beliefs {
    pub values: Vec<f64>,
    /// Nodes whose component holds no labeled node; their belief is 0.
    pub unreached: Vec<bool>,
    /// Homophily after clamping to [`homophily_bound`].
    pub homophily: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl Beliefs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Largest homophily accepted for `g`: 90% of 1/(2(1 + 2 d_max)).
///
/// Write the system as b = phi + N b with N = cA - aD. Its row sums are
/// rho = 2h d / (1 - 2h), and rho < 1/2 exactly when h < 1/(2(1 + 2 d_max)).
/// Then |b_i - phi_i| <= 0.5 rho / (1 - rho) < 0.5, so every labeled node
/// keeps the sign of its prior. The same bound makes the matrix strictly
/// diagonally dominant, hence positive definite.
pub fn homophily_bound(g: &WeightedGraph) -> f64 {
    let d_max = (0..g.n()).map(|u| g.degree(u)).max().unwrap_or(0);
    0.9 / (2.0 * (1.0 + 2.0 * d_max as f64))
}

/// The FaBP system I + aD - cA in sparse row form.
#[derive(Debug, Clone)]
pub struct FabpSystem {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl FabpSystem {
    pub fn new(g: &WeightedGraph, homophily: f64, weighting: EdgeWeighting) -> Self {
        let h = homophily;
        let a = 4.0 * h * h / (1.0 - 4.0 * h * h);
        let c = 2.0 * h / (1.0 - 4.0 * h * h);
        let sigma2 = match weighting {
            EdgeWeighting::Binary => 0.0,
            EdgeWeighting::Gaussian => median_distance(g).powi(2),
        };
        let weight = |d: f64| match weighting {
            EdgeWeighting::Binary => 1.0,
            EdgeWeighting::Gaussian if sigma2 > 0.0 => (-d * d / sigma2).exp(),
            EdgeWeighting::Gaussian => 1.0,
        };
        let mut diag = vec![1.0; g.n()];
        let mut rows = vec![Vec::new(); g.n()];
        for (u, row) in rows.iter_mut().enumerate() {
            for &(v, d) in g.neighbors(u) {
                let w = weight(d);
                diag[u] += a * w;
                row.push((v, -c * w));
            }
        }
        Self { diag, rows }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (u, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[u] * x[u];
            for &(v, w) in &self.rows[u] {
                acc += w * x[v];
            }
            *o = acc;
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for u in 0..n {
            m[u * n + u] = self.diag[u];
            for &(v, w) in &self.rows[u] {
                m[u * n + v] += w;
            }
        }
        m
    }

    pub fn residual_norm(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut mx = vec![0.0; self.n()];
        self.apply(x, &mut mx);
        mx.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

fn median_distance(g: &WeightedGraph) -> f64 {
    let mut d: Vec<f64> = g.edges().iter().map(|e| e.2).filter(|&w| w > 0.0).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient from a zero start; returns (x, iterations).
fn conjugate_gradient(m: &FabpSystem, rhs: &[f64], max_iters: usize, tol: f64) -> (Vec<f64>, usize) {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut mp = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iters = 0;
    while iters < max_iters && rr.sqrt() >= tol {
        m.apply(&p, &mut mp);
        let alpha = rr / dot(&p, &mp);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iters += 1;
    }
    (x, iters)
}

/// Marks nodes whose connected component contains no labeled node.
fn unreached_nodes(g: &WeightedGraph, priors: &LabelSet) -> Vec<bool> {
    let n = g.n();
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| priors.get(u) != Label::Unknown).collect();
    for &u in &queue {
        reached[u] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &(v, _) in g.neighbors(u) {
            if !reached[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
    reached.into_iter().map(|r| !r).collect()
}

pub fn fabp(g: &WeightedGraph, priors: &LabelSet, homophily: f64, max_iters: usize, tol: f64) -> Result<Beliefs> {
    fabp_with(
        g,
        priors,
        &FabpParams {
            homophily,
            max_iters,
            tol,
            weighting: EdgeWeighting::Binary,
        },
    )
}

/// Solves (I + aD - cA) b = φ by conjugate gradient.
///
/// Homophily above [`homophily_bound`] is clamped with a warning. The
/// returned residual is recomputed from the final iterate.
pub fn fabp_with(g: &WeightedGraph, priors: &LabelSet, params: &FabpParams) -> Result<Beliefs> {
    if priors.len() != g.n() {
        return Err(KnhError::validation(format!(
            "{} priors for a graph of {} nodes",
            priors.len(),
            g.n()
        )));
    }
    if !(params.homophily > 0.0 && params.homophily < 0.5) {
        return Err(KnhError::validation(format!(
            "homophily must lie in (0, 0.5), got {}",
            params.homophily
        )));
    }
    if !(params.tol > 0.0 && params.tol.is_finite()) || params.max_iters == 0 {
        return Err(KnhError::validation("tol must be positive and max_iters at least 1"));
    }
    let bound = homophily_bound(g);
    let homophily = if params.homophily > bound {
        // Repeated runs on similar graphs would otherwise repeat this line.
        static WARNED: AtomicBool = AtomicBool::new(false);
        let msg = format!(
            "homophily {} exceeds the safe bound for this graph, clamped to {bound:.6}",
            params.homophily
        );
        if WARNED.swap(true, Ordering::Relaxed) {
            log::debug!("{msg}");
        } else {
            log::warn!("{msg}");
        }
        bound
    } else {
        params.homophily
    };

    let system = FabpSystem::new(g, homophily, params.weighting);
    let rhs: Vec<f64> = priors.labels().iter().map(|l| l.prior()).collect();
    let (values, iterations) = conjugate_gradient(&system, &rhs, params.max_iters, params.tol);
    let residual = system.residual_norm(&values, &rhs);
    if !(residual < params.tol) {
        return Err(KnhError::Convergence { iterations, residual });
    }
    let unreached = unreached_nodes(g, priors);
    if unreached.iter().any(|&u| u) {
        log::warn!(
            "{} nodes lie in components without labels",
            unreached.iter().filter(|&&u| u).count()
        );
    }
    Ok(Beliefs {
        values,
        unreached,
        homophily,
        iterations,
        residual,
    })
}

/// Sign thresholding; exact zeros become negative and are flagged as ties.
pub fn classify(b: &Beliefs) -> (LabelSet, Vec<bool>) {
    classify_values(&b.values)
}

pub fn classify_values(values: &[f64]) -> (LabelSet, Vec<bool>) {
    let labels = values
        .iter()
        .map(|&v| if v > 0.0 { Label::Positive } else { Label::Negative })
        .collect();
    let ties = values.iter().map(|&v| v == 0.0).collect();
    (labels, ties)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub priors: LabelSet,
    /// Known-truth entities that were not given to propagation.
    pub heldout: Vec<bool>,
}

/// Stratified split: each class gives max(1, ⌊train_frac·size⌋) randomly
/// chosen labeled nodes. Unknown-truth entities are neither labeled nor held out.
pub fn split_labels(truth: &LabelSet, train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(KnhError::validation(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut priors = LabelSet::unknown(truth.len());
    let mut heldout = vec![false; truth.len()];
    for class in [Label::Positive, Label::Negative] {
        let mut members = truth.indices_of(class);
        if members.len() < 2 {
            return Err(KnhError::validation(format!(
                "class {class:?} has {} members, need at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        // The small offset keeps e.g. 0.29 * 100 from flooring to 28.
        let take = ((train_frac * members.len() as f64 + 1e-9).floor() as usize).max(1);
        for (rank, &i) in members.iter().enumerate() {
            if rank < take {
                priors.labels[i] = class;
            } else {
                heldout[i] = true;
            }
        }
    }
    Ok(Split { priors, heldout })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Metrics {
    /// Ratios from a confusion matrix; an empty denominator gives 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            tp,
            fp,
            fn_,
            tn,
        }
    }
}

/// Metrics over the held-out entities whose truth is known.
pub fn evaluate(pred: &LabelSet, truth: &LabelSet, heldout: &[bool]) -> Result<Metrics> {
    if pred.len() != truth.len() || heldout.len() != truth.len() {
        return Err(KnhError::validation("prediction, truth and mask lengths differ"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in (0..truth.len()).filter(|&i| heldout[i]) {
        match (pred.get(i), truth.get(i)) {
            (_, Label::Unknown) => continue,
            (Label::Unknown, _) => {
                return Err(KnhError::validation(format!("no prediction for held-out entity {i}")))
            }
            (Label::Positive, Label::Positive) => tp += 1,
            (Label::Positive, Label::Negative) => fp += 1,
            (Label::Negative, Label::Positive) => fn_ += 1,
            (Label::Negative, Label::Negative) => tn += 1,
        }
    }
    if tp + fp + fn_ + tn == 0 {
        return Err(KnhError::validation("held-out set is empty"));
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub accuracy: Stat,
}

pub fn summarize(runs: &[Metrics]) -> MetricsSummary {
    let col = |f: fn(&Metrics) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
    MetricsSummary {
        precision: col(|m| m.precision),
        recall: col(|m| m.recall),
        f1: col(|m| m.f1),
        accuracy: col(|m| m.accuracy),
    }
}
