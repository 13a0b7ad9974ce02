//! Unsupervised mode annotation via gradient clustering.
//!
//! A bigram logit table over trajectory tokens stands in for the gradient
//! model: its per-example log-likelihood gradients have a closed form and are
//! finite-difference checkable. Gradients are sketched with a seeded
//! Rademacher projection (the sign matrix is derived on the fly, never
//! materialized), clustered with k-means++, and scored against ground-truth
//! mode labels by permutation-matched macro-F1.
//!
//! Trajectory serializations carry traversal structure (visit, backtrack,
//! level markers) but no mode or heuristic names, so discovery cannot cheat
//! by reading labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::TrainRecord;
use crate::exec::{par_map, par_map_range};
use crate::rng::stream;

/// The fixed token vocabulary of trajectory serializations: sentinels,
/// state-size and traversal markers, operators, and result-magnitude buckets.
pub const VOCAB: [&str; 17] = [
    "<s>", "</s>", "s1", "s2", "s3", "s4", "b", "l", "!", "+", "-", "*", "/", "n0", "n1", "n2",
    "n3",
];

pub const DEFAULT_PROJECTION_DIM: usize = 512;
pub const DEFAULT_CLUSTERS: usize = 2;
pub const DEFAULT_FIT_EPOCHS: usize = 30;
pub const DEFAULT_FIT_LR: f64 = 0.5;
pub const DEFAULT_KMEANS_ITERS: usize = 100;
pub const DEFAULT_KMEANS_RESTARTS: usize = 10;
/// Relative WCSS improvement below which Lloyd iterations stop.
pub const KMEANS_RELATIVE_TOL: f64 = 1e-6;
/// F1 permutation matching is exhaustive up to this many clusters.
pub const F1_MAX_CLUSTERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("all features are identical; more than one cluster is meaningless")]
    DegenerateInput,
    #[error("cluster count {c} exceeds the number of examples {n}")]
    ClusterCountExceedsExamples { c: usize, n: usize },
    #[error("assignments and truth labels must cover the same examples ({left} vs {right})")]
    LabelMismatch { left: usize, right: usize },
    #[error("permutation matching is exhaustive only up to {F1_MAX_CLUSTERS} clusters, got {0}")]
    TooManyClusters(usize),
}

fn token_index(token: &str) -> Result<usize, DiscoveryError> {
    VOCAB
        .iter()
        .position(|&t| t == token)
        .ok_or_else(|| DiscoveryError::UnknownToken(token.to_string()))
}

/// Encodes a token stream with start/end sentinels. Empty streams stay empty:
/// they carry no transitions and get a zero gradient.
fn encode(tokens: &[String]) -> Result<Vec<usize>, DiscoveryError> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(tokens.len() + 2);
    out.push(0); // <s>
    for t in tokens {
        out.push(token_index(t)?);
    }
    out.push(1); // </s>
    Ok(out)
}

/// How the gradient model's parameters are set before gradient extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelInit {
    /// Fit the bigram table on the corpus first.
    Fitted,
    /// Seeded random logits, no fitting.
    RandomInit,
}

/// A bigram next-token model: a V x V logit table, rows normalized by
/// softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    logits: Vec<f64>,
}

impl ToyModel {
    pub const V: usize = VOCAB.len();

    pub fn zeros() -> Self {
        ToyModel {
            logits: vec![0.0; Self::V * Self::V],
        }
    }

    pub fn random_init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ToyModel {
            logits: (0..Self::V * Self::V)
                .map(|_| rng.random_range(-0.1..0.1))
                .collect(),
        }
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn from_logits(logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), Self::V * Self::V);
        ToyModel { logits }
    }

    /// Next-token distribution of one row.
    pub fn row_probs(&self, row: usize) -> Vec<f64> {
        let logits = &self.logits[row * Self::V..(row + 1) * Self::V];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    pub fn prob(&self, from: &str, to: &str) -> Result<f64, DiscoveryError> {
        let u = token_index(from)?;
        let v = token_index(to)?;
        Ok(self.row_probs(u)[v])
    }

    fn encoded_log_likelihood(&self, encoded: &[usize]) -> f64 {
        let mut ll = 0.0;
        for w in encoded.windows(2) {
            ll += self.row_probs(w[0])[w[1]].ln();
        }
        ll
    }

    /// Log-likelihood of one token stream (with sentinels).
    pub fn sequence_log_likelihood(&self, tokens: &[String]) -> Result<f64, DiscoveryError> {
        Ok(self.encoded_log_likelihood(&encode(tokens)?))
    }
}

/// Fits the bigram table by full-batch gradient ascent on the mean sequence
/// log-likelihood (a concave objective). The step is backtracked whenever it
/// would lower the objective, so the returned per-epoch history is
/// non-decreasing. Returns the model and that history.
pub fn fit_toy_model(
    corpus: &[Vec<String>],
    epochs: usize,
    lr: f64,
) -> Result<(ToyModel, Vec<f64>), DiscoveryError> {
    if corpus.is_empty() {
        return Err(DiscoveryError::EmptyCorpus);
    }
    let v = ToyModel::V;
    let mut counts = vec![0.0f64; v * v];
    for tokens in corpus {
        for w in encode(tokens)?.windows(2) {
            counts[w[0] * v + w[1]] += 1.0;
        }
    }
    let row_totals: Vec<f64> = (0..v).map(|u| counts[u * v..(u + 1) * v].iter().sum()).collect();
    let n = corpus.len() as f64;

    let ll_of = |model: &ToyModel| -> f64 {
        let mut ll = 0.0;
        for u in 0..v {
            if row_totals[u] == 0.0 {
                continue;
            }
            let probs = model.row_probs(u);
            for t in 0..v {
                if counts[u * v + t] > 0.0 {
                    ll += counts[u * v + t] * probs[t].ln();
                }
            }
        }
        ll / n
    };

    let mut model = ToyModel::zeros();
    let mut ll = ll_of(&model);
    let mut history = vec![ll];
    let mut step = lr;
    for _ in 0..epochs {
        // Full-batch gradient of the mean log-likelihood.
        let mut grad = vec![0.0f64; v * v];
        for u in 0..v {
            if row_totals[u] == 0.0 {
                continue;
            }
            let probs = model.row_probs(u);
            for t in 0..v {
                grad[u * v + t] = (counts[u * v + t] - row_totals[u] * probs[t]) / n;
            }
        }
        // Backtracking keeps the objective monotone.
        loop {
            let mut candidate = model.clone();
            for (c, g) in candidate.logits.iter_mut().zip(&grad) {
                *c += step * g;
            }
            let candidate_ll = ll_of(&candidate);
            if candidate_ll >= ll - 1e-12 {
                model = candidate;
                ll = candidate_ll;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
        history.push(ll);
    }
    Ok((model, history))
}

/// Exact per-example gradient of the sequence log-likelihood with respect to
/// the logit table: for each visited row, observed next-token counts minus
/// the expected counts under the model.
pub fn per_example_gradient(model: &ToyModel, tokens: &[String]) -> Result<Vec<f64>, DiscoveryError> {
    let v = ToyModel::V;
    let mut grad = vec![0.0f64; v * v];
    let encoded = encode(tokens)?;
    if encoded.is_empty() {
        return Ok(grad);
    }
    let mut row_visits = vec![0.0f64; v];
    for w in encoded.windows(2) {
        grad[w[0] * v + w[1]] += 1.0;
        row_visits[w[0]] += 1.0;
    }
    for u in 0..v {
        if row_visits[u] == 0.0 {
            continue;
        }
        let probs = model.row_probs(u);
        for t in 0..v {
            grad[u * v + t] -= row_visits[u] * probs[t];
        }
    }
    Ok(grad)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Projects a dense gradient to `d` dimensions with Rademacher signs derived
/// from `(seed, i, j)`: `out[i] = (1/sqrt(d)) * sum_j s_ij g_j`. Inner
/// products are preserved in expectation over seeds.
pub fn rademacher_project(g: &[f64], d: usize, seed: u64) -> Vec<f64> {
    assert!(d >= 1);
    let scale = 1.0 / (d as f64).sqrt();
    let nonzero: Vec<(u64, f64)> = g
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(j, &x)| (j as u64, x))
        .collect();
    (0..d)
        .map(|i| {
            let row_seed = splitmix64(seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let mut acc = 0.0;
            for &(j, x) in &nonzero {
                let h = splitmix64(row_seed ^ j.wrapping_mul(0x9FB2_1C65_1E98_DF25));
                if h >> 63 == 1 {
                    acc += x;
                } else {
                    acc -= x;
                }
            }
            acc * scale
        })
        .collect()
}

/// A projected, L2-normalized gradient feature. Zero gradients are stored
/// as-is with `norm = 0`, which doubles as the degeneracy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFeature {
    pub example: usize,
    pub projected: Vec<f64>,
    pub norm: f64,
}

impl GradientFeature {
    pub fn new(example: usize, raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let projected = if norm > 0.0 {
            raw.into_iter().map(|x| x / norm).collect()
        } else {
            raw
        };
        GradientFeature {
            example,
            projected,
            norm,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// One example's cluster assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub example: usize,
    pub cluster: usize,
}

/// Result of one k-means fit: assignments, the final objective, and the
/// per-iteration WCSS history of the winning restart.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub wcss_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(points: &[&[f64]], c: usize, max_iters: usize, seed: u64) -> KMeansFit {
    let n = points.len();
    let dim = points[0].len();
    let mut rng = stream(seed, &["kmeans"]);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(c);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut x = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dists.iter().enumerate() {
                if x < d {
                    chosen = i;
                    break;
                }
                x -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            dists[i] = dists[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..max_iters {
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, best_d) = centroids
                .iter()
                .enumerate()
                .map(|(j, cen)| (j, sq_dist(p, cen)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one centroid");
            assignments[i] = best;
            wcss += best_d;
        }
        history.push(wcss);
        // Update step; empty clusters keep their centroid.
        let mut sums = vec![vec![0.0f64; dim]; c];
        let mut counts = vec![0usize; c];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, x) in sums[assignments[i]].iter_mut().zip(*p) {
                *s += x;
            }
        }
        for j in 0..c {
            if counts[j] > 0 {
                for (cen, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *cen = s / counts[j] as f64;
                }
            }
        }
        if prev_wcss.is_finite() && prev_wcss - wcss <= KMEANS_RELATIVE_TOL * prev_wcss.max(1e-12) {
            break;
        }
        prev_wcss = wcss;
    }
    KMeansFit {
        assignments,
        wcss: *history.last().expect("at least one iteration"),
        wcss_history: history,
    }
}

/// k-means with k-means++ seeding and `n_restarts` parallel restarts; the
/// lowest-WCSS restart wins, ties broken by restart index.
pub fn kmeans_fit(
    features: &[GradientFeature],
    c: usize,
    max_iters: usize,
    n_restarts: usize,
    seed: u64,
) -> Result<KMeansFit, DiscoveryError> {
    let n = features.len();
    if c > n {
        return Err(DiscoveryError::ClusterCountExceedsExamples { c, n });
    }
    assert!(c >= 1 && max_iters >= 1 && n_restarts >= 1);
    let points: Vec<&[f64]> = features.iter().map(|f| f.projected.as_slice()).collect();
    if c > 1 && points.windows(2).all(|w| w[0] == w[1]) {
        return Err(DiscoveryError::DegenerateInput);
    }
    if c == 1 {
        // Single cluster: the assignment is forced; report its WCSS.
        let dim = points[0].len();
        let mut mean = vec![0.0f64; dim];
        for p in &points {
            for (m, x) in mean.iter_mut().zip(*p) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let wcss = points.iter().map(|p| sq_dist(p, &mean)).sum();
        return Ok(KMeansFit {
            assignments: vec![0; n],
            wcss,
            wcss_history: vec![wcss],
        });
    }
    let fits = par_map_range(n_restarts, |r| {
        lloyd(&points, c, max_iters, crate::rng::derive_seed(seed, &["restart", &r.to_string()]))
    });
    let best = fits
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.wcss.total_cmp(&b.wcss).then(i.cmp(j)))
        .map(|(_, fit)| fit)
        .expect("at least one restart");
    Ok(best)
}

/// Spec-shaped wrapper returning per-example assignments.
pub fn kmeans_cluster(
    features: &[GradientFeature],
    c: usize,
    max_iters: usize,
    n_restarts: usize,
    seed: u64,
) -> Result<Vec<ClusterAssignment>, DiscoveryError> {
    let fit = kmeans_fit(features, c, max_iters, n_restarts, seed)?;
    Ok(fit
        .assignments
        .iter()
        .zip(features)
        .map(|(&cluster, f)| ClusterAssignment {
            example: f.example,
            cluster,
        })
        .collect())
}

/// Macro-F1 of cluster assignments against truth labels, maximized over all
/// cluster-to-label mappings (exhaustive; clusters capped at
/// [`F1_MAX_CLUSTERS`]).
pub fn cluster_f1(assignments: &[usize], truth: &[usize]) -> Result<f64, DiscoveryError> {
    if assignments.len() != truth.len() || assignments.is_empty() {
        return Err(DiscoveryError::LabelMismatch {
            left: assignments.len(),
            right: truth.len(),
        });
    }
    let n_clusters = assignments.iter().max().unwrap() + 1;
    if n_clusters > F1_MAX_CLUSTERS {
        return Err(DiscoveryError::TooManyClusters(n_clusters));
    }
    let mut labels: Vec<usize> = truth.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() > F1_MAX_CLUSTERS {
        return Err(DiscoveryError::TooManyClusters(labels.len()));
    }

    // Exhaustive over mappings cluster -> label (functions, so clusters may
    // merge onto one label when there are more clusters than labels).
    let mut mapping = vec![0usize; n_clusters];
    let mut best = 0.0f64;
    loop {
        let mapped: Vec<usize> = assignments.iter().map(|&c| labels[mapping[c]]).collect();
        best = best.max(macro_f1(&mapped, truth, &labels));
        // Advance the odometer.
        let mut slot = 0;
        loop {
            if slot == n_clusters {
                return Ok(best);
            }
            mapping[slot] += 1;
            if mapping[slot] < labels.len() {
                break;
            }
            mapping[slot] = 0;
            slot += 1;
        }
    }
}

fn macro_f1(predicted: &[usize], truth: &[usize], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for &label in labels {
        let tp = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p == label && **t == label)
            .count() as f64;
        let fp = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p == label && **t != label)
            .count() as f64;
        let fn_ = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p != label && **t == label)
            .count() as f64;
        let f1 = if tp > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fn_)
        } else {
            0.0
        };
        total += f1;
    }
    total / labels.len() as f64
}

/// End-to-end discovery configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub clusters: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub max_iters: usize,
    pub n_restarts: usize,
    pub model_init: ModelInit,
    pub seed: u64,
}

impl DiscoveryConfig {
    pub fn new(seed: u64) -> Self {
        DiscoveryConfig {
            clusters: DEFAULT_CLUSTERS,
            dim: DEFAULT_PROJECTION_DIM,
            epochs: DEFAULT_FIT_EPOCHS,
            lr: DEFAULT_FIT_LR,
            max_iters: DEFAULT_KMEANS_ITERS,
            n_restarts: DEFAULT_KMEANS_RESTARTS,
            model_init: ModelInit::Fitted,
            seed,
        }
    }
}

/// The discovery pipeline output: per-example clusters plus monitoring data.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryOutcome {
    pub clusters: Vec<usize>,
    pub fit_history: Vec<f64>,
    pub kmeans_wcss: f64,
}

/// Runs the pipeline on raw token streams: (fit or random-init the model) ->
/// per-example gradients -> Rademacher projection -> k-means.
pub fn discover_modes_from_corpus(
    corpus: &[Vec<String>],
    config: &DiscoveryConfig,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    if corpus.is_empty() {
        return Err(DiscoveryError::EmptyCorpus);
    }
    let (model, fit_history) = match config.model_init {
        ModelInit::Fitted => fit_toy_model(corpus, config.epochs, config.lr)?,
        ModelInit::RandomInit => (ToyModel::random_init(config.seed), Vec::new()),
    };
    let grads = par_map(corpus, |tokens| per_example_gradient(&model, tokens));
    let mut features = Vec::with_capacity(corpus.len());
    for (i, g) in grads.into_iter().enumerate() {
        let raw = rademacher_project(&g?, config.dim, config.seed);
        features.push(GradientFeature::new(i, raw));
    }
    let fit = kmeans_fit(
        &features,
        config.clusters,
        config.max_iters,
        config.n_restarts,
        config.seed,
    )?;
    Ok(DiscoveryOutcome {
        clusters: fit.assignments,
        fit_history,
        kmeans_wcss: fit.wcss,
    })
}

/// Discovery over training records: serializes each trajectory to its
/// mode-agnostic token stream and clusters those.
pub fn discover_modes(
    records: &[TrainRecord],
    config: &DiscoveryConfig,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    let corpus: Vec<Vec<String>> = records.iter().map(|r| r.trajectory.trace_tokens()).collect();
    discover_modes_from_corpus(&corpus, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fit_learns_a_deterministic_bigram() {
        let corpus = vec![toks(&["s3", "+", "s3", "+", "s3", "+"]); 4];
        let (model, history) = fit_toy_model(&corpus, 200, 1.0).unwrap();
        assert!(model.prob("s3", "+").unwrap() > 0.9, "p = {}", model.prob("s3", "+").unwrap());
        for w in history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "log-likelihood decreased: {w:?}");
        }
    }

    #[test]
    fn fit_on_uniform_corpus_stays_flat() {
        // Uniform random transitions over a sub-vocabulary: no next-token
        // should dominate the way a deterministic corpus does.
        let sub = ["s2", "b", "l", "+", "-", "*", "/"];
        let mut rng = stream(3, &["uniform"]);
        let corpus: Vec<Vec<String>> = (0..200)
            .map(|_| {
                (0..50)
                    .map(|_| sub[rng.random_range(0..sub.len())].to_string())
                    .collect()
            })
            .collect();
        let (model, _) = fit_toy_model(&corpus, 100, 1.0).unwrap();
        for from in sub {
            for to in sub {
                let p = model.prob(from, to).unwrap();
                assert!(p < 0.3, "p({from} -> {to}) = {p}");
            }
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert_eq!(fit_toy_model(&[], 5, 0.5).unwrap_err(), DiscoveryError::EmptyCorpus);
    }

    #[test]
    fn unknown_tokens_are_rejected() {
        let corpus = vec![toks(&["s2", "dfs"])];
        assert_eq!(
            fit_toy_model(&corpus, 5, 0.5).unwrap_err(),
            DiscoveryError::UnknownToken("dfs".into())
        );
    }

    #[test]
    fn gradient_closed_form_matches_finite_differences() {
        let corpus = vec![
            toks(&["s3", "+", "n1", "s2", "*", "n2", "b", "!"]),
            toks(&["s3", "-", "n0", "l", "s2", "/", "n0"]),
        ];
        let (model, _) = fit_toy_model(&corpus, 20, 0.5).unwrap();
        let example = &corpus[0];
        let grad = per_example_gradient(&model, example).unwrap();

        let mut rng = stream(5, &["fd"]);
        let v = ToyModel::V;
        let eps = 1e-5;
        let mut checked = 0;
        while checked < 10 {
            let coord = rng.random_range(0..v * v);
            if grad[coord] == 0.0 {
                continue; // pick informative coordinates
            }
            let mut plus = model.clone();
            plus.logits[coord] += eps;
            let mut minus = model.clone();
            minus.logits[coord] -= eps;
            let fd = (plus.sequence_log_likelihood(example).unwrap()
                - minus.sequence_log_likelihood(example).unwrap())
                / (2.0 * eps);
            let rel = (grad[coord] - fd).abs() / grad[coord].abs().max(1e-8);
            assert!(rel < 1e-5, "coord {coord}: analytic {} vs fd {fd}", grad[coord]);
            checked += 1;
        }
    }

    #[test]
    fn gradient_edge_cases() {
        let (model, _) = fit_toy_model(&[toks(&["s3", "+"])], 5, 0.5).unwrap();
        let zero = per_example_gradient(&model, &[]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let a = per_example_gradient(&model, &toks(&["s3", "+", "n1"])).unwrap();
        let b = per_example_gradient(&model, &toks(&["s3", "+", "n1"])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_is_deterministic_and_guards_zero() {
        let g: Vec<f64> = (0..ToyModel::V * ToyModel::V).map(|i| (i % 7) as f64 - 3.0).collect();
        let a = rademacher_project(&g, 64, 9);
        let b = rademacher_project(&g, 64, 9);
        assert_eq!(a, b);
        let c = rademacher_project(&g, 64, 10);
        assert_ne!(a, c);

        let zero = vec![0.0; g.len()];
        let feature = GradientFeature::new(0, rademacher_project(&zero, 64, 9));
        assert!(feature.is_zero());
        assert!(feature.projected.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projection_preserves_inner_products_in_expectation() {
        let dim_in = ToyModel::V * ToyModel::V;
        let mut rng = stream(17, &["jl"]);
        let u: Vec<f64> = (0..dim_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..dim_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let exact: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();

        let seeds: Vec<u64> = (0..100).collect();
        let dots: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let pu = rademacher_project(&u, 128, s);
                let pw = rademacher_project(&w, 128, s);
                pu.iter().zip(&pw).map(|(a, b)| a * b).sum()
            })
            .collect();
        let mean: f64 = dots.iter().sum::<f64>() / dots.len() as f64;
        let var = dots.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (dots.len() - 1) as f64;
        let stderr = (var / dots.len() as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * stderr.max(1e-6),
            "mean {mean} vs exact {exact} (stderr {stderr})"
        );
    }

    fn cloud(center: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, &["cloud"]);
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|&c| c + rng.random_range(-0.05..0.05))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn kmeans_recovers_separated_clouds() {
        let mut points = cloud(&[1.0, 0.0, 0.0], 30, 1);
        points.extend(cloud(&[-1.0, 0.5, 0.0], 30, 2));
        let features: Vec<GradientFeature> = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| GradientFeature::new(i, p))
            .collect();
        let fit = kmeans_fit(&features, 2, 100, 5, 7).unwrap();
        let first = fit.assignments[0];
        assert!(fit.assignments[..30].iter().all(|&a| a == first));
        assert!(fit.assignments[30..].iter().all(|&a| a != first));
        for w in fit.wcss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "WCSS increased: {w:?}");
        }
    }

    #[test]
    fn kmeans_edge_cases() {
        let features: Vec<GradientFeature> = (0..5)
            .map(|i| GradientFeature::new(i, vec![i as f64, 1.0]))
            .collect();
        let fit = kmeans_fit(&features, 1, 50, 3, 1).unwrap();
        assert!(fit.assignments.iter().all(|&a| a == 0));

        let identical: Vec<GradientFeature> =
            (0..4).map(|i| GradientFeature::new(i, vec![1.0, 2.0])).collect();
        assert_eq!(
            kmeans_fit(&identical, 2, 50, 3, 1).unwrap_err(),
            DiscoveryError::DegenerateInput
        );
        assert_eq!(
            kmeans_fit(&features, 9, 50, 3, 1).unwrap_err(),
            DiscoveryError::ClusterCountExceedsExamples { c: 9, n: 5 }
        );
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut points = cloud(&[1.0, 0.0], 20, 3);
        points.extend(cloud(&[0.0, 1.0], 20, 4));
        let features: Vec<GradientFeature> = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| GradientFeature::new(i, p))
            .collect();
        let a = kmeans_fit(&features, 2, 100, 10, 42).unwrap();
        let b = kmeans_fit(&features, 2, 100, 10, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f1_examples() {
        let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_abs_diff_eq!(cluster_f1(&truth, &truth).unwrap(), 1.0);

        let swapped: Vec<usize> = truth.iter().map(|&t| 1 - t).collect();
        assert_abs_diff_eq!(cluster_f1(&swapped, &truth).unwrap(), 1.0);

        // One of ten misassigned in a balanced 2-cluster case:
        // per-class F1s are 8/9 and 10/11, macro = 89/99.
        let mut one_off = truth;
        one_off[0] = 1;
        assert_abs_diff_eq!(
            cluster_f1(&one_off, &truth).unwrap(),
            89.0 / 99.0,
            epsilon = 1e-12
        );

        assert_eq!(
            cluster_f1(&[0, 1], &[0]).unwrap_err(),
            DiscoveryError::LabelMismatch { left: 2, right: 1 }
        );
    }

    #[test]
    fn disjoint_vocabulary_corpora_are_perfectly_recovered() {
        // Two sub-corpora whose gradients live in disjoint coordinate blocks.
        let mut rng = stream(31, &["sep"]);
        let mut corpus = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..40 {
            let len = rng.random_range(4..12);
            corpus.push(
                (0..len)
                    .flat_map(|_| ["s3".to_string(), "+".to_string()])
                    .collect::<Vec<_>>(),
            );
            truth.push(0usize);
        }
        for _ in 0..40 {
            let len = rng.random_range(4..12);
            corpus.push(
                (0..len)
                    .flat_map(|_| ["l".to_string(), "-".to_string()])
                    .collect::<Vec<_>>(),
            );
            truth.push(1usize);
        }
        let outcome = discover_modes_from_corpus(&corpus, &DiscoveryConfig::new(3)).unwrap();
        assert_abs_diff_eq!(cluster_f1(&outcome.clusters, &truth).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_discovery_degenerates() {
        let corpus = vec![toks(&["s3", "+"]), toks(&["s3", "-"]), toks(&["l", "*"])];
        let mut config = DiscoveryConfig::new(1);
        config.clusters = 1;
        let outcome = discover_modes_from_corpus(&corpus, &config).unwrap();
        assert!(outcome.clusters.iter().all(|&c| c == 0));
    }

    #[test]
    fn discovery_is_deterministic() {
        let corpus = vec![
            toks(&["s3", "+", "n1", "b"]),
            toks(&["s3", "*", "n2", "l"]),
            toks(&["s3", "-", "n0", "b"]),
            toks(&["s3", "/", "n0", "l"]),
        ];
        let config = DiscoveryConfig::new(11);
        let a = discover_modes_from_corpus(&corpus, &config).unwrap();
        let b = discover_modes_from_corpus(&corpus, &config).unwrap();
        assert_eq!(a, b);
    }
}
