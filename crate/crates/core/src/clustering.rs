//! Session clustering: z-scoring, k-means with k-means++ seeding, elbow-style
//! choice of k, and centroid-proximity selection.

use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("need at least {k} rows, got {rows}")]
    TooFewRows { rows: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown cluster {cluster_id} (k = {k})")]
    UnknownCluster { cluster_id: usize, k: usize },
    #[error("feature dimension mismatch: model has {expected}, input has {got}")]
    ModelMismatch { expected: usize, got: usize },
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("row length {got} does not match column count {cols}")]
    RaggedRow { cols: usize, got: usize },
    #[error("empty k range")]
    EmptyRange,
}

/// Row-major matrix of session features with aligned session ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn from_rows(
        cols: usize,
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, ClusteringError> {
        let mut values = Vec::new();
        let mut row_ids = Vec::new();
        for (id, row) in rows {
            if row.len() != cols {
                return Err(ClusteringError::RaggedRow { cols, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ClusteringError::NonFinite);
            }
            values.extend(row);
            row_ids.push(id);
        }
        Ok(Self { cols, values, row_ids })
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: FeatureMatrix,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

const ZERO_VARIANCE: f64 = 1e-12;

/// Column-wise z-scores with population standard deviation. Zero-variance
/// columns become all zeros and record a std of 1.
pub fn zscore(matrix: &FeatureMatrix) -> Standardized {
    let n = matrix.rows();
    let cols = matrix.cols;
    let mut means = vec![0.0; cols];
    let mut stds = vec![1.0; cols];
    let mut constant = vec![true; cols];
    if n > 0 {
        for i in 0..n {
            for (m, v) in means.iter_mut().zip(matrix.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; cols];
        for i in 0..n {
            for ((acc, v), m) in var.iter_mut().zip(matrix.row(i)).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        for c in 0..cols {
            let sd = (var[c] / n as f64).sqrt();
            if sd > ZERO_VARIANCE {
                stds[c] = sd;
                constant[c] = false;
            }
        }
    }
    let values = matrix
        .values
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let c = idx % cols;
            if constant[c] {
                0.0
            } else {
                (v - means[c]) / stds[c]
            }
        })
        .collect();
    Standardized {
        matrix: FeatureMatrix {
            cols,
            values,
            row_ids: matrix.row_ids.clone(),
        },
        means,
        stds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

/// A fitted clustering. Centroids live in standardized space; the column
/// statistics project raw feature vectors into that space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub inertia: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub session_id: String,
    pub cluster_id: usize,
    pub distance: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the closest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(matrix: &FeatureMatrix, centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    (0..matrix.rows())
        .into_par_iter()
        .map(|i| nearest(matrix.row(i), centroids))
        .collect()
}

fn kmeans_pp_init<R: Rng>(matrix: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = matrix.rows();
    let mut centroids = vec![matrix.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(matrix.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point coincides with a centroid already
            rng.random_range(0..n)
        };
        let c = matrix.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(matrix.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds on an already standardized matrix.
///
/// The returned model carries identity column statistics; [`fit`] replaces
/// them with the statistics used to standardize raw features.
pub fn kmeans(
    matrix: &FeatureMatrix,
    cfg: &KMeansConfig,
) -> Result<(ClusterModel, Vec<Assignment>), ClusteringError> {
    let (n, k, cols) = (matrix.rows(), cfg.k, matrix.cols);
    if k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    if n < k {
        return Err(ClusteringError::TooFewRows { rows: n, k });
    }
    let mut rng = seeding::rng(cfg.seed);
    let mut centroids = kmeans_pp_init(matrix, k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut labels = assign_all(matrix, &centroids);
    history.push(labels.iter().map(|l| l.1).sum::<f64>());

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; cols]; k];
        let mut counts = vec![0usize; k];
        for (i, (label, _)) in labels.iter().enumerate() {
            counts[*label] += 1;
            for (s, v) in sums[*label].iter_mut().zip(matrix.row(i)) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / c as f64).collect()
                }
            })
            .collect();
        // An empty cluster takes the point farthest from its own centroid.
        let mut taken = Vec::new();
        for j in 0..k {
            if counts[j] == 0 {
                let far = labels
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken.push(far);
                next[j] = matrix.row(far).to_vec();
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        labels = assign_all(matrix, &centroids);
        let inertia: f64 = labels.iter().map(|l| l.1).sum();
        history.push(inertia);
        if shift < cfg.tol {
            break;
        }
    }

    let inertia = *history.last().expect("history has the initial entry");
    let assignments = labels
        .iter()
        .zip(&matrix.row_ids)
        .map(|(&(cluster_id, d2), id)| Assignment {
            session_id: id.clone(),
            cluster_id,
            distance: d2.sqrt(),
        })
        .collect();
    let model = ClusterModel {
        k,
        centroids,
        column_means: vec![0.0; cols],
        column_stds: vec![1.0; cols],
        inertia,
        seed: cfg.seed,
        iterations,
        inertia_history: history,
    };
    Ok((model, assignments))
}

/// Standardizes raw features and clusters them.
pub fn fit(
    raw: &FeatureMatrix,
    cfg: &KMeansConfig,
) -> Result<(ClusterModel, Vec<Assignment>), ClusteringError> {
    let std = zscore(raw);
    let (mut model, assignments) = kmeans(&std.matrix, cfg)?;
    model.column_means = std.means;
    model.column_stds = std.stds;
    Ok((model, assignments))
}

/// [`fit`] from `restarts` seedings, keeping the lowest inertia. The first
/// run uses `cfg.seed`; ties keep the earlier run.
pub fn fit_restarts(
    raw: &FeatureMatrix,
    cfg: &KMeansConfig,
    restarts: usize,
) -> Result<(ClusterModel, Vec<Assignment>), ClusteringError> {
    let std = zscore(raw);
    let runs: Vec<_> = (0..restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let seed = if i == 0 {
                cfg.seed
            } else {
                seeding::derive_seed(cfg.seed, &["restart", &i.to_string()])
            };
            kmeans(&std.matrix, &KMeansConfig { seed, ..*cfg })
        })
        .collect::<Result<_, _>>()?;
    let (mut model, assignments) = runs
        .into_iter()
        .reduce(|best, run| if run.0.inertia < best.0.inertia { run } else { best })
        .expect("at least one run");
    model.column_means = std.means;
    model.column_stds = std.stds;
    Ok((model, assignments))
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.column_means.len()
    }

    /// Projects raw rows through the stored standardization and assigns each
    /// to its nearest centroid.
    pub fn assign(&self, raw: &FeatureMatrix) -> Result<Vec<Assignment>, ClusteringError> {
        if raw.cols != self.dim() {
            return Err(ClusteringError::ModelMismatch {
                expected: self.dim(),
                got: raw.cols,
            });
        }
        Ok((0..raw.rows())
            .map(|i| {
                let z: Vec<f64> = raw
                    .row(i)
                    .iter()
                    .zip(&self.column_means)
                    .zip(&self.column_stds)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect();
                let (cluster_id, d2) = nearest(&z, &self.centroids);
                Assignment {
                    session_id: raw.row_ids[i].clone(),
                    cluster_id,
                    distance: d2.sqrt(),
                }
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectKConfig {
    pub elbow_threshold: f64,
    pub balance_floor: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SelectKConfig {
    fn default() -> Self {
        Self {
            elbow_threshold: 0.10,
            balance_floor: 0.02,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub chosen_k: usize,
    /// `(k, inertia)` for every k in the range.
    pub inertia: Vec<(usize, f64)>,
    /// `(k, smallest cluster size / rows)` for every k in the range.
    pub min_share: Vec<(usize, f64)>,
}

/// Elbow-style choice of k.
///
/// The chosen k is the largest k in range whose relative inertia drop from
/// k-1 is at least `elbow_threshold` and whose smallest cluster holds at
/// least `balance_floor` of the rows. If none qualifies, the smallest k in
/// the range is returned.
pub fn select_k(
    matrix: &FeatureMatrix,
    k_range: RangeInclusive<usize>,
    seed: u64,
    cfg: &SelectKConfig,
) -> Result<KSelection, ClusteringError> {
    if k_range.is_empty() {
        return Err(ClusteringError::EmptyRange);
    }
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 {
        return Err(ClusteringError::ZeroK);
    }
    let first = if lo > 1 { lo - 1 } else { lo };
    let mut inertia_all = Vec::new();
    let mut shares = Vec::new();
    for k in first..=hi {
        let (model, assignments) = kmeans(
            matrix,
            &KMeansConfig {
                k,
                seed,
                max_iter: cfg.max_iter,
                tol: cfg.tol,
            },
        )?;
        let mut counts = vec![0usize; k];
        for a in &assignments {
            counts[a.cluster_id] += 1;
        }
        let min = counts.iter().copied().min().unwrap_or(0);
        inertia_all.push((k, model.inertia));
        shares.push((k, min as f64 / matrix.rows() as f64));
    }
    let mut chosen = lo;
    for idx in 1..inertia_all.len() {
        let (k, cur) = inertia_all[idx];
        let prev = inertia_all[idx - 1].1;
        let drop = if prev > 0.0 { (prev - cur) / prev } else { 0.0 };
        if k >= lo && drop >= cfg.elbow_threshold && shares[idx].1 >= cfg.balance_floor {
            chosen = k;
        }
    }
    // drop the extra k = lo - 1 run used only as the first baseline
    let start = usize::from(first < lo);
    Ok(KSelection {
        chosen_k: chosen,
        inertia: inertia_all[start..].to_vec(),
        min_share: shares[start..].to_vec(),
    })
}

/// Adjusted Rand index between two labelings of the same rows.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let pairs = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let mut table: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    let mut rows: std::collections::BTreeMap<usize, usize> = Default::default();
    let mut cols: std::collections::BTreeMap<usize, usize> = Default::default();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sa: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sb: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len());
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// The `n` members of `cluster_id` closest to their centroid, ties broken by
/// session id.
pub fn nearest_sessions(
    assignments: &[Assignment],
    k: usize,
    cluster_id: usize,
    n: usize,
) -> Result<Vec<String>, ClusteringError> {
    if cluster_id >= k {
        return Err(ClusteringError::UnknownCluster { cluster_id, k });
    }
    let mut members: Vec<&Assignment> = assignments
        .iter()
        .filter(|a| a.cluster_id == cluster_id)
        .collect();
    members.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    Ok(members
        .into_iter()
        .take(n)
        .map(|a| a.session_id.clone())
        .collect())
}
