//! Agreement between simulated and observed add-to-cart shifts.
//!
//! Per shop, the agent shift is treatment A2C rate minus control A2C rate,
//! computed per trial. Across shops we report the sign alignment rate with a
//! percentile-bootstrap interval and the Pearson correlation with a
//! Fisher-z interval, plus resampled agent-budget curves and a cohort view
//! of human sessions.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::agent::{SessionLog, TerminationReason, Variant};
use crate::clickstream::{featurize, Session, SessionFeatures};
use crate::clustering::{ClusterModel, ClusteringError, FeatureMatrix};
use crate::seeding::{derive_seed, rng};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shop {shop_id}: no eligible {variant:?} sessions in trial {trial}")]
    EmptyVariant { shop_id: String, variant: Variant, trial: u32 },
    #[error("no input pairs")]
    EmptyInput,
    #[error("correlation needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("one side has zero variance")]
    DegenerateVariance,
    #[error("correlation {0} is outside (-1, 1)")]
    ROutOfRange(f64),
    #[error("Fisher interval needs n >= 4, got {0}")]
    SampleTooSmall(usize),
    #[error("confidence level {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("shop {0} is in the ground truth but has no session logs")]
    MissingShop(String),
    #[error("shop {shop_id} has no {variant:?} sessions")]
    InsufficientSessions { shop_id: String, variant: Variant },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeStratum {
    Minor,
    Moderate,
    Major,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopGroundTruth {
    pub shop_id: String,
    /// Treatment minus control A2C rate of the human evaluation cohort.
    pub human_delta_a2c: f64,
    #[serde(default)]
    pub change_summary: String,
    pub magnitude_stratum: MagnitudeStratum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopResult {
    pub shop_id: String,
    pub per_trial_agent_delta: Vec<f64>,
    pub agent_delta_a2c: f64,
}

/// Observed shift against per-trial simulated shifts for one shop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopPair {
    pub shop_id: String,
    pub human_delta: f64,
    pub agent_trial_deltas: Vec<f64>,
}

impl ShopPair {
    pub fn agent_mean(&self) -> f64 {
        mean(&self.agent_trial_deltas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Score each trial and average, so a shop counts 0, 1/2 or 1 with two trials.
    #[default]
    PerTrial,
    /// Compare the sign of the trial mean.
    SignOfMean,
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_trial" => Ok(Self::PerTrial),
            "sign_of_mean" => Ok(Self::SignOfMean),
            other => Err(format!("unknown alignment mode `{other}`")),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Zero only matches zero.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn eligible(log: &SessionLog) -> bool {
    log.termination_reason != TerminationReason::RetryExhausted
}

fn rate(logs: &[&SessionLog]) -> Option<f64> {
    let kept: Vec<&&SessionLog> = logs.iter().filter(|l| eligible(l)).collect();
    if kept.is_empty() {
        None
    } else {
        Some(kept.iter().filter(|l| l.a2c).count() as f64 / kept.len() as f64)
    }
}

/// Treatment minus control A2C rate over eligible sessions.
pub fn delta_a2c(control: &[&SessionLog], treatment: &[&SessionLog]) -> Result<f64, EvalError> {
    let empty = |variant, logs: &[&SessionLog]| EvalError::EmptyVariant {
        shop_id: logs.first().map(|l| l.shop_id.clone()).unwrap_or_default(),
        variant,
        trial: logs.first().map_or(0, |l| l.trial),
    };
    let c = rate(control).ok_or_else(|| empty(Variant::Control, control))?;
    let t = rate(treatment).ok_or_else(|| empty(Variant::Treatment, treatment))?;
    Ok(t - c)
}

type Grouped<'a> = BTreeMap<String, BTreeMap<u32, BTreeMap<Variant, Vec<&'a SessionLog>>>>;

fn group(logs: &[SessionLog]) -> Grouped<'_> {
    let mut g: Grouped<'_> = BTreeMap::new();
    for l in logs {
        g.entry(l.shop_id.clone())
            .or_default()
            .entry(l.trial)
            .or_default()
            .entry(l.variant)
            .or_default()
            .push(l);
    }
    g
}

/// Per-shop, per-trial agent shifts. Shops appear in id order.
pub fn shop_results(logs: &[SessionLog]) -> Result<Vec<ShopResult>, EvalError> {
    group(logs)
        .into_iter()
        .map(|(shop_id, trials)| {
            let per_trial = trials
                .iter()
                .map(|(&trial, by_variant)| {
                    let get = |v| by_variant.get(&v).map(Vec::as_slice).unwrap_or_default();
                    delta_a2c(get(Variant::Control), get(Variant::Treatment)).map_err(|e| match e {
                        EvalError::EmptyVariant { variant, .. } => EvalError::EmptyVariant {
                            shop_id: shop_id.clone(),
                            variant,
                            trial,
                        },
                        other => other,
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(ShopResult {
                agent_delta_a2c: mean(&per_trial),
                per_trial_agent_delta: per_trial,
                shop_id,
            })
        })
        .collect()
}

pub fn shop_alignment(pair: &ShopPair, mode: AlignmentMode) -> f64 {
    let h = sign(pair.human_delta);
    match mode {
        AlignmentMode::PerTrial => {
            if pair.agent_trial_deltas.is_empty() {
                return 0.0;
            }
            let hits = pair.agent_trial_deltas.iter().filter(|&&d| sign(d) == h).count();
            hits as f64 / pair.agent_trial_deltas.len() as f64
        }
        AlignmentMode::SignOfMean => f64::from(u8::from(sign(pair.agent_mean()) == h)),
    }
}

/// Percentage of shops whose simulated shift has the observed sign.
pub fn alignment_rate(pairs: &[ShopPair], mode: AlignmentMode) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(100.0 * pairs.iter().map(|p| shop_alignment(p, mode)).sum::<f64>() / pairs.len() as f64)
}

pub fn pearson(points: &[(f64, f64)]) -> Result<f64, EvalError> {
    let n = points.len();
    if n < 2 {
        return Err(EvalError::TooFewPoints(n));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // rounding residue around a constant column is not variance
    let degenerate = |ss: f64, m: f64| ss == 0.0 || ss <= 1e-20 * m * m * n as f64;
    if degenerate(sxx, mx) || degenerate(syy, my) {
        return Err(EvalError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn z_quantile(level: f64) -> Result<f64, EvalError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Fisher-z interval for a correlation from `n` pairs.
pub fn fisher_ci(r: f64, n: usize, level: f64) -> Result<(f64, f64), EvalError> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(EvalError::ROutOfRange(r));
    }
    if n < 4 {
        return Err(EvalError::SampleTooSmall(n));
    }
    let z = r.atanh();
    let half = z_quantile(level)? / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

/// Nearest-rank percentile of sorted data, `p` in (0, 1].
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn percentile_interval(mut reps: Vec<f64>, level: f64) -> (f64, f64) {
    reps.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (nearest_rank(&reps, tail), nearest_rank(&reps, 1.0 - tail))
}

/// Percentile bootstrap over shops for the alignment rate.
pub fn bootstrap_alignment_ci(
    pairs: &[ShopPair],
    mode: AlignmentMode,
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64), EvalError> {
    if pairs.is_empty() || resamples == 0 {
        return Err(EvalError::EmptyInput);
    }
    z_quantile(level)?;
    let per_shop: Vec<f64> = pairs.iter().map(|p| shop_alignment(p, mode)).collect();
    let n = per_shop.len();
    let reps: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng(derive_seed(seed, &["alignment-bootstrap", &b.to_string()]));
            let total: f64 = (0..n).map(|_| per_shop[r.random_range(0..n)]).sum();
            100.0 * total / n as f64
        })
        .collect();
    Ok(percentile_interval(reps, level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub shop_id: String,
    pub human_delta: f64,
    pub agent_delta: f64,
    pub per_trial_agent_delta: Vec<f64>,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_shops: usize,
    pub alignment_mode: AlignmentMode,
    pub alignment_rate: f64,
    pub alignment_ci: (f64, f64),
    /// Absent when the correlation is undefined (fewer than two shops or no variance).
    pub pearson_r: Option<f64>,
    pub pearson_ci: Option<(f64, f64)>,
    pub per_shop: Vec<PairedDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mode: AlignmentMode,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: AlignmentMode::PerTrial,
            resamples: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Joins logs to ground truth in ground-truth order.
pub fn pair_with_truth(logs: &[SessionLog], truth: &[ShopGroundTruth]) -> Result<Vec<ShopPair>, EvalError> {
    let results: BTreeMap<String, ShopResult> =
        shop_results(logs)?.into_iter().map(|r| (r.shop_id.clone(), r)).collect();
    truth
        .iter()
        .map(|t| {
            let r = results
                .get(&t.shop_id)
                .ok_or_else(|| EvalError::MissingShop(t.shop_id.clone()))?;
            Ok(ShopPair {
                shop_id: t.shop_id.clone(),
                human_delta: t.human_delta_a2c,
                agent_trial_deltas: r.per_trial_agent_delta.clone(),
            })
        })
        .collect()
}

pub fn evaluate(logs: &[SessionLog], truth: &[ShopGroundTruth], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let pairs = pair_with_truth(logs, truth)?;
    let alignment_rate = alignment_rate(&pairs, cfg.mode)?;
    let alignment_ci = bootstrap_alignment_ci(&pairs, cfg.mode, cfg.resamples, cfg.seed, cfg.level)?;
    let points: Vec<(f64, f64)> = pairs.iter().map(|p| (p.agent_mean(), p.human_delta)).collect();
    let pearson_r = match pearson(&points) {
        Ok(r) => Some(r),
        Err(EvalError::TooFewPoints(_) | EvalError::DegenerateVariance) => None,
        Err(e) => return Err(e),
    };
    let pearson_ci = pearson_r.and_then(|r| fisher_ci(r, pairs.len(), cfg.level).ok());
    let per_shop = pairs
        .iter()
        .map(|p| PairedDelta {
            shop_id: p.shop_id.clone(),
            human_delta: p.human_delta,
            agent_delta: p.agent_mean(),
            per_trial_agent_delta: p.agent_trial_deltas.clone(),
            alignment: shop_alignment(p, cfg.mode),
        })
        .collect();
    Ok(EvalReport {
        n_shops: pairs.len(),
        alignment_mode: cfg.mode,
        alignment_rate,
        alignment_ci,
        pearson_r,
        pearson_ci,
        per_shop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

impl Band {
    fn of(mut xs: Vec<f64>) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        xs.sort_by(f64::total_cmp);
        Some(Self {
            mean: mean(&xs),
            p10: nearest_rank(&xs, 0.10),
            p90: nearest_rank(&xs, 0.90),
        })
    }

    pub fn width(&self) -> f64 {
        self.p90 - self.p10
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub budget: usize,
    pub alignment: Band,
    /// None when every replicate had an undefined correlation.
    pub correlation: Option<Band>,
    pub degenerate_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    pub budgets: Vec<usize>,
    pub resamples: usize,
    pub seed: u64,
    pub mode: AlignmentMode,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            budgets: (50..=700).step_by(50).collect(),
            resamples: 1000,
            seed: 0,
            mode: AlignmentMode::PerTrial,
        }
    }
}

/// A2C outcomes of eligible sessions for one (shop, trial, variant) cell.
type Cell = Vec<bool>;

struct ShopCells {
    human: f64,
    /// per trial: (control, treatment)
    trials: Vec<(Cell, Cell)>,
}

fn draw_rate(r: &mut impl Rng, cell: &[bool], b: usize) -> f64 {
    let hits = (0..b).filter(|_| cell[r.random_range(0..cell.len())]).count();
    hits as f64 / b as f64
}

/// Resamples agent sessions per (shop, variant, trial) at each budget and
/// recomputes cross-shop alignment and correlation.
pub fn budget_sensitivity(
    logs: &[SessionLog],
    truth: &[ShopGroundTruth],
    cfg: &SensitivityConfig,
) -> Result<SensitivityReport, EvalError> {
    if truth.is_empty() || cfg.resamples == 0 {
        return Err(EvalError::EmptyInput);
    }
    let grouped = group(logs);
    let mut shops = Vec::new();
    let mut warnings = Vec::new();
    for t in truth {
        let trials = grouped
            .get(&t.shop_id)
            .ok_or_else(|| EvalError::MissingShop(t.shop_id.clone()))?;
        let mut cells = Vec::new();
        for by_variant in trials.values() {
            let cell = |v: Variant| -> Result<Cell, EvalError> {
                let c: Cell = by_variant
                    .get(&v)
                    .map(|ls| ls.iter().filter(|l| eligible(l)).map(|l| l.a2c).collect())
                    .unwrap_or_default();
                if c.is_empty() {
                    return Err(EvalError::InsufficientSessions {
                        shop_id: t.shop_id.clone(),
                        variant: v,
                    });
                }
                Ok(c)
            };
            cells.push((cell(Variant::Control)?, cell(Variant::Treatment)?));
        }
        let available = cells.iter().flat_map(|(c, t)| [c.len(), t.len()]).min().unwrap_or(0);
        if let Some(&max_b) = cfg.budgets.iter().max() {
            if available < max_b {
                warnings.push(format!(
                    "shop {}: budget capped at {available} available sessions (requested up to {max_b})",
                    t.shop_id
                ));
            }
        }
        shops.push(ShopCells {
            human: t.human_delta_a2c,
            trials: cells,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let rows = cfg
        .budgets
        .iter()
        .map(|&budget| {
            let reps: Vec<(f64, Option<f64>)> = (0..cfg.resamples)
                .into_par_iter()
                .map(|rep| {
                    let mut r = rng(derive_seed(cfg.seed, &["budget", &budget.to_string(), &rep.to_string()]));
                    let pairs: Vec<ShopPair> = shops
                        .iter()
                        .map(|s| ShopPair {
                            shop_id: String::new(),
                            human_delta: s.human,
                            agent_trial_deltas: s
                                .trials
                                .iter()
                                .map(|(c, t)| {
                                    let bc = budget.min(c.len());
                                    let bt = budget.min(t.len());
                                    let rc = draw_rate(&mut r, c, bc);
                                    draw_rate(&mut r, t, bt) - rc
                                })
                                .collect(),
                        })
                        .collect();
                    let align = 100.0 * pairs.iter().map(|p| shop_alignment(p, cfg.mode)).sum::<f64>() / pairs.len() as f64;
                    let points: Vec<(f64, f64)> = pairs.iter().map(|p| (p.agent_mean(), p.human_delta)).collect();
                    (align, pearson(&points).ok())
                })
                .collect();
            let alignment = Band::of(reps.iter().map(|r| r.0).collect()).expect("at least one replicate");
            let corr: Vec<f64> = reps.iter().filter_map(|r| r.1).collect();
            SensitivityRow {
                budget,
                alignment,
                degenerate_replicates: reps.len() - corr.len(),
                correlation: Band::of(corr),
            }
        })
        .collect();
    Ok(SensitivityReport { rows, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub cluster_id: usize,
    pub sessions: usize,
    pub share: f64,
    pub a2c_rate: f64,
    pub bounce: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub cohorts: Vec<CohortStats>,
    pub skimmers_cluster_id: Option<usize>,
}

/// Cluster labels of human sessions under a fitted model.
pub fn assign_sessions(sessions: &[Session], model: &ClusterModel) -> Result<Vec<usize>, EvalError> {
    if model.dim() != SessionFeatures::DIM {
        return Err(ClusteringError::ModelMismatch {
            expected: model.dim(),
            got: SessionFeatures::DIM,
        }
        .into());
    }
    let matrix = FeatureMatrix::from_rows(
        SessionFeatures::DIM,
        sessions.iter().map(|s| (s.id.clone(), featurize(s).to_vec())),
    )?;
    Ok(model.assign(&matrix)?.into_iter().map(|a| a.cluster_id).collect())
}

/// Shares, A2C rates and bounce flags per cohort. A cohort bounces when all
/// of its sessions have a single event; the skimmers are the largest
/// non-bouncing cohort (ties to the lower id).
pub fn cohort_analysis(sessions: &[Session], model: &ClusterModel) -> Result<CohortReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let labels = assign_sessions(sessions, model)?;
    let mut stats: Vec<(usize, usize, bool)> = vec![(0, 0, true); model.k];
    for (s, &c) in sessions.iter().zip(&labels) {
        let e = &mut stats[c];
        e.0 += 1;
        e.1 += usize::from(s.has_a2c());
        e.2 &= s.events.len() == 1;
    }
    let total = sessions.len() as f64;
    let cohorts: Vec<CohortStats> = stats
        .iter()
        .enumerate()
        .map(|(c, &(n, a2c, single))| CohortStats {
            cluster_id: c,
            sessions: n,
            share: n as f64 / total,
            a2c_rate: if n == 0 { 0.0 } else { a2c as f64 / n as f64 },
            bounce: n > 0 && single,
        })
        .collect();
    let skimmers_cluster_id = cohorts
        .iter()
        .filter(|c| c.sessions > 0 && !c.bounce)
        .max_by(|a, b| a.sessions.cmp(&b.sessions).then(b.cluster_id.cmp(&a.cluster_id)))
        .map(|c| c.cluster_id);
    Ok(CohortReport {
        cohorts,
        skimmers_cluster_id,
    })
}

/// Human sessions of one shop split by variant.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanShopSessions {
    pub shop_id: String,
    pub control: Vec<Session>,
    pub treatment: Vec<Session>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCorrelation {
    pub skimmers_cluster_id: usize,
    pub skimmers_vs_all: f64,
    pub skimmers_vs_engaged: f64,
    /// (shop, skimmers delta, all delta, engaged delta)
    pub per_shop: Vec<(String, f64, f64, f64)>,
}

/// Correlates the skimmers-cohort shift with the whole-shop shift and with
/// the shift over all non-bouncing sessions.
pub fn cohort_correlation(shops: &[HumanShopSessions], model: &ClusterModel) -> Result<CohortCorrelation, EvalError> {
    let pooled: Vec<Session> = shops
        .iter()
        .flat_map(|s| s.control.iter().chain(&s.treatment).cloned())
        .collect();
    let report = cohort_analysis(&pooled, model)?;
    let skim = report.skimmers_cluster_id.ok_or(EvalError::EmptyInput)?;
    let bounce: Vec<bool> = report.cohorts.iter().map(|c| c.bounce).collect();
    let mut per_shop = Vec::new();
    for shop in shops {
        let rates = |sessions: &[Session]| -> Result<[Option<f64>; 3], EvalError> {
            let labels = assign_sessions(sessions, model)?;
            let mut acc = [(0usize, 0usize); 3];
            for (s, &c) in sessions.iter().zip(&labels) {
                let a = usize::from(s.has_a2c());
                let mut add = |i: usize| {
                    acc[i].0 += 1;
                    acc[i].1 += a;
                };
                add(1);
                if c == skim {
                    add(0);
                }
                if !bounce[c] {
                    add(2);
                }
            }
            Ok(acc.map(|(n, a)| (n > 0).then(|| a as f64 / n as f64)))
        };
        let c = rates(&shop.control)?;
        let t = rates(&shop.treatment)?;
        let d = |i: usize| -> Option<f64> { Some(t[i]? - c[i]?) };
        if let (Some(s), Some(a), Some(e)) = (d(0), d(1), d(2)) {
            per_shop.push((shop.shop_id.clone(), s, a, e));
        }
    }
    let vs_all: Vec<(f64, f64)> = per_shop.iter().map(|r| (r.1, r.2)).collect();
    let vs_engaged: Vec<(f64, f64)> = per_shop.iter().map(|r| (r.1, r.3)).collect();
    Ok(CohortCorrelation {
        skimmers_cluster_id: skim,
        skimmers_vs_all: pearson(&vs_all)?,
        skimmers_vs_engaged: pearson(&vs_engaged)?,
        per_shop,
    })
}

#[cfg(test)]
mod tests;
