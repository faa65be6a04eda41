use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::clustering::{fit, fit_restarts, KMeansConfig};
use crate::synthetic::{alignment_fixture, cohort_population};

fn log(shop: &str, variant: Variant, trial: u32, idx: usize, a2c: bool, reason: TerminationReason) -> SessionLog {
    SessionLog {
        schema_version: crate::agent::LOG_SCHEMA_VERSION,
        persona_id: format!("{shop}-p"),
        cluster_id: 0,
        agent_index: idx,
        shop_id: shop.into(),
        variant,
        trial,
        seed: 0,
        steps: vec![],
        a2c,
        termination_reason: reason,
    }
}

/// `n` sessions per (variant, trial) with the given conversion counts.
fn shop_logs(shop: &str, n: usize, hits: &[(usize, usize)]) -> Vec<SessionLog> {
    let mut out = Vec::new();
    for (trial, &(c, t)) in hits.iter().enumerate() {
        for i in 0..n {
            out.push(log(shop, Variant::Control, trial as u32, i, i < c, TerminationReason::PolicyTerminate));
            out.push(log(shop, Variant::Treatment, trial as u32, i, i < t, TerminationReason::PolicyTerminate));
        }
    }
    out
}

fn truth(shop: &str, delta: f64) -> ShopGroundTruth {
    ShopGroundTruth {
        shop_id: shop.into(),
        human_delta_a2c: delta,
        change_summary: String::new(),
        magnitude_stratum: MagnitudeStratum::Minor,
    }
}

fn pair(h: f64, trials: &[f64]) -> ShopPair {
    ShopPair {
        shop_id: "s".into(),
        human_delta: h,
        agent_trial_deltas: trials.to_vec(),
    }
}

#[test]
fn zero_matches_only_zero() {
    assert_eq!(sign(0.0), 0);
    assert_eq!(shop_alignment(&pair(0.01, &[0.0]), AlignmentMode::PerTrial), 0.0);
    assert_eq!(shop_alignment(&pair(0.0, &[0.0]), AlignmentMode::PerTrial), 1.0);
}

#[test]
fn alignment_rate_examples() {
    let all: Vec<ShopPair> = (0..5).map(|_| pair(0.02, &[0.01, 0.03])).collect();
    assert_eq!(alignment_rate(&all, AlignmentMode::PerTrial).unwrap(), 100.0);
    let fixture = alignment_fixture(50, 37, 3);
    assert!((alignment_rate(&fixture, AlignmentMode::PerTrial).unwrap() - 77.0).abs() < 1e-9);
    // sign of the mean: the half shops average +0.005 and count fully
    assert!((alignment_rate(&fixture, AlignmentMode::SignOfMean).unwrap() - 80.0).abs() < 1e-9);
    assert_eq!(alignment_rate(&[], AlignmentMode::PerTrial), Err(EvalError::EmptyInput));
}

#[test]
fn pearson_examples() {
    let r = pearson(&[(1.0, 2.0), (2.0, 4.0), (3.0, 5.0)]).unwrap();
    // sxy = 3, sxx = 2, syy = 14/3
    assert!((r - 3.0 / (2.0_f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
    assert!((r - 0.9820).abs() < 1e-4);
    assert!((pearson(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap() - 1.0).abs() < 1e-12);
    assert!((pearson(&[(0.0, 1.0), (1.0, -1.0), (2.0, -3.0)]).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(pearson(&[(1.0, 1.0), (1.0, 2.0)]), Err(EvalError::DegenerateVariance));
    assert_eq!(pearson(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]), Err(EvalError::DegenerateVariance));
    assert_eq!(pearson(&[(1.0, 1.0)]), Err(EvalError::TooFewPoints(1)));
}

#[test]
fn fisher_examples() {
    let close = |(lo, hi): (f64, f64), (a, b): (f64, f64)| (lo - a).abs() <= 0.01 && (hi - b).abs() <= 0.01;
    assert!(close(fisher_ci(0.55, 50, 0.95).unwrap(), (0.32, 0.72)));
    assert!(close(fisher_ci(0.0, 50, 0.95).unwrap(), (-0.28, 0.28)));
    assert!(close(fisher_ci(0.02, 50, 0.95).unwrap(), (-0.26, 0.30)));
    // atanh(0.55) = 0.618381, half-width 1.959964 / sqrt(47) = 0.285889
    let (lo, hi) = fisher_ci(0.55, 50, 0.95).unwrap();
    assert!((lo - 0.332492_f64.tanh()).abs() < 1e-5);
    assert!((hi - 0.904270_f64.tanh()).abs() < 1e-5);
    assert_eq!(fisher_ci(1.0, 50, 0.95), Err(EvalError::ROutOfRange(1.0)));
    assert_eq!(fisher_ci(0.5, 3, 0.95), Err(EvalError::SampleTooSmall(3)));
    assert_eq!(fisher_ci(0.5, 10, 1.0), Err(EvalError::InvalidLevel(1.0)));
}

#[test]
fn nearest_rank_picks_data_points() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(nearest_rank(&xs, 0.25), 1.0);
    assert_eq!(nearest_rank(&xs, 0.26), 2.0);
    assert_eq!(nearest_rank(&xs, 1.0), 4.0);
    assert_eq!(nearest_rank(&xs, 0.0), 1.0);
}

#[test]
fn bootstrap_examples() {
    let all: Vec<ShopPair> = (0..10).map(|_| pair(0.02, &[0.01, 0.03])).collect();
    assert_eq!(bootstrap_alignment_ci(&all, AlignmentMode::PerTrial, 500, 1, 0.95).unwrap(), (100.0, 100.0));
    let fixture = alignment_fixture(50, 37, 3);
    let (lo, hi) = bootstrap_alignment_ci(&fixture, AlignmentMode::PerTrial, 1, 3, 0.95).unwrap();
    assert_eq!(lo, hi);
    let a = bootstrap_alignment_ci(&fixture, AlignmentMode::PerTrial, 2000, 9, 0.95).unwrap();
    assert_eq!(a, bootstrap_alignment_ci(&fixture, AlignmentMode::PerTrial, 2000, 9, 0.95).unwrap());
    // binomial approximation: 77 +- 1.96 * sqrt(77 * 23 / 50)
    let half = 1.96 * (77.0_f64 * 23.0 / 50.0).sqrt();
    assert!((a.0 - (77.0 - half)).abs() <= 3.0, "{a:?}");
    assert!((a.1 - (77.0 + half)).abs() <= 3.0, "{a:?}");
    assert_eq!(bootstrap_alignment_ci(&[], AlignmentMode::PerTrial, 10, 0, 0.95), Err(EvalError::EmptyInput));
}

#[test]
fn retry_exhausted_sessions_are_not_counted() {
    let c = [
        log("s", Variant::Control, 0, 0, false, TerminationReason::PolicyTerminate),
        log("s", Variant::Control, 0, 1, false, TerminationReason::RetryExhausted),
    ];
    let t = [
        log("s", Variant::Treatment, 0, 0, true, TerminationReason::LoopGuardrail),
        log("s", Variant::Treatment, 0, 1, false, TerminationReason::StepBudget),
    ];
    let cr: Vec<&SessionLog> = c.iter().collect();
    let tr: Vec<&SessionLog> = t.iter().collect();
    assert!((delta_a2c(&cr, &tr).unwrap() - 0.5).abs() < 1e-12);
    let only_failed: Vec<&SessionLog> = c[1..].iter().collect();
    assert!(matches!(
        delta_a2c(&only_failed, &tr),
        Err(EvalError::EmptyVariant {
            variant: Variant::Control,
            ..
        })
    ));
}

#[test]
fn shop_results_per_trial() {
    let logs = shop_logs("a", 10, &[(2, 5), (3, 3)]);
    let r = shop_results(&logs).unwrap();
    assert_eq!(r.len(), 1);
    assert!((r[0].per_trial_agent_delta[0] - 0.3).abs() < 1e-12);
    assert_eq!(r[0].per_trial_agent_delta[1], 0.0);
    assert!((r[0].agent_delta_a2c - 0.15).abs() < 1e-12);
}

#[test]
fn evaluate_single_shop_has_no_correlation() {
    let logs = shop_logs("a", 10, &[(2, 5), (1, 4)]);
    let rep = evaluate(&logs, &[truth("a", 0.01)], &EvalConfig::default()).unwrap();
    assert_eq!(rep.alignment_rate, 100.0);
    assert_eq!(rep.pearson_r, None);
    assert_eq!(rep.pearson_ci, None);
    let json = serde_json::to_value(&rep).unwrap();
    assert!(json["pearson_r"].is_null());
}

#[test]
fn evaluate_reports_missing_shop() {
    let logs = shop_logs("a", 4, &[(1, 2)]);
    assert_eq!(
        evaluate(&logs, &[truth("a", 0.01), truth("b", -0.01)], &EvalConfig::default()),
        Err(EvalError::MissingShop("b".into()))
    );
}

#[test]
fn evaluate_multi_shop() {
    let mut logs = shop_logs("a", 20, &[(2, 8), (3, 7)]);
    logs.extend(shop_logs("b", 20, &[(9, 4), (8, 5)]));
    logs.extend(shop_logs("c", 20, &[(5, 6), (6, 5)]));
    let truths = [truth("a", 0.02), truth("b", -0.03), truth("c", 0.001)];
    let rep = evaluate(&logs, &truths, &EvalConfig { resamples: 200, ..EvalConfig::default() }).unwrap();
    assert_eq!(rep.n_shops, 3);
    assert!((rep.alignment_rate - 100.0 * 2.5 / 3.0).abs() < 1e-9);
    assert!(rep.pearson_r.unwrap() > 0.9);
    // n = 3 is below the Fisher minimum
    assert_eq!(rep.pearson_ci, None);
    assert_eq!(rep.per_shop[2].alignment, 0.5);
}

#[test]
fn sensitivity_constant_logs_give_flat_bands() {
    let mut logs = shop_logs("a", 10, &[(0, 10), (0, 10)]);
    logs.extend(shop_logs("b", 10, &[(10, 0), (10, 0)]));
    let truths = [truth("a", 0.01), truth("b", -0.02)];
    let cfg = SensitivityConfig {
        budgets: vec![5, 10],
        resamples: 20,
        seed: 1,
        mode: AlignmentMode::PerTrial,
    };
    let rep = budget_sensitivity(&logs, &truths, &cfg).unwrap();
    assert_eq!(rep.rows.len(), 2);
    for row in &rep.rows {
        assert_eq!(row.alignment.width(), 0.0);
        assert_eq!(row.alignment.mean, 100.0);
        assert_eq!(row.correlation.unwrap().width(), 0.0);
    }
    assert!(rep.warnings.is_empty());
}

#[test]
fn sensitivity_is_deterministic_and_caps_budgets() {
    let mut logs = shop_logs("a", 8, &[(2, 5), (3, 4)]);
    logs.extend(shop_logs("b", 8, &[(5, 2), (4, 4)]));
    let truths = [truth("a", 0.01), truth("b", -0.02)];
    let cfg = SensitivityConfig {
        budgets: vec![50],
        resamples: 2,
        seed: 4,
        mode: AlignmentMode::PerTrial,
    };
    let a = budget_sensitivity(&logs, &truths, &cfg).unwrap();
    assert_eq!(a, budget_sensitivity(&logs, &truths, &cfg).unwrap());
    assert_eq!(a.warnings.len(), 2);
    let mut missing = shop_logs("a", 8, &[(2, 5)]);
    missing.retain(|l| l.variant == Variant::Control);
    assert!(matches!(
        budget_sensitivity(&missing, &truths[..1], &cfg),
        Err(EvalError::InsufficientSessions { .. })
    ));
}

fn cohort_model(seed: u64) -> (Vec<(Session, usize)>, ClusterModel) {
    let pop = cohort_population("fit", 4000, seed);
    let matrix = FeatureMatrix::from_rows(
        SessionFeatures::DIM,
        pop.iter().map(|(s, _)| (s.id.clone(), featurize(s).to_vec())),
    )
    .unwrap();
    let (model, _) = fit_restarts(&matrix, &KMeansConfig::new(5, seed), 10).unwrap();
    (pop, model)
}

#[test]
fn cohort_analysis_finds_skimmers() {
    let (_, model) = cohort_model(3);
    let sessions: Vec<Session> = cohort_population("eval", 10_000, 8).into_iter().map(|p| p.0).collect();
    let rep = cohort_analysis(&sessions, &model).unwrap();
    let skim = &rep.cohorts[rep.skimmers_cluster_id.unwrap()];
    assert!((skim.share - 0.264).abs() < 0.005, "{rep:?}");
    assert!((skim.a2c_rate - 0.095).abs() < 0.005, "{rep:?}");
    assert_eq!(rep.cohorts.iter().filter(|c| c.bounce).count(), 1);
}

#[test]
fn cohort_analysis_all_bounces() {
    let (pop, model) = cohort_model(3);
    let bounces: Vec<Session> = pop.into_iter().filter(|p| p.1 == 0).map(|p| p.0).collect();
    let rep = cohort_analysis(&bounces, &model).unwrap();
    assert_eq!(rep.skimmers_cluster_id, None);
}

#[test]
fn cohort_analysis_rejects_foreign_models() {
    let m = FeatureMatrix::from_rows(2, (0..6).map(|i| (format!("r{i}"), vec![i as f64, (i % 2) as f64]))).unwrap();
    let (model, _) = fit(&m, &KMeansConfig::new(2, 0)).unwrap();
    let sessions: Vec<Session> = cohort_population("x", 10, 0).into_iter().map(|p| p.0).collect();
    assert!(matches!(
        cohort_analysis(&sessions, &model),
        Err(EvalError::Clustering(ClusteringError::ModelMismatch { .. }))
    ));
}

/// Per-shop human sessions assembled from labelled pools.
fn mix(pop: &[(Session, usize)], shop: &str, plan: &[(usize, usize, usize)]) -> Vec<Session> {
    // plan entries: (cohort, sessions, converting sessions)
    let mut out = Vec::new();
    for &(cohort, n, hits) in plan {
        let conv = pop.iter().filter(|p| p.1 == cohort && p.0.has_a2c());
        let non = pop.iter().filter(|p| p.1 == cohort && !p.0.has_a2c());
        for (s, _) in conv.take(hits).chain(non.take(n - hits)) {
            let mut s = s.clone();
            s.shop_id = shop.into();
            out.push(s);
        }
    }
    out
}

#[test]
fn cohort_correlation_when_skimmers_are_all_engaged() {
    let (pop, model) = cohort_model(3);
    let shops: Vec<HumanShopSessions> = (0..4)
        .map(|i| HumanShopSessions {
            shop_id: format!("s{i}"),
            control: mix(&pop, "c", &[(0, 50, 0), (1, 40, 4)]),
            treatment: mix(&pop, "t", &[(0, 50, 0), (1, 40, 2 + 2 * i)]),
        })
        .collect();
    let r = cohort_correlation(&shops, &model).unwrap();
    assert!((r.skimmers_vs_engaged - 1.0).abs() < 1e-9);
    let two = cohort_correlation(&shops[..2], &model).unwrap();
    assert!((two.skimmers_vs_all.abs() - 1.0).abs() < 1e-9);
}

#[test]
fn cohort_correlation_engaged_signal_is_less_diluted() {
    let (pop, model) = cohort_model(3);
    let mut r = crate::seeding::rng(17);
    let shops: Vec<HumanShopSessions> = (0..12)
        .map(|i| {
            let skim_t = 2 + (i % 6);
            // bounce volume is independent noise that dilutes whole-shop rates
            let bc = r.random_range(20..200);
            let bt = r.random_range(20..200);
            let buy_t = 2 + (i % 6) / 2 + r.random_range(0..2);
            HumanShopSessions {
                shop_id: format!("s{i}"),
                control: mix(&pop, "c", &[(0, bc, 0), (1, 40, 4), (3, 4, 3)]),
                treatment: mix(&pop, "t", &[(0, bt, 0), (1, 40, skim_t), (3, 4, buy_t.min(4))]),
            }
        })
        .collect();
    let c = cohort_correlation(&shops, &model).unwrap();
    assert!(c.skimmers_vs_engaged > c.skimmers_vs_all, "{c:?}");
}

proptest! {
    #[test]
    fn alignment_ignores_positive_scaling(
        rows in prop::collection::vec((-1.0f64..1.0, prop::collection::vec(-1.0f64..1.0, 2)), 1..30),
        k in 0.001f64..1000.0,
    ) {
        let pairs: Vec<ShopPair> = rows.iter().map(|(h, t)| pair(*h, t)).collect();
        let scaled: Vec<ShopPair> = rows.iter().map(|(h, t)| pair(*h, &t.iter().map(|d| d * k).collect::<Vec<_>>())).collect();
        for mode in [AlignmentMode::PerTrial, AlignmentMode::SignOfMean] {
            prop_assert_eq!(alignment_rate(&pairs, mode).unwrap(), alignment_rate(&scaled, mode).unwrap());
        }
    }

    #[test]
    fn pearson_affine_invariant(
        pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0,
    ) {
        if let Ok(r) = pearson(&pts) {
            let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (a * x + b, c * y + d)).collect();
            let r2 = pearson(&moved).unwrap();
            prop_assert!((r - r2).abs() < 1e-9, "{} vs {}", r, r2);
        }
    }

    #[test]
    fn fisher_narrows_with_n_and_contains_r(r in -0.99f64..0.99, n in 4usize..500) {
        let (lo, hi) = fisher_ci(r, n, 0.95).unwrap();
        let (lo2, hi2) = fisher_ci(r, n + 1, 0.95).unwrap();
        prop_assert!(lo <= r && r <= hi);
        prop_assert!(hi2 - lo2 <= hi - lo);
    }

    #[test]
    fn bootstrap_brackets_the_estimate(
        trials in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..30),
        seed in any::<u64>(),
    ) {
        let pairs: Vec<ShopPair> = trials.iter().map(|t| pair(0.5, t)).collect();
        let est = alignment_rate(&pairs, AlignmentMode::PerTrial).unwrap();
        let (lo, hi) = bootstrap_alignment_ci(&pairs, AlignmentMode::PerTrial, 200, seed, 0.95).unwrap();
        prop_assert!((0.0..=100.0).contains(&lo) && (0.0..=100.0).contains(&hi));
        prop_assert!(lo <= est + 1e-9 && est <= hi + 1e-9, "{} not in [{}, {}]", est, lo, hi);
    }
}
