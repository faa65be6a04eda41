use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{quantize, BuyerAggregate, PersonaError, ProductRecord};
use crate::catalog::CategoryMedians;
use crate::clickstream::SessionFeatures;
use crate::remote::TextBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceTier {
    Budget,
    MidRange,
    Premium,
}

impl PriceTier {
    /// budget above a 0.50 gap, premium below 0.30, mid-range in between
    /// (both ends inclusive).
    pub fn from_gap(gap: f64) -> Self {
        if gap > 0.50 {
            PriceTier::Budget
        } else if gap >= 0.30 {
            PriceTier::MidRange
        } else {
            PriceTier::Premium
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PriceTier::Budget => "Budget",
            PriceTier::MidRange => "Mid-range",
            PriceTier::Premium => "Premium",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationRegime {
    Shallow,
    Moderate,
    Deep,
}

impl ExplorationRegime {
    /// `[0, 0.35)` shallow, `[0.35, 0.65)` moderate, `[0.65, 1]` deep.
    pub fn from_score(score: f64) -> Self {
        if score < 0.35 {
            ExplorationRegime::Shallow
        } else if score < 0.65 {
            ExplorationRegime::Moderate
        } else {
            ExplorationRegime::Deep
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExplorationRegime::Shallow => "Shallow",
            ExplorationRegime::Moderate => "Moderate",
            ExplorationRegime::Deep => "Deep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerArchetype {
    pub cluster_id: usize,
    pub buyer_id: String,
    pub price_tier: PriceTier,
    pub price_gap: f64,
    pub exploration_score: f64,
    pub exploration_regime: ExplorationRegime,
    pub premium_focus: f64,
    pub performance_focus: f64,
    pub ethics_focus: f64,
    pub rationale: String,
}

/// Shop-level normalizers for the exploration score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationNorms {
    pub duration_cap_s: f64,
    pub search_cap: f64,
    pub views_cap: f64,
}

impl ExplorationNorms {
    /// 95th-percentile (nearest-rank) session values, floored at 1.
    pub fn from_features(features: &[SessionFeatures]) -> Self {
        let p95 = |mut xs: Vec<f64>| -> f64 {
            if xs.is_empty() {
                return 1.0;
            }
            xs.sort_by(f64::total_cmp);
            let rank = ((0.95 * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
            xs[rank - 1].max(1.0)
        };
        Self {
            duration_cap_s: p95(features.iter().map(|f| f.duration_s).collect()),
            search_cap: p95(features.iter().map(|f| f.search_count as f64).collect()),
            views_cap: p95(features.iter().map(|f| f.product_views as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSets {
    pub premium: Vec<String>,
    pub performance: Vec<String>,
    pub ethics: Vec<String>,
}

impl Default for KeywordSets {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/keywords.json"))
            .expect("bundled keyword sets parse")
    }
}

impl KeywordSets {
    fn set(words: &[String]) -> BTreeSet<String> {
        words.iter().map(|w| w.trim().to_lowercase()).collect()
    }

    pub fn axes(&self) -> [(&'static str, BTreeSet<String>); 3] {
        [
            ("premium", Self::set(&self.premium)),
            ("performance", Self::set(&self.performance)),
            ("ethics", Self::set(&self.ethics)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuesWeights {
    pub browsed: f64,
    pub purchased: f64,
}

impl Default for ValuesWeights {
    fn default() -> Self {
        Self {
            browsed: 0.4,
            purchased: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValuesFocus {
    pub premium: f64,
    pub performance: f64,
    pub ethics: f64,
}

pub struct ArchetypeInputs<'a> {
    pub norms: ExplorationNorms,
    pub medians: &'a CategoryMedians,
    pub keywords: &'a KeywordSets,
    pub weights: ValuesWeights,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Gap between the highest browsed price and the mean purchased price,
/// relative to the former, after dividing every price by its category
/// median. Buyers without purchases are measured against their mean
/// browsed price.
pub fn score_price_sensitivity(
    agg: &BuyerAggregate,
    medians: &CategoryMedians,
) -> Result<(PriceTier, f64), PersonaError> {
    if agg.browsed.is_empty() {
        return Err(PersonaError::NoBrowsedProducts);
    }
    let norm = |r: &ProductRecord| medians.normalize(&r.category, r.price);
    let max_browsed = agg.browsed.iter().map(norm).fold(f64::NEG_INFINITY, f64::max);
    let reference = if agg.purchased.is_empty() {
        mean(agg.browsed.iter().map(norm))
    } else {
        mean(agg.purchased.iter().map(norm))
    };
    let gap = if max_browsed > 0.0 {
        quantize(((max_browsed - reference) / max_browsed).clamp(0.0, 1.0))
    } else {
        0.0
    };
    Ok((PriceTier::from_gap(gap), gap))
}

/// Mean of the clamped duration, search and view ratios against the shop caps.
pub fn score_exploration_depth(agg: &BuyerAggregate, norms: &ExplorationNorms) -> (f64, ExplorationRegime) {
    let ratio = |x: f64, cap: f64| if cap > 0.0 { (x / cap).clamp(0.0, 1.0) } else { 0.0 };
    let score = quantize(
        (ratio(agg.total_duration_s, norms.duration_cap_s)
            + ratio(agg.total_searches as f64, norms.search_cap)
            + ratio(agg.total_product_views as f64, norms.views_cap))
            / 3.0,
    );
    (score, ExplorationRegime::from_score(score))
}

/// Per axis, the weighted share of browsed and purchased items carrying one
/// of the axis keywords. Without purchases the browsed share stands in.
pub fn score_values_focus(agg: &BuyerAggregate, keywords: &KeywordSets, weights: &ValuesWeights) -> ValuesFocus {
    let share = |items: &[ProductRecord], set: &BTreeSet<String>| -> f64 {
        if items.is_empty() {
            return 0.0;
        }
        let hits = items
            .iter()
            .filter(|r| r.keywords.iter().any(|k| set.contains(&k.trim().to_lowercase())))
            .count();
        hits as f64 / items.len() as f64
    };
    let [premium, performance, ethics] = keywords.axes().map(|(_, set)| {
        let b = share(&agg.browsed, &set);
        let p = if agg.purchased.is_empty() {
            b
        } else {
            share(&agg.purchased, &set)
        };
        quantize((weights.browsed * b + weights.purchased * p).clamp(0.0, 1.0))
    });
    ValuesFocus {
        premium,
        performance,
        ethics,
    }
}

fn template_rationale(tier: PriceTier, gap: f64, regime: ExplorationRegime, score: f64, v: &ValuesFocus) -> String {
    format!(
        "Price gap {gap:.2} places this buyer in the {} tier; exploration score {score:.2} is {}. \
Values: premium {:.2}, performance {:.2}, ethics {:.2}.",
        tier.label().to_lowercase(),
        regime.label().to_lowercase(),
        v.premium,
        v.performance,
        v.ethics
    )
}

/// Scores all five dimensions. Numbers always come from the rules above; a
/// backend, when given, only writes the rationale.
pub fn construct_archetype(
    agg: &BuyerAggregate,
    inputs: &ArchetypeInputs<'_>,
    backend: Option<&dyn TextBackend>,
) -> Result<BuyerArchetype, PersonaError> {
    let (price_tier, price_gap) = score_price_sensitivity(agg, inputs.medians)?;
    let (exploration_score, exploration_regime) = score_exploration_depth(agg, &inputs.norms);
    let values = score_values_focus(agg, inputs.keywords, &inputs.weights);
    let fallback = template_rationale(price_tier, price_gap, exploration_regime, exploration_score, &values);
    let rationale = match backend {
        None => fallback,
        Some(b) => {
            let input = json!({
                "price_tier": price_tier, "price_gap": price_gap,
                "exploration_regime": exploration_regime, "exploration_score": exploration_score,
                "values": values, "buyer": agg,
            });
            let schema = json!({
                "type": "object", "required": ["rationale"],
                "properties": {"rationale": {"type": "string"}}
            });
            match b.complete(
                "Write a concise rationale for this buyer archetype. Do not change any score.",
                &input,
                &schema,
            ) {
                Ok(v) => match v.get("rationale").and_then(|r| r.as_str()) {
                    Some(r) => r.to_string(),
                    None => fallback,
                },
                Err(e) => {
                    log::warn!("archetype rationale backend failed, using template: {e}");
                    fallback
                }
            }
        }
    };
    Ok(BuyerArchetype {
        cluster_id: agg.cluster_id,
        buyer_id: agg.buyer_id.clone(),
        price_tier,
        price_gap,
        exploration_score,
        exploration_regime,
        premium_focus: values.premium,
        performance_focus: values.performance,
        ethics_focus: values.ethics,
        rationale,
    })
}
