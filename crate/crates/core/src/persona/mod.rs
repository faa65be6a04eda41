//! Persona construction from session clusters.
//!
//! Per (shop, cluster) pair the pipeline extracts product preferences,
//! samples buyer intents, aggregates the representative sessions per buyer,
//! scores a five-dimension archetype for each buyer and composes the prompt
//! handed to a simulated shopper.

mod aggregate;
mod archetype;
mod intent;
mod pipeline;
mod preferences;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusteringError;
use crate::remote::RemoteError;

pub use aggregate::{aggregate_buyers, BuyerAggregate, ProductRecord};
pub use archetype::{
    construct_archetype, score_exploration_depth, score_price_sensitivity, score_values_focus,
    ArchetypeInputs, BuyerArchetype, ExplorationNorms, ExplorationRegime, KeywordSets, PriceTier,
    ValuesFocus, ValuesWeights,
};
pub use intent::{generate_intent, scrub_target, BuyerIntent, PURCHASE_DECISION_GUIDE};
pub use pipeline::{allocate, build_shop_personas, KChoice, PersonaManifest, PipelineConfig, ShopPersonas};
pub use preferences::{
    extract_preferences, summarize_cluster, ClusterSummary, PreferenceBackend, ProductInteraction,
    ProductPreferences, ShopMeta,
};
pub use prompt::{compose_prompt, render_prompt, Persona, PromptParts};

#[derive(Debug, Error, PartialEq)]
pub enum PersonaError {
    #[error("cluster summary has no product interactions")]
    EmptySummary,
    #[error("no usable categories to sample a product target from")]
    NoCategories,
    #[error("product `{0}` is not in the catalog")]
    UnknownProductRef(String),
    #[error("buyer has no browsed products")]
    NoBrowsedProducts,
    #[error("intent is from cluster {intent} but archetype is from cluster {archetype}")]
    ClusterMismatch { intent: usize, archetype: usize },
    #[error("text backend unavailable: {0}")]
    BackendUnavailable(RemoteError),
    #[error("shop `{0}` has no sessions")]
    NoSessions(String),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}

/// Which persona components a simulated shopper is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMode {
    /// Archetype, product target and purchase-decision guide.
    #[default]
    FullPersona,
    /// Product target and guide, no archetype.
    IntentOnly,
    /// Product target alone.
    ProductOnly,
}

impl std::str::FromStr for PersonaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full_persona" | "full" => Ok(Self::FullPersona),
            "intent_only" => Ok(Self::IntentOnly),
            "product_only" => Ok(Self::ProductOnly),
            other => Err(format!("unknown persona mode `{other}`")),
        }
    }
}

/// Rounds to 1e-9 so scores computed as ratios land exactly on the
/// threshold values they are meant to hit.
pub(crate) fn quantize(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}
