use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::PersonaError;
use crate::catalog::Catalog;
use crate::clickstream::{EventKind, Session};
use crate::remote::{RemoteError, TextBackend};

pub const MAX_CATEGORIES: usize = 10;
pub const MAX_PRODUCTS: usize = 10;
const PURCHASE_WEIGHT: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopMeta {
    pub name: String,
    pub industry: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductInteraction {
    pub product_ref: String,
    pub name: String,
    pub category: String,
    pub browsed: u32,
    pub purchased: u32,
}

impl ProductInteraction {
    fn score(&self) -> u32 {
        PURCHASE_WEIGHT * self.purchased + self.browsed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub session_count: usize,
    pub products: Vec<ProductInteraction>,
}

/// Counts product views and purchases per product across a cluster's sessions.
pub fn summarize_cluster(
    cluster_id: usize,
    sessions: &[&Session],
    catalog: &Catalog,
) -> Result<ClusterSummary, PersonaError> {
    let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for s in sessions {
        for e in &s.events {
            let Some(r) = e.product_ref.as_deref() else {
                continue;
            };
            match e.kind {
                EventKind::ProductView => counts.entry(r).or_default().0 += 1,
                EventKind::Purchase => counts.entry(r).or_default().1 += 1,
                _ => {}
            }
        }
    }
    let products = counts
        .into_iter()
        .map(|(r, (browsed, purchased))| {
            let p = catalog
                .get(r)
                .ok_or_else(|| PersonaError::UnknownProductRef(r.to_string()))?;
            Ok(ProductInteraction {
                product_ref: r.to_string(),
                name: p.name.clone(),
                category: p.category.clone(),
                browsed,
                purchased,
            })
        })
        .collect::<Result<Vec<_>, PersonaError>>()?;
    Ok(ClusterSummary {
        cluster_id,
        session_count: sessions.len(),
        products,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPreferences {
    pub cluster_id: usize,
    pub categories: Vec<String>,
    pub individual_products: Vec<String>,
    pub reasoning: String,
}

pub enum PreferenceBackend<'a> {
    Deterministic,
    Remote {
        backend: &'a dyn TextBackend,
        max_retries: usize,
    },
}

/// Top categories and products of a cluster.
///
/// The deterministic route ranks by `2 * purchases + views`, ties by name.
/// Categories that coincide with a shop product name are dropped in both
/// routes; remote replies that break the list caps are retried.
pub fn extract_preferences(
    shop: &ShopMeta,
    summary: &ClusterSummary,
    product_names: &BTreeSet<String>,
    backend: &PreferenceBackend<'_>,
) -> Result<ProductPreferences, PersonaError> {
    if summary.products.is_empty() {
        return Err(PersonaError::EmptySummary);
    }
    match backend {
        PreferenceBackend::Deterministic => Ok(rank_preferences(summary, product_names)),
        PreferenceBackend::Remote {
            backend,
            max_retries,
        } => remote_preferences(*backend, *max_retries, shop, summary, product_names),
    }
}

fn rank_preferences(summary: &ClusterSummary, product_names: &BTreeSet<String>) -> ProductPreferences {
    let mut by_category: BTreeMap<&str, u32> = BTreeMap::new();
    for p in &summary.products {
        *by_category.entry(p.category.as_str()).or_default() += p.score();
    }
    let mut categories: Vec<(&str, u32)> = by_category
        .into_iter()
        .filter(|(c, _)| !is_product_name(c, product_names))
        .collect();
    categories.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut products: Vec<&ProductInteraction> = summary.products.iter().collect();
    products.sort_by(|a, b| b.score().cmp(&a.score()).then_with(|| a.name.cmp(&b.name)));

    let categories: Vec<String> = categories
        .into_iter()
        .take(MAX_CATEGORIES)
        .map(|(c, _)| c.to_string())
        .collect();
    let individual_products: Vec<String> = products
        .into_iter()
        .take(MAX_PRODUCTS)
        .map(|p| p.name.clone())
        .collect();
    let reasoning = format!(
        "Ranked {} categories and {} products seen in {} sessions by interaction count, purchases weighted {}x.",
        categories.len(),
        individual_products.len(),
        summary.session_count,
        PURCHASE_WEIGHT
    );
    ProductPreferences {
        cluster_id: summary.cluster_id,
        categories,
        individual_products,
        reasoning,
    }
}

fn is_product_name(category: &str, product_names: &BTreeSet<String>) -> bool {
    product_names.contains(&category.trim().to_lowercase())
}

const PREFERENCE_INSTRUCTION: &str = "Extract the product preferences of this customer segment. \
Return up to ten broad, generic product categories (never specific product names from this shop), \
up to ten frequently browsed or purchased products, and a brief reasoning.";

fn preference_schema() -> Value {
    json!({
        "type": "object",
        "required": ["categories", "individual_products", "reasoning"],
        "properties": {
            "categories": {"type": "array", "items": {"type": "string"}, "maxItems": MAX_CATEGORIES},
            "individual_products": {"type": "array", "items": {"type": "string"}, "maxItems": MAX_PRODUCTS},
            "reasoning": {"type": "string"}
        }
    })
}

fn validate_reply(
    reply: &Value,
    cluster_id: usize,
    product_names: &BTreeSet<String>,
) -> Result<ProductPreferences, String> {
    #[derive(Deserialize)]
    struct Reply {
        categories: Vec<String>,
        individual_products: Vec<String>,
        #[serde(default)]
        reasoning: String,
    }
    let r: Reply = serde_json::from_value(reply.clone()).map_err(|e| e.to_string())?;
    if r.categories.is_empty() {
        return Err("categories must not be empty".into());
    }
    if r.categories.len() > MAX_CATEGORIES {
        return Err(format!("{} categories exceeds the cap of {MAX_CATEGORIES}", r.categories.len()));
    }
    if r.individual_products.len() > MAX_PRODUCTS {
        return Err(format!(
            "{} products exceeds the cap of {MAX_PRODUCTS}",
            r.individual_products.len()
        ));
    }
    if let Some(c) = r.categories.iter().find(|c| is_product_name(c, product_names)) {
        return Err(format!("category `{c}` is a product name, not a generic category"));
    }
    Ok(ProductPreferences {
        cluster_id,
        categories: r.categories,
        individual_products: r.individual_products,
        reasoning: r.reasoning,
    })
}

fn remote_preferences(
    backend: &dyn TextBackend,
    max_retries: usize,
    shop: &ShopMeta,
    summary: &ClusterSummary,
    product_names: &BTreeSet<String>,
) -> Result<ProductPreferences, PersonaError> {
    let mut input = json!({
        "shop": shop,
        "cluster_id": summary.cluster_id,
        "summary": summary.products,
    });
    let schema = preference_schema();
    let mut last = String::new();
    for _ in 0..=max_retries {
        let outcome = backend
            .complete(PREFERENCE_INSTRUCTION, &input, &schema)
            .map_err(|e| e.to_string())
            .and_then(|reply| validate_reply(&reply, summary.cluster_id, product_names));
        match outcome {
            Ok(p) => return Ok(p),
            Err(e) => {
                input["previous_error"] = Value::String(e.clone());
                last = e;
            }
        }
    }
    Err(PersonaError::BackendUnavailable(RemoteError::Exhausted {
        attempts: max_retries + 1,
        last,
    }))
}
