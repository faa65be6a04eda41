use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PersonaError, ProductPreferences};
use crate::seeding;

pub const PURCHASE_DECISION_GUIDE: &str = "Research the available options. Do not purchase by default. \
Add a product to your cart only when it clearly fits your profile and the storefront gives you enough confidence to buy.";

/// Tokens that tie a target to a particular offer, size or page element
/// rather than to a kind of product.
const SCRUB: &[&str] = &[
    "bundle", "bundles", "multipack", "pack", "packs", "combo", "size", "sizes", "xs", "xl", "xxl",
    "discount", "discounts", "discounted", "sale", "off", "deal", "deals", "clearance", "promo",
    "coupon", "bogo", "free", "shipping", "banner", "button", "popup", "click", "limited",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerIntent {
    pub cluster_id: usize,
    pub product_target: String,
    pub purchase_decision_guide: String,
}

/// Removes offer, size and UI tokens (and anything carrying digits, `%` or
/// `$`) from a category label.
pub fn scrub_target(label: &str) -> String {
    label
        .split_whitespace()
        .filter(|tok| {
            let t = tok.to_lowercase();
            let t = t.trim_matches(|c: char| !c.is_alphanumeric());
            !t.is_empty()
                && !SCRUB.contains(&t)
                && !tok.chars().any(|c| c.is_ascii_digit() || c == '%' || c == '$')
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Samples a product target uniformly from the scrubbed categories.
pub fn generate_intent(prefs: &ProductPreferences, seed: u64) -> Result<BuyerIntent, PersonaError> {
    let mut targets: Vec<String> = Vec::new();
    for c in &prefs.categories {
        let t = scrub_target(c);
        if !t.is_empty() && !targets.contains(&t) {
            targets.push(t);
        }
    }
    if targets.is_empty() {
        return Err(PersonaError::NoCategories);
    }
    let idx = seeding::rng(seed).random_range(0..targets.len());
    Ok(BuyerIntent {
        cluster_id: prefs.cluster_id,
        product_target: targets.swap_remove(idx),
        purchase_decision_guide: PURCHASE_DECISION_GUIDE.to_string(),
    })
}
