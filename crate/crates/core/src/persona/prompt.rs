use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BuyerArchetype, BuyerIntent, PersonaError, PriceTier, ProductPreferences};

/// Values axes at or above this score get their own guidance line.
const VALUES_GUIDANCE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    pub shop_id: String,
    pub cluster_id: usize,
    /// Number of sessions in the source cluster.
    pub cluster_mass: usize,
    pub intent: BuyerIntent,
    pub archetype: BuyerArchetype,
    pub cluster_preferences: ProductPreferences,
    pub prompt: String,
}

/// The pieces a prompt can be built from. Missing parts are left out,
/// which is how the reduced persona modes are rendered.
#[derive(Debug, Clone, Copy)]
pub struct PromptParts<'a> {
    pub target: &'a str,
    pub guide: Option<&'a str>,
    pub archetype: Option<&'a BuyerArchetype>,
    pub prefs: Option<&'a ProductPreferences>,
}

fn tier_gloss(tier: PriceTier) -> &'static str {
    match tier {
        PriceTier::Budget => "price-conscious, looks for value",
        PriceTier::MidRange => "balances price against quality",
        PriceTier::Premium => "pays more for quality and craftsmanship",
    }
}

fn regime_gloss(a: &BuyerArchetype) -> &'static str {
    use super::ExplorationRegime::*;
    match a.exploration_regime {
        Shallow => "goes straight to what they want and decides quickly",
        Moderate => "compares a handful of options before deciding",
        Deep => "researches widely and reads product details closely",
    }
}

fn experience_lines(a: &BuyerArchetype) -> Vec<&'static str> {
    let mut lines = vec![match a.price_tier {
        PriceTier::Budget => "Budget tier: notices discounts, reviews from other buyers and clear value signals.",
        PriceTier::MidRange => "Mid-range tier: wants fair prices backed by visible quality and trust signals.",
        PriceTier::Premium => "Premium tier: expects polished presentation, rich imagery and evidence of quality.",
    }];
    if a.premium_focus >= VALUES_GUIDANCE_FLOOR {
        lines.push("Premium values: drawn to handcrafted, artisan and luxury details.");
    }
    if a.performance_focus >= VALUES_GUIDANCE_FLOOR {
        lines.push("Performance values: reads technical details, build quality claims and reviews.");
    }
    if a.ethics_focus >= VALUES_GUIDANCE_FLOOR {
        lines.push("Ethical values: looks for sustainable, organic or fairly sourced materials.");
    }
    lines
}

/// Renders the prompt text. Deterministic in its inputs.
pub fn render_prompt(parts: PromptParts<'_>) -> String {
    let mut out = String::new();
    out.push_str("## Intent\n");
    let _ = writeln!(out, "Product target: {}", parts.target);
    if let Some(guide) = parts.guide {
        let _ = writeln!(out, "Purchase decision guide: {guide}");
    }
    if let Some(a) = parts.archetype {
        out.push_str("\n## Shopping Profile\n");
        let _ = writeln!(
            out,
            "Price Tier: {} ({}; price gap {:.2})",
            a.price_tier.label(),
            tier_gloss(a.price_tier),
            a.price_gap
        );
        let _ = writeln!(
            out,
            "Exploration Depth: {} ({}; score {:.2})",
            a.exploration_regime.label(),
            regime_gloss(a),
            a.exploration_score
        );
        out.push_str("\n## Values\n");
        let _ = writeln!(out, "Premium focus: {:.2}", a.premium_focus);
        let _ = writeln!(out, "Performance focus: {:.2}", a.performance_focus);
        let _ = writeln!(out, "Ethics focus: {:.2}", a.ethics_focus);
    }
    if let Some(p) = parts.prefs {
        out.push_str("\n## Product Preferences\n");
        let _ = writeln!(out, "Categories: {}", p.categories.join(", "));
        if !p.individual_products.is_empty() {
            let _ = writeln!(out, "Products of interest: {}", p.individual_products.join(", "));
        }
    }
    if let Some(a) = parts.archetype {
        out.push_str("\n## Shopping Experience Preferences\n");
        for line in experience_lines(a) {
            let _ = writeln!(out, "- {line}");
        }
    }
    out
}

pub fn compose_prompt(
    persona_id: impl Into<String>,
    shop_id: impl Into<String>,
    cluster_mass: usize,
    intent: BuyerIntent,
    archetype: BuyerArchetype,
    prefs: ProductPreferences,
) -> Result<Persona, PersonaError> {
    if intent.cluster_id != archetype.cluster_id {
        return Err(PersonaError::ClusterMismatch {
            intent: intent.cluster_id,
            archetype: archetype.cluster_id,
        });
    }
    let prompt = render_prompt(PromptParts {
        target: &intent.product_target,
        guide: Some(&intent.purchase_decision_guide),
        archetype: Some(&archetype),
        prefs: Some(&prefs),
    });
    Ok(Persona {
        persona_id: persona_id.into(),
        shop_id: shop_id.into(),
        cluster_id: intent.cluster_id,
        cluster_mass,
        intent,
        archetype,
        cluster_preferences: prefs,
        prompt,
    })
}
