//! Rule-based shopper used as an offline oracle.
//!
//! Everything it knows comes from the planning context: the persona, the
//! rendered page and (when enabled) its memory of earlier steps. Its buy
//! decision is a weighted utility over exactly the presentation signals a
//! storefront variant controls, plus product quality, price fit and values fit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Decision, DecisionPolicy, PlanningContext, PolicyError};
use crate::persona::{ExplorationRegime, KeywordSets, PersonaMode, PriceTier};
use crate::seeding::{derive_seed, unit_from_seed};
use crate::storefront::{Action, ActionKind, AxNode, AxRole, NodeTarget, PageKind, PageState, TRUST_BADGES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicWeights {
    pub quality: f64,
    pub trust: f64,
    pub image: f64,
    pub price: f64,
    pub values: f64,
    pub threshold: f64,
    /// Half-width of the per-(session, product) taste term.
    pub taste_noise: f64,
    pub shallow_pages: usize,
    pub moderate_pages: usize,
    pub deep_pages: usize,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self {
            quality: 0.35,
            trust: 0.2,
            image: 0.15,
            price: 0.2,
            values: 0.1,
            threshold: 0.45,
            taste_noise: 0.05,
            shallow_pages: 3,
            moderate_pages: 6,
            deep_pages: 10,
        }
    }
}

/// What the shopper reads off a product page.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductView {
    pub product_ref: String,
    pub name: String,
    pub category: String,
    pub price: f64,
    pub quality: f64,
    pub trust: f64,
    pub image: f64,
    pub keywords: Vec<String>,
    pub related_prices: Vec<f64>,
    pub add_ref: Option<u32>,
}

fn text_after<'a>(nodes: &[&'a AxNode], prefix: &str) -> Option<&'a str> {
    nodes
        .iter()
        .filter(|n| n.role == AxRole::Text)
        .find_map(|n| n.name.strip_prefix(prefix))
}

fn parse_price(s: &str) -> Option<f64> {
    s.trim().trim_start_matches('$').parse().ok()
}

fn list_named<'a>(root: &'a AxNode, name: &str) -> Option<&'a AxNode> {
    root.walk().into_iter().find(|n| n.role == AxRole::List && n.name == name)
}

impl ProductView {
    pub fn read(tree: &AxNode, product_ref: &str) -> Option<Self> {
        let related = list_named(tree, "You may also like");
        let related_ids: BTreeSet<u32> = related.map(|r| r.walk().iter().map(|n| n.ref_id).collect()).unwrap_or_default();
        // page-level nodes only; the related cards carry their own prices
        let nodes: Vec<&AxNode> = tree.walk().into_iter().filter(|n| !related_ids.contains(&n.ref_id)).collect();
        let name = nodes.iter().find(|n| n.role == AxRole::Heading)?.name.clone();
        let price = parse_price(text_after(&nodes, "Price: ")?)?;
        let category = text_after(&nodes, "Category: ")?.to_string();
        let rating: f64 = text_after(&nodes, "Rating: ")?.split_whitespace().next()?.parse().ok()?;
        let image = nodes
            .iter()
            .find(|n| n.role == AxRole::ImageDesc)
            .map(|n| {
                if n.name.ends_with("(high quality)") {
                    0.85
                } else if n.name.ends_with("(medium quality)") {
                    0.5
                } else {
                    0.2
                }
            })
            .unwrap_or(0.0);
        let trust = list_named(tree, "Trust").map_or(0.0, |l| l.children.len() as f64 / TRUST_BADGES as f64);
        let keywords = text_after(&nodes, "Keywords: ")
            .map(|k| k.split(", ").map(|s| s.trim().to_lowercase()).collect())
            .unwrap_or_default();
        let related_prices = related
            .map(|r| {
                r.walk()
                    .iter()
                    .filter(|n| n.role == AxRole::Text)
                    .filter_map(|n| n.name.strip_prefix("Price: ").and_then(parse_price))
                    .collect()
            })
            .unwrap_or_default();
        let add_ref = nodes
            .iter()
            .find(|n| matches!(n.target, Some(NodeTarget::AddToCart { .. })))
            .map(|n| n.ref_id);
        Some(Self {
            product_ref: product_ref.to_string(),
            name,
            category,
            price,
            quality: ((rating - 1.0) / 4.0).clamp(0.0, 1.0),
            trust,
            image,
            keywords,
            related_prices,
            add_ref,
        })
    }

    /// Price over the median of this product and its related products.
    pub fn relative_price(&self) -> f64 {
        let mut all = self.related_prices.clone();
        all.push(self.price);
        all.sort_by(f64::total_cmp);
        let n = all.len();
        let median = if n % 2 == 1 { all[n / 2] } else { (all[n / 2 - 1] + all[n / 2]) / 2.0 };
        if median > 0.0 {
            self.price / median
        } else {
            1.0
        }
    }
}

/// Product card on a listing page.
#[derive(Debug, Clone)]
struct Card {
    link_ref: u32,
    product_ref: String,
    name: String,
    category: String,
}

fn cards(tree: &AxNode) -> Vec<Card> {
    tree.walk()
        .into_iter()
        .filter(|n| n.role == AxRole::Listitem)
        .filter_map(|item| {
            let link = item.children.iter().find(|c| c.role == AxRole::Link)?;
            let Some(NodeTarget::Link { href }) = &link.target else {
                return None;
            };
            let product_ref = href.strip_prefix("/products/")?.to_string();
            let category = item
                .children
                .iter()
                .find_map(|c| c.name.strip_prefix("Category: "))
                .unwrap_or_default()
                .to_string();
            Some(Card {
                link_ref: link.ref_id,
                product_ref,
                name: link.name.clone(),
                category,
            })
        })
        .collect()
}

fn links(tree: &AxNode) -> Vec<(u32, String, String)> {
    tree.walk()
        .into_iter()
        .filter_map(|n| match &n.target {
            Some(NodeTarget::Link { href }) => Some((n.ref_id, n.name.clone(), href.clone())),
            _ => None,
        })
        .collect()
}

pub fn matches_target(target: &str, name: &str, category: &str) -> bool {
    let t = target.trim().to_lowercase();
    let c = category.trim().to_lowercase();
    if t.is_empty() {
        return false;
    }
    c == t || (!c.is_empty() && (c.contains(&t) || t.contains(&c))) || name.to_lowercase().contains(&t)
}

/// What the shopper remembers, rebuilt from the memory view each step.
#[derive(Debug, Default)]
struct Recall {
    products: BTreeSet<String>,
    collections: BTreeSet<String>,
    searched: bool,
    added: bool,
    tried: BTreeSet<(String, u32)>,
}

fn recall(ctx: &PlanningContext<'_>) -> Recall {
    let mut r = Recall::default();
    for m in ctx.memory_view {
        let url = &m.observation_digest.url;
        if let Some(page) = PageState::route(url) {
            match page.kind {
                PageKind::Product => r.products.extend(page.context),
                PageKind::Collection => r.collections.extend(page.context),
                _ => {}
            }
        }
        if m.action.kind == ActionKind::Search {
            r.searched = true;
        }
        if m.emitted_events.iter().any(|e| e.kind == crate::clickstream::EventKind::AddToCart) {
            r.added = true;
        }
        if let (ActionKind::Click, Some(id)) = (m.action.kind, m.action.target_ref) {
            r.tried.insert((url.clone(), id));
        }
    }
    r
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicPolicy {
    pub weights: HeuristicWeights,
    pub keywords: KeywordSets,
}

impl HeuristicPolicy {
    pub fn new(weights: HeuristicWeights, keywords: KeywordSets) -> Self {
        Self { weights, keywords }
    }

    fn page_budget(&self, regime: ExplorationRegime) -> usize {
        match regime {
            ExplorationRegime::Shallow => self.weights.shallow_pages,
            ExplorationRegime::Moderate => self.weights.moderate_pages,
            ExplorationRegime::Deep => self.weights.deep_pages,
        }
    }

    fn price_penalty(tier: PriceTier, rel: f64) -> f64 {
        match tier {
            PriceTier::Budget => (rel - 0.75).clamp(0.0, 1.0),
            PriceTier::MidRange => ((rel - 1.0).abs() - 0.25).clamp(0.0, 1.0),
            PriceTier::Premium => (1.0 - rel).clamp(0.0, 1.0),
        }
    }

    fn values_match(&self, ctx: &PlanningContext<'_>, view: &ProductView) -> f64 {
        let Some(a) = &ctx.persona.archetype else {
            return 0.0;
        };
        let focus = [a.premium_focus, a.performance_focus, a.ethics_focus];
        self.keywords
            .axes()
            .iter()
            .zip(focus)
            .filter(|((_, set), _)| view.keywords.iter().any(|k| set.contains(k)))
            .map(|(_, f)| f)
            .fold(0.0, f64::max)
    }

    /// Buy utility of a product for this session.
    pub fn utility(&self, ctx: &PlanningContext<'_>, view: &ProductView) -> f64 {
        let w = &self.weights;
        let tier = ctx.persona.archetype.as_ref().map_or(PriceTier::MidRange, |a| a.price_tier);
        let taste = unit_from_seed(derive_seed(ctx.seed, &[&view.product_ref])) * 2.0 - 1.0;
        w.quality * view.quality + w.trust * view.trust + w.image * view.image
            - w.price * Self::price_penalty(tier, view.relative_price())
            + w.values * self.values_match(ctx, view)
            + w.taste_noise * taste
    }

    fn browse(&self, ctx: &PlanningContext<'_>, r: &Recall, explored: usize) -> Decision {
        let tree = &ctx.observation.ax_tree;
        let url = &ctx.observation.url;
        let target = &ctx.persona.target;
        let cards = cards(tree);
        let unvisited = |c: &&Card| !r.products.contains(&c.product_ref) && !url.ends_with(&format!("/{}", c.product_ref));
        if let Some(c) = cards
            .iter()
            .filter(unvisited)
            .find(|c| matches_target(target, &c.name, &c.category))
        {
            return Decision::act(Action::click(c.link_ref), format!("{} looks like a {target}", c.name));
        }
        let collection_links: Vec<(u32, String, String)> = links(tree)
            .into_iter()
            .filter(|(_, _, href)| href.starts_with("/collections/"))
            .filter(|(_, _, href)| !r.collections.contains(&href["/collections/".len()..]) && href != url)
            .collect();
        if let Some((id, name, _)) = collection_links
            .iter()
            .find(|(_, name, _)| matches_target(target, "", name))
        {
            return Decision::act(Action::click(*id), format!("the {name} collection should have {target}"));
        }
        let can_search = tree
            .walk()
            .iter()
            .any(|n| matches!(n.target, Some(NodeTarget::Search)));
        if can_search && !r.searched && !url.starts_with("/search") {
            return Decision::act(Action::search(target.clone()), format!("searching for {target}"));
        }
        if let Some(c) = cards.iter().find(unvisited) {
            return Decision::act(Action::click(c.link_ref), format!("taking a look at {}", c.name));
        }
        if let Some((id, name, _)) = collection_links.first() {
            return Decision::act(Action::click(*id), format!("browsing {name}"));
        }
        if explored >= 1 {
            return Decision::stop(format!("looked at {explored} products, nothing more worth seeing"));
        }
        let all = links(tree);
        let pick = all
            .iter()
            .find(|(id, _, _)| !r.tried.contains(&(url.clone(), *id)))
            .or(all.first());
        match pick {
            Some((id, name, _)) => Decision::act(Action::click(*id), format!("trying {name}")),
            None => Decision::stop("nowhere left to go"),
        }
    }
}

impl DecisionPolicy for HeuristicPolicy {
    fn decide(&self, ctx: &PlanningContext<'_>) -> Result<Decision, PolicyError> {
        let r = recall(ctx);
        if r.added {
            return Ok(Decision::stop("added a product to the cart"));
        }
        let page = PageState::route(&ctx.observation.url);
        let regime = ctx
            .persona
            .archetype
            .as_ref()
            .map_or(ExplorationRegime::Moderate, |a| a.exploration_regime);
        let budget = self.page_budget(regime);
        let mut explored = r.products.len();
        if let Some(PageState {
            kind: PageKind::Product,
            context: Some(product_ref),
            ..
        }) = &page
        {
            if !r.products.contains(product_ref) {
                explored += 1;
            }
            if let Some(view) = ProductView::read(&ctx.observation.ax_tree, product_ref) {
                if matches_target(&ctx.persona.target, &view.name, &view.category) {
                    if let Some(add) = view.add_ref {
                        if ctx.persona.mode == PersonaMode::ProductOnly {
                            return Ok(Decision::act(Action::add_to_cart(add), "this is what I came for"));
                        }
                        let u = self.utility(ctx, &view);
                        if u >= self.weights.threshold {
                            return Ok(Decision::act(
                                Action::add_to_cart(add),
                                format!("{} fits: utility {u:.3}", view.name),
                            ));
                        }
                    }
                }
            }
        }
        if explored >= budget {
            return Ok(Decision::stop(format!("checked {explored} products and none fit")));
        }
        if matches!(&page, Some(p) if p.kind == PageKind::Product) && !ctx.memory_view.is_empty() {
            return Ok(Decision::act(Action::go_back(), "not convinced, back to the listing"));
        }
        Ok(self.browse(ctx, &r, explored))
    }
}
