//! Deterministic simulated storefront.
//!
//! A store is a catalog plus collections plus a small vector of
//! presentation parameters. A store-spec file carries one shared catalog
//! and a `control` and a `treatment` parameter block. Pages are rendered as
//! accessibility trees whose nodes get depth-first `ref_id`s starting at 1;
//! actions refer to those ids.
//!
//! Routes: `/`, `/collections/<name>`, `/products/<ref>`, `/search?q=<query>`
//! (spaces as `+`), `/cart`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Product;
use crate::clickstream::EventKind;

pub const FEATURED_SLOTS: usize = 8;
pub const MAX_NAV_DEPTH: usize = 4;
pub const MAX_TREE_DEPTH: usize = 8;
pub const HISTORY_CAP: usize = 50;
pub const TRUST_BADGES: usize = 4;
const RELATED_LIMIT: usize = 4;
const BADGE_NAMES: [&str; TRUST_BADGES] = [
    "Secure checkout",
    "Free returns within 30 days",
    "Verified buyer reviews",
    "Satisfaction guarantee",
];

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("store spec violates the schema: {0}")]
    SchemaViolation(String),
    #[error("control and treatment catalogs differ: {0}")]
    CatalogMismatch(String),
    #[error("invalid page state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Collection {
    pub name: String,
    pub product_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantParams {
    pub featured_products: Vec<String>,
    pub layout_density: f64,
    pub trust_cue_level: f64,
    pub image_quality: f64,
    pub nav_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSpec {
    pub shop_id: String,
    pub name: String,
    pub products: Vec<Product>,
    pub collections: Vec<Collection>,
    /// Whether the header offers a search control.
    pub search_enabled: bool,
    pub variant_params: VariantParams,
}

/// A variant block in a store-spec file. The catalog overrides exist only
/// so that files with diverging catalogs can be detected and rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantBlock {
    #[serde(flatten)]
    pub params: VariantParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub products: Option<Vec<Product>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collections: Option<Vec<Collection>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSpecFile {
    pub shop_id: String,
    pub name: String,
    pub products: Vec<Product>,
    #[serde(default)]
    pub collections: Vec<Collection>,
    #[serde(default = "yes")]
    pub search_enabled: bool,
    pub control: VariantBlock,
    pub treatment: VariantBlock,
}

/// Several store-spec documents in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSpecSet {
    pub stores: Vec<StoreSpecFile>,
}

fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

fn in_unit(name: &str, v: f64) -> Result<(), StoreError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(StoreError::SchemaViolation(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl StoreSpec {
    pub fn product(&self, product_ref: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.product_ref == product_ref)
    }

    pub fn collection(&self, name: &str) -> Option<&Collection> {
        self.collections.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let schema = |m: String| Err(StoreError::SchemaViolation(m));
        if self.products.is_empty() {
            return schema("store has no products".into());
        }
        let mut refs = BTreeSet::new();
        for p in &self.products {
            if !is_slug(&p.product_ref) {
                return schema(format!("product_ref `{}` must be a lowercase slug", p.product_ref));
            }
            if !refs.insert(p.product_ref.as_str()) {
                return schema(format!("duplicate product_ref `{}`", p.product_ref));
            }
            if !(p.price.is_finite() && p.price >= 0.0) {
                return schema(format!("product `{}` has invalid price", p.product_ref));
            }
            in_unit("quality_score", p.quality_score)?;
        }
        let mut names = BTreeSet::new();
        for c in &self.collections {
            if !is_slug(&c.name) {
                return schema(format!("collection name `{}` must be a lowercase slug", c.name));
            }
            if !names.insert(c.name.as_str()) {
                return schema(format!("duplicate collection `{}`", c.name));
            }
            if c.product_refs.is_empty() {
                return schema(format!("collection `{}` is empty", c.name));
            }
            if let Some(r) = c.product_refs.iter().find(|r| !refs.contains(r.as_str())) {
                return schema(format!("collection `{}` lists unknown product `{r}`", c.name));
            }
        }
        let v = &self.variant_params;
        if let Some(r) = v.featured_products.iter().find(|r| !refs.contains(r.as_str())) {
            return schema(format!("featured product `{r}` is not in the catalog"));
        }
        in_unit("layout_density", v.layout_density)?;
        in_unit("trust_cue_level", v.trust_cue_level)?;
        in_unit("image_quality", v.image_quality)?;
        if v.nav_depth > MAX_NAV_DEPTH {
            return schema(format!("nav_depth {} exceeds {MAX_NAV_DEPTH}", v.nav_depth));
        }
        Ok(())
    }
}

impl StoreSpecFile {
    fn variant(&self, block: &VariantBlock) -> StoreSpec {
        StoreSpec {
            shop_id: self.shop_id.clone(),
            name: self.name.clone(),
            products: block.products.clone().unwrap_or_else(|| self.products.clone()),
            collections: block.collections.clone().unwrap_or_else(|| self.collections.clone()),
            search_enabled: self.search_enabled,
            variant_params: block.params.clone(),
        }
    }
}

/// Splits a store-spec document into its two variants after checking that
/// they share one catalog and differ only in presentation.
pub fn load_store_spec(doc: &StoreSpecFile) -> Result<(StoreSpec, StoreSpec), StoreError> {
    let control = doc.variant(&doc.control);
    let treatment = doc.variant(&doc.treatment);
    if control.products != treatment.products {
        let a: BTreeSet<_> = control.products.iter().map(|p| &p.product_ref).collect();
        let b: BTreeSet<_> = treatment.products.iter().map(|p| &p.product_ref).collect();
        let diff: Vec<_> = a.symmetric_difference(&b).collect();
        let detail = if diff.is_empty() {
            "product attributes differ".to_string()
        } else {
            format!("products only in one variant: {diff:?}")
        };
        return Err(StoreError::CatalogMismatch(detail));
    }
    if control.collections != treatment.collections {
        return Err(StoreError::CatalogMismatch("collections differ".into()));
    }
    control.validate()?;
    treatment.validate()?;
    Ok((control, treatment))
}

pub fn parse_store_spec(text: &str) -> Result<(StoreSpec, StoreSpec), StoreError> {
    let doc: StoreSpecFile =
        serde_json::from_str(text).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
    load_store_spec(&doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageKind {
    Home,
    Collection,
    Product,
    SearchResults,
    Cart,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PageState {
    pub url: String,
    pub kind: PageKind,
    /// Collection name, product ref or search query; absent for home and cart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl PageState {
    pub fn home() -> Self {
        Self {
            url: "/".into(),
            kind: PageKind::Home,
            context: None,
        }
    }

    pub fn cart() -> Self {
        Self {
            url: "/cart".into(),
            kind: PageKind::Cart,
            context: None,
        }
    }

    pub fn collection(name: &str) -> Self {
        Self {
            url: format!("/collections/{name}"),
            kind: PageKind::Collection,
            context: Some(name.into()),
        }
    }

    pub fn product(product_ref: &str) -> Self {
        Self {
            url: format!("/products/{product_ref}"),
            kind: PageKind::Product,
            context: Some(product_ref.into()),
        }
    }

    pub fn search(query: &str) -> Self {
        let q = query.split_whitespace().collect::<Vec<_>>().join(" ");
        Self {
            url: format!("/search?q={}", q.replace(' ', "+")),
            kind: PageKind::SearchResults,
            context: Some(q),
        }
    }

    /// Parses a path into a page state. Does not check the page exists.
    pub fn route(url: &str) -> Option<Self> {
        if url == "/" {
            return Some(Self::home());
        }
        if url == "/cart" {
            return Some(Self::cart());
        }
        if let Some(q) = url.strip_prefix("/search?q=") {
            let q = q.replace('+', " ");
            return (!q.trim().is_empty()).then(|| Self::search(&q));
        }
        if let Some(name) = url.strip_prefix("/collections/") {
            return is_slug(name).then(|| Self::collection(name));
        }
        if let Some(r) = url.strip_prefix("/products/") {
            return is_slug(r).then(|| Self::product(r));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartLine {
    pub product_ref: String,
    pub price: f64,
}

/// Everything a session owns: the current page, the cart and the back stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrowserState {
    pub page: PageState,
    pub cart: Vec<CartLine>,
    pub history: Vec<PageState>,
}

impl BrowserState {
    pub fn start() -> Self {
        Self {
            page: PageState::home(),
            cart: Vec::new(),
            history: Vec::new(),
        }
    }

    fn navigate(&mut self, to: PageState) {
        let from = std::mem::replace(&mut self.page, to);
        self.history.push(from);
        if self.history.len() > HISTORY_CAP {
            self.history.remove(0);
        }
    }
}

impl Default for BrowserState {
    fn default() -> Self {
        Self::start()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxRole {
    Heading,
    Link,
    Button,
    Text,
    List,
    Listitem,
    ImageDesc,
}

/// What activating a node does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeTarget {
    Link { href: String },
    AddToCart { product_ref: String },
    Checkout,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxNode {
    pub role: AxRole,
    pub name: String,
    pub ref_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<NodeTarget>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AxNode>,
}

impl AxNode {
    fn new(role: AxRole, name: impl Into<String>) -> Self {
        Self {
            role,
            name: name.into(),
            ref_id: 0,
            target: None,
            children: Vec::new(),
        }
    }

    fn link(name: impl Into<String>, href: impl Into<String>) -> Self {
        let mut n = Self::new(AxRole::Link, name);
        n.target = Some(NodeTarget::Link { href: href.into() });
        n
    }

    fn button(name: impl Into<String>, target: NodeTarget) -> Self {
        let mut n = Self::new(AxRole::Button, name);
        n.target = Some(target);
        n
    }

    fn with(mut self, children: Vec<AxNode>) -> Self {
        self.children = children;
        self
    }

    fn number(&mut self, next: &mut u32) {
        self.ref_id = *next;
        *next += 1;
        for c in &mut self.children {
            c.number(next);
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&AxNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn find(&self, ref_id: u32) -> Option<&AxNode> {
        self.walk().into_iter().find(|n| n.ref_id == ref_id)
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(AxNode::depth).max().unwrap_or(0)
    }

    /// Indented one-line-per-node text form, as shown to a remote model.
    pub fn to_text(&self) -> String {
        fn go(n: &AxNode, depth: usize, out: &mut String) {
            let _ = writeln!(out, "{}[{}] {:?} \"{}\"", "  ".repeat(depth), n.ref_id, n.role, n.name);
            for c in &n.children {
                go(c, depth + 1, out);
            }
        }
        let mut out = String::new();
        go(self, 0, &mut out);
        out
    }
}

pub fn image_bucket(quality: f64) -> &'static str {
    if quality < 1.0 / 3.0 {
        "low"
    } else if quality < 2.0 / 3.0 {
        "medium"
    } else {
        "high"
    }
}

pub fn featured_count(spec: &StoreSpec) -> usize {
    let v = &spec.variant_params;
    ((v.layout_density * FEATURED_SLOTS as f64).ceil() as usize).min(v.featured_products.len())
}

pub fn trust_badge_count(level: f64) -> usize {
    ((level * TRUST_BADGES as f64).round() as usize).min(TRUST_BADGES)
}

fn price_text(price: f64) -> String {
    format!("Price: ${price:.2}")
}

fn card(p: &Product) -> AxNode {
    AxNode::new(AxRole::Listitem, "").with(vec![
        AxNode::link(&p.name, PageState::product(&p.product_ref).url),
        AxNode::new(AxRole::Text, price_text(p.price)),
        AxNode::new(AxRole::Text, format!("Category: {}", p.category)),
    ])
}

fn card_list(name: &str, products: &[&Product]) -> AxNode {
    AxNode::new(AxRole::List, name).with(products.iter().map(|p| card(p)).collect())
}

fn header(spec: &StoreSpec, cart_items: usize) -> AxNode {
    let mut items = vec![AxNode::link("Home", "/")];
    if cart_items > 0 {
        items.push(AxNode::link(format!("Cart ({cart_items})"), "/cart"));
    }
    if spec.search_enabled {
        items.push(AxNode::button("Search", NodeTarget::Search));
    }
    let depth = spec.variant_params.nav_depth;
    if depth > 0 && !spec.collections.is_empty() {
        let mut nav = AxNode::new(AxRole::List, "Collections").with(
            spec.collections
                .iter()
                .map(|c| AxNode::link(c.name.replace(['-', '_'], " "), PageState::collection(&c.name).url))
                .collect(),
        );
        for _ in 1..depth {
            nav = AxNode::new(AxRole::List, "Menu").with(vec![nav]);
        }
        items.push(nav);
    }
    AxNode::new(AxRole::List, "Header").with(items)
}

fn trust_list(level: f64) -> Option<AxNode> {
    let n = trust_badge_count(level);
    (n > 0).then(|| {
        AxNode::new(AxRole::List, "Trust").with(
            BADGE_NAMES[..n]
                .iter()
                .map(|b| AxNode::new(AxRole::Text, *b))
                .collect(),
        )
    })
}

fn search_matches<'a>(spec: &'a StoreSpec, query: &str) -> Vec<&'a Product> {
    let q = query.to_lowercase();
    spec.products
        .iter()
        .filter(|p| {
            p.name.to_lowercase().contains(&q)
                || p.category.to_lowercase().contains(&q)
                || p.keywords.iter().any(|k| k.to_lowercase().contains(&q))
        })
        .collect()
}

/// Products of the same category, by ref, excluding `p` itself.
pub fn related_products<'a>(spec: &'a StoreSpec, p: &Product) -> Vec<&'a Product> {
    let mut rel: Vec<&Product> = spec
        .products
        .iter()
        .filter(|o| o.category == p.category && o.product_ref != p.product_ref)
        .collect();
    rel.sort_by(|a, b| a.product_ref.cmp(&b.product_ref));
    rel.truncate(RELATED_LIMIT);
    rel
}

fn body(spec: &StoreSpec, state: &BrowserState) -> Result<Vec<AxNode>, StoreError> {
    let page = &state.page;
    let v = &spec.variant_params;
    let ctx = || page.context.as_deref().unwrap_or_default();
    let invalid = |m: String| StoreError::InvalidState(m);
    Ok(match page.kind {
        PageKind::Home => {
            let mut out = vec![AxNode::new(AxRole::Heading, &spec.name)];
            if v.trust_cue_level >= 0.5 {
                out.extend(trust_list(v.trust_cue_level));
            }
            let featured: Vec<&Product> = v.featured_products[..featured_count(spec)]
                .iter()
                .filter_map(|r| spec.product(r))
                .collect();
            if !featured.is_empty() {
                out.push(card_list("Featured products", &featured));
            }
            out
        }
        PageKind::Collection => {
            let c = spec
                .collection(ctx())
                .ok_or_else(|| invalid(format!("no collection `{}`", ctx())))?;
            let products: Vec<&Product> = c.product_refs.iter().filter_map(|r| spec.product(r)).collect();
            vec![
                AxNode::new(AxRole::Heading, c.name.replace(['-', '_'], " ")),
                card_list("Products", &products),
            ]
        }
        PageKind::Product => {
            let p = spec
                .product(ctx())
                .ok_or_else(|| invalid(format!("no product `{}`", ctx())))?;
            let mut out = vec![
                AxNode::new(AxRole::Heading, &p.name),
                AxNode::new(AxRole::Text, price_text(p.price)),
                AxNode::new(AxRole::Text, format!("Category: {}", p.category)),
                AxNode::new(AxRole::Text, format!("Rating: {:.1} / 5", 1.0 + 4.0 * p.quality_score)),
                AxNode::new(
                    AxRole::ImageDesc,
                    format!("Product photo of {} ({} quality)", p.name, image_bucket(v.image_quality)),
                ),
            ];
            if !p.keywords.is_empty() {
                out.push(AxNode::new(AxRole::Text, format!("Keywords: {}", p.keywords.join(", "))));
            }
            out.extend(trust_list(v.trust_cue_level));
            out.push(AxNode::button(
                "Add to cart",
                NodeTarget::AddToCart {
                    product_ref: p.product_ref.clone(),
                },
            ));
            let related = related_products(spec, p);
            if !related.is_empty() {
                out.push(card_list("You may also like", &related));
            }
            out
        }
        PageKind::SearchResults => {
            let hits = search_matches(spec, ctx());
            let mut out = vec![AxNode::new(AxRole::Heading, format!("Search results for \"{}\"", ctx()))];
            if hits.is_empty() {
                out.push(AxNode::new(AxRole::Text, "No products found"));
            } else {
                out.push(card_list("Results", &hits));
            }
            out
        }
        PageKind::Cart => {
            let mut out = vec![AxNode::new(AxRole::Heading, "Cart")];
            if state.cart.is_empty() {
                out.push(AxNode::new(AxRole::Text, "Your cart is empty"));
            } else {
                let lines = state
                    .cart
                    .iter()
                    .map(|l| {
                        let name = spec.product(&l.product_ref).map_or(l.product_ref.as_str(), |p| &p.name);
                        AxNode::new(AxRole::Listitem, format!("{name} ${:.2}", l.price))
                    })
                    .collect();
                out.push(AxNode::new(AxRole::List, "Cart items").with(lines));
                out.push(AxNode::new(AxRole::Text, format!("Total: ${:.2}", cart_total(state))));
                out.push(AxNode::button("Checkout", NodeTarget::Checkout));
            }
            out
        }
    })
}

fn cart_total(state: &BrowserState) -> f64 {
    state.cart.iter().map(|l| l.price).sum()
}

/// Renders the current page. Every node, including the root, gets a ref id.
pub fn render_ax_tree(spec: &StoreSpec, state: &BrowserState) -> Result<AxNode, StoreError> {
    let mut children = vec![header(spec, state.cart.len())];
    children.extend(body(spec, state)?);
    let mut root = AxNode::new(AxRole::List, state.page.url.clone()).with(children);
    root.number(&mut 1);
    debug_assert!(root.depth() <= MAX_TREE_DEPTH);
    Ok(root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Navigate,
    Search,
    AddToCart,
    GoBack,
    Terminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ref: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<String>,
}

impl Action {
    pub fn click(target_ref: u32) -> Self {
        Self {
            kind: ActionKind::Click,
            target_ref: Some(target_ref),
            args: None,
        }
    }

    pub fn add_to_cart(target_ref: u32) -> Self {
        Self {
            kind: ActionKind::AddToCart,
            target_ref: Some(target_ref),
            args: None,
        }
    }

    pub fn search(query: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Search,
            target_ref: None,
            args: Some(query.into()),
        }
    }

    pub fn navigate(path: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Navigate,
            target_ref: None,
            args: Some(path.into()),
        }
    }

    pub fn go_back() -> Self {
        Self {
            kind: ActionKind::GoBack,
            target_ref: None,
            args: None,
        }
    }

    pub fn terminate() -> Self {
        Self {
            kind: ActionKind::Terminate,
            target_ref: None,
            args: None,
        }
    }

    /// Checks the per-kind argument requirements.
    pub fn check(&self) -> Result<(), String> {
        match self.kind {
            ActionKind::Click | ActionKind::AddToCart if self.target_ref.is_none() => {
                Err(format!("{:?} needs a target_ref", self.kind))
            }
            ActionKind::Search | ActionKind::Navigate
                if self.args.as_deref().is_none_or(|a| a.trim().is_empty()) =>
            {
                Err(format!("{:?} needs args", self.kind))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    ExecutionError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedEvent {
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl EmittedEvent {
    fn plain(kind: EventKind) -> Self {
        Self {
            kind,
            product_ref: None,
            value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub outcome: Outcome,
    pub new_state: BrowserState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
    pub emitted_events: Vec<EmittedEvent>,
}

/// The event a page emits when it is entered.
pub fn arrival_event(page: &PageState) -> EmittedEvent {
    match page.kind {
        PageKind::Product => EmittedEvent {
            kind: EventKind::ProductView,
            product_ref: page.context.clone(),
            value: None,
        },
        PageKind::SearchResults => EmittedEvent::plain(EventKind::Search),
        _ => EmittedEvent::plain(EventKind::PageView),
    }
}

fn page_exists(spec: &StoreSpec, page: &PageState) -> bool {
    let ctx = page.context.as_deref().unwrap_or_default();
    match page.kind {
        PageKind::Collection => spec.collection(ctx).is_some(),
        PageKind::Product => spec.product(ctx).is_some(),
        _ => true,
    }
}

/// Applies an action. Never panics and never mutates on failure: errors come
/// back as `execution_error` with the input state.
pub fn execute(spec: &StoreSpec, state: &BrowserState, action: &Action) -> TransitionResult {
    match step(spec, state, action) {
        Ok((new_state, emitted_events)) => TransitionResult {
            outcome: Outcome::Ok,
            new_state,
            error_detail: None,
            emitted_events,
        },
        Err(detail) => TransitionResult {
            outcome: Outcome::ExecutionError,
            new_state: state.clone(),
            error_detail: Some(detail),
            emitted_events: Vec::new(),
        },
    }
}

fn goto(spec: &StoreSpec, state: &BrowserState, url: &str) -> Result<(BrowserState, Vec<EmittedEvent>), String> {
    let page = PageState::route(url).ok_or_else(|| format!("no route for `{url}`"))?;
    if !page_exists(spec, &page) {
        return Err(format!("page `{url}` does not exist"));
    }
    let event = arrival_event(&page);
    let mut next = state.clone();
    next.navigate(page);
    Ok((next, vec![event]))
}

fn add(spec: &StoreSpec, state: &BrowserState, product_ref: &str) -> Result<(BrowserState, Vec<EmittedEvent>), String> {
    let p = spec
        .product(product_ref)
        .ok_or_else(|| format!("unknown product `{product_ref}`"))?;
    let mut next = state.clone();
    next.cart.push(CartLine {
        product_ref: p.product_ref.clone(),
        price: p.price,
    });
    Ok((
        next,
        vec![EmittedEvent {
            kind: EventKind::AddToCart,
            product_ref: Some(p.product_ref.clone()),
            value: Some(p.price),
        }],
    ))
}

fn step(spec: &StoreSpec, state: &BrowserState, action: &Action) -> Result<(BrowserState, Vec<EmittedEvent>), String> {
    action.check()?;
    let tree = || render_ax_tree(spec, state).map_err(|e| e.to_string());
    let node_target = |id: u32| -> Result<NodeTarget, String> {
        let t = tree()?;
        let node = t.find(id).ok_or_else(|| format!("no element with ref {id} on {}", state.page.url))?;
        node.target
            .clone()
            .ok_or_else(|| format!("element {id} ({:?} \"{}\") is not actionable", node.role, node.name))
    };
    match action.kind {
        ActionKind::Click => match node_target(action.target_ref.unwrap_or_default())? {
            NodeTarget::Link { href } => goto(spec, state, &href),
            NodeTarget::AddToCart { product_ref } => add(spec, state, &product_ref),
            NodeTarget::Checkout => {
                if state.cart.is_empty() {
                    return Err("cart is empty".into());
                }
                Ok((
                    state.clone(),
                    vec![EmittedEvent {
                        kind: EventKind::CheckoutStart,
                        product_ref: None,
                        value: Some(cart_total(state)),
                    }],
                ))
            }
            NodeTarget::Search => Err("the search control needs a query; use the search action".into()),
        },
        ActionKind::AddToCart => match node_target(action.target_ref.unwrap_or_default())? {
            NodeTarget::AddToCart { product_ref } => add(spec, state, &product_ref),
            _ => Err(format!("element {} is not an add-to-cart button", action.target_ref.unwrap_or_default())),
        },
        ActionKind::Navigate => goto(spec, state, action.args.as_deref().unwrap_or_default().trim()),
        ActionKind::Search => {
            if !spec.search_enabled {
                return Err("this store has no search".into());
            }
            let q = action.args.as_deref().unwrap_or_default();
            if q.contains(['+', '&', '#', '?', '/']) {
                return Err(format!("unsupported character in query `{q}`"));
            }
            let page = PageState::search(q);
            let mut next = state.clone();
            next.navigate(page);
            Ok((next, vec![EmittedEvent::plain(EventKind::Search)]))
        }
        ActionKind::GoBack => {
            let mut next = state.clone();
            let prev = next.history.pop().ok_or("no page to go back to")?;
            let event = arrival_event(&prev);
            next.page = prev;
            Ok((next, vec![event]))
        }
        ActionKind::Terminate => Ok((state.clone(), Vec::new())),
    }
}
