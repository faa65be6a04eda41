//! Seeded datasets with known answers.
//!
//! * [`oracle_dataset`]: shops whose treatment variant is built to raise or
//!   lower the heuristic shopper's add-to-cart propensity, with human-like
//!   clickstreams for persona building and ground truth carrying the
//!   designed sign.
//! * [`cohort_population`]: a session mix with fixed cohort shares and A2C rates.
//! * [`adversarial_store`]: a store whose only link points back to itself.
//! * [`alignment_fixture`]: shop pairs with a chosen per-trial agreement pattern.
//! * [`gaussian_blobs`]: separated clusters in feature space with their labels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::catalog::{Product, ShopCatalog};
use crate::clickstream::{Event, EventKind, Session, SessionFeatures};
use crate::clustering::FeatureMatrix;
use crate::evaluation::{MagnitudeStratum, ShopGroundTruth, ShopPair};
use crate::persona::KeywordSets;
use crate::seeding::{derive_seed, rng};
use crate::storefront::{Collection, StoreSpec, StoreSpecFile, VariantBlock, VariantParams};

/// (category, noun used in product names)
const CATEGORIES: [(&str, &str); 16] = [
    ("chairs", "Chair"),
    ("desks", "Desk"),
    ("lamps", "Lamp"),
    ("rugs", "Rug"),
    ("mugs", "Mug"),
    ("teapots", "Teapot"),
    ("sneakers", "Sneaker"),
    ("jackets", "Jacket"),
    ("backpacks", "Backpack"),
    ("candles", "Candle"),
    ("soaps", "Soap"),
    ("planters", "Planter"),
    ("dragons", "Dragon"),
    ("puzzles", "Puzzle"),
    ("journals", "Journal"),
    ("blankets", "Blanket"),
];

const ADJECTIVES: [&str; 12] = [
    "Oak", "Linen", "Cobalt", "Harbor", "Summit", "Ember", "Willow", "Granite", "Meadow", "Atlas",
    "Juniper", "Nova",
];

const INDUSTRIES: [&str; 4] = ["home goods", "apparel", "gifts", "outdoor"];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleShop {
    pub catalog: ShopCatalog,
    pub sessions: Vec<Session>,
    pub store: StoreSpecFile,
    pub truth: ShopGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub shops: usize,
    pub sessions_per_shop: usize,
    pub categories_per_shop: usize,
    pub products_per_category: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            shops: 20,
            sessions_per_shop: 400,
            categories_per_shop: 3,
            products_per_category: 6,
        }
    }
}

fn pick_keywords(r: &mut ChaCha8Rng, sets: &KeywordSets) -> Vec<String> {
    let mut out = Vec::new();
    for set in [&sets.premium, &sets.performance, &sets.ethics] {
        if r.random_bool(0.35) {
            out.push(set[r.random_range(0..set.len())].clone());
        }
    }
    out
}

fn oracle_catalog(shop_id: &str, r: &mut ChaCha8Rng, cfg: &OracleConfig) -> ShopCatalog {
    let sets = KeywordSets::default();
    let mut cats: Vec<(&str, &str)> = CATEGORIES.to_vec();
    cats.shuffle(r);
    let mut products = Vec::new();
    for (ci, (category, noun)) in cats.iter().take(cfg.categories_per_shop).enumerate() {
        let base = r.random_range(20.0..120.0_f64);
        for pi in 0..cfg.products_per_category {
            let adj = ADJECTIVES[(ci * 5 + pi) % ADJECTIVES.len()];
            let price = (base * r.random_range(0.5..1.8_f64) * 100.0).round() / 100.0;
            products.push(Product {
                product_ref: format!("{shop_id}-{category}-{pi}"),
                name: format!("{adj} {noun} {}", pi + 1),
                price,
                category: category.to_string(),
                keywords: pick_keywords(r, &sets),
                quality_score: (r.random_range(0.35..0.95_f64) * 100.0).round() / 100.0,
            });
        }
    }
    ShopCatalog {
        shop_id: shop_id.to_string(),
        name: format!("Shop {shop_id}"),
        industry: INDUSTRIES[r.random_range(0..INDUSTRIES.len())].to_string(),
        products,
    }
}

struct SessionBuilder<'a> {
    id: String,
    buyer: String,
    shop: &'a str,
    ts: u64,
    events: Vec<Event>,
}

impl<'a> SessionBuilder<'a> {
    fn new(id: String, buyer: String, shop: &'a str) -> Self {
        Self {
            id,
            buyer,
            shop,
            ts: 0,
            events: Vec::new(),
        }
    }

    fn push(&mut self, r: &mut ChaCha8Rng, kind: EventKind, product_ref: Option<&str>, value: Option<f64>, gap_s: (u64, u64)) {
        if !self.events.is_empty() {
            self.ts += r.random_range(gap_s.0..=gap_s.1) * 1000;
        }
        self.events.push(Event {
            session_id: self.id.clone(),
            buyer_id: self.buyer.clone(),
            shop_id: self.shop.to_string(),
            ts_ms: self.ts,
            kind,
            product_ref: product_ref.map(String::from),
            value,
        });
    }

    fn finish(self) -> Session {
        Session {
            id: self.id,
            shop_id: self.shop.to_string(),
            buyer_id: self.buyer,
            events: self.events,
        }
    }
}

/// Human-like sessions: bouncers, skimmers, browsers, buyers and researchers,
/// each buyer loyal to one category and a price habit.
fn human_sessions(catalog: &ShopCatalog, n: usize, r: &mut ChaCha8Rng) -> Vec<Session> {
    let shop = catalog.shop_id.as_str();
    let mut categories: Vec<&str> = catalog.products.iter().map(|p| p.category.as_str()).collect();
    categories.dedup();
    let buyers = (n / 3).max(1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let b = r.random_range(0..buyers);
        let buyer = format!("{shop}-b{b:04}");
        let category = categories[b % categories.len()];
        // price habit: 0 cheapest, 1 middle, 2 dearest
        let habit = b % 3;
        let mut in_cat: Vec<&Product> = catalog.products.iter().filter(|p| p.category == category).collect();
        in_cat.sort_by(|a, b| a.price.total_cmp(&b.price));
        let mut s = SessionBuilder::new(format!("{shop}-s{i:05}"), buyer, shop);
        s.push(r, EventKind::PageView, None, None, (0, 0));
        let kind: f64 = r.random();
        let views = |r: &mut ChaCha8Rng, k: usize| -> Vec<&Product> {
            (0..k).map(|_| in_cat[r.random_range(0..in_cat.len())]).collect()
        };
        let buy_pick = |seen: &[&Product]| -> Product {
            let mut v: Vec<&Product> = seen.to_vec();
            v.sort_by(|a, b| a.price.total_cmp(&b.price));
            let idx = match habit {
                0 => 0,
                1 => v.len() / 2,
                _ => v.len() - 1,
            };
            v[idx].clone()
        };
        if kind < 0.40 {
            // bounce
        } else if kind < 0.70 {
            let k = r.random_range(1..=3);
            let seen = views(r, k);
            for p in &seen {
                s.push(r, EventKind::ProductView, Some(&p.product_ref), None, (5, 30));
            }
            if r.random_bool(0.08) {
                let p = buy_pick(&seen);
                s.push(r, EventKind::AddToCart, Some(&p.product_ref), Some(p.price), (5, 20));
            }
        } else if kind < 0.90 {
            s.push(r, EventKind::Search, None, None, (5, 20));
            let k = r.random_range(4..=9);
            let seen = views(r, k);
            for p in &seen {
                s.push(r, EventKind::ProductView, Some(&p.product_ref), None, (20, 90));
            }
            if r.random_bool(0.3) {
                let p = buy_pick(&seen);
                s.push(r, EventKind::AddToCart, Some(&p.product_ref), Some(p.price), (10, 40));
            }
        } else if kind < 0.98 {
            let k = r.random_range(2..=5);
            let seen = views(r, k);
            for p in &seen {
                s.push(r, EventKind::ProductView, Some(&p.product_ref), None, (10, 60));
            }
            let p = buy_pick(&seen);
            s.push(r, EventKind::AddToCart, Some(&p.product_ref), Some(p.price), (10, 30));
            s.push(r, EventKind::CheckoutStart, None, Some(p.price), (10, 30));
            s.push(r, EventKind::Purchase, Some(&p.product_ref), Some(p.price), (30, 90));
        } else {
            for _ in 0..r.random_range(3..=6) {
                s.push(r, EventKind::Search, None, None, (10, 40));
            }
            let k = r.random_range(12..=20);
            let seen = views(r, k);
            for p in &seen {
                s.push(r, EventKind::ProductView, Some(&p.product_ref), None, (30, 150));
            }
            if r.random_bool(0.3) {
                let p = buy_pick(&seen);
                s.push(r, EventKind::AddToCart, Some(&p.product_ref), Some(p.price), (10, 30));
            }
        }
        out.push(s.finish());
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Paired shops with designed effects. Even-indexed shops get a treatment
/// with stronger trust cues and better imagery; odd-indexed shops get the
/// reverse. Effect size grows with `magnitude` in 1..=3.
pub fn oracle_dataset(seed: u64, cfg: &OracleConfig) -> Vec<OracleShop> {
    (0..cfg.shops)
        .map(|i| {
            let shop_id = format!("shop{i:02}");
            let mut r = rng(derive_seed(seed, &["oracle", &shop_id]));
            let catalog = oracle_catalog(&shop_id, &mut r, cfg);
            let sessions = human_sessions(&catalog, cfg.sessions_per_shop, &mut r);
            let up = i % 2 == 0;
            let magnitude = 1 + (i / 2) % 3;
            let low_trust = 0.25 * r.random_range(0..=1) as f64;
            let high_trust = low_trust + 0.25 * magnitude as f64;
            let (low_image, high_image) = match magnitude {
                1 => (0.5, 0.5),
                2 => (0.5, 0.85),
                _ => (0.2, 0.85),
            };
            let mut featured: Vec<String> = catalog.products.iter().map(|p| p.product_ref.clone()).collect();
            featured.shuffle(&mut r);
            featured.truncate(8);
            let density = r.random_range(0.4..1.0_f64);
            let nav_depth = r.random_range(1..=2);
            let params = |trust: f64, image: f64| VariantParams {
                featured_products: featured.clone(),
                layout_density: (density * 100.0).round() / 100.0,
                trust_cue_level: trust,
                image_quality: image,
                nav_depth,
            };
            let weak = params(low_trust, low_image);
            let strong = params(high_trust, high_image);
            let (control, treatment) = if up { (weak, strong) } else { (strong, weak) };
            let mut categories: Vec<String> = catalog.products.iter().map(|p| p.category.clone()).collect();
            categories.dedup();
            let store = StoreSpecFile {
                shop_id: shop_id.clone(),
                name: catalog.name.clone(),
                products: catalog.products.clone(),
                collections: categories
                    .iter()
                    .map(|c| Collection {
                        name: c.clone(),
                        product_refs: catalog
                            .products
                            .iter()
                            .filter(|p| &p.category == c)
                            .map(|p| p.product_ref.clone())
                            .collect(),
                    })
                    .collect(),
                search_enabled: true,
                control: VariantBlock {
                    params: control,
                    products: None,
                    collections: None,
                },
                treatment: VariantBlock {
                    params: treatment,
                    products: None,
                    collections: None,
                },
            };
            let direction = if up { 1.0 } else { -1.0 };
            let truth = ShopGroundTruth {
                shop_id: shop_id.clone(),
                human_delta_a2c: direction * 0.006 * magnitude as f64,
                change_summary: format!(
                    "trust cues {low_trust:.2}->{high_trust:.2}, image quality {low_image:.2}->{high_image:.2} ({})",
                    if up { "treatment stronger" } else { "treatment weaker" }
                ),
                magnitude_stratum: match magnitude {
                    1 => MagnitudeStratum::Minor,
                    2 => MagnitudeStratum::Moderate,
                    _ => MagnitudeStratum::Major,
                },
            };
            OracleShop {
                catalog,
                sessions,
                store,
                truth,
            }
        })
        .collect()
}

/// Cohort shares of the fixture population, in cohort order.
pub const COHORT_SHARES: [f64; 5] = [0.591, 0.264, 0.112, 0.024, 0.009];
/// Add-to-cart rate per cohort.
pub const COHORT_A2C_RATES: [f64; 5] = [0.0, 0.095, 0.323, 0.901, 0.278];
pub const COHORT_NAMES: [&str; 5] = ["bouncers", "skimmers", "browsers", "buyers", "researchers"];

/// Largest-remainder rounding of `shares * n`.
fn counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = n - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Sessions for one shop built to the cohort shares and A2C rates, with the
/// cohort index of each session. Counts are exact up to rounding.
pub fn cohort_population(shop_id: &str, n: usize, seed: u64) -> Vec<(Session, usize)> {
    let mut r = rng(derive_seed(seed, &["cohorts", shop_id]));
    let sizes = counts(n, &COHORT_SHARES);
    let mut out = Vec::with_capacity(n);
    let mut idx = 0;
    for (cohort, &size) in sizes.iter().enumerate() {
        let a2c_n = (COHORT_A2C_RATES[cohort] * size as f64).round() as usize;
        let mut flags: Vec<bool> = (0..size).map(|i| i < a2c_n).collect();
        flags.shuffle(&mut r);
        for a2c in flags {
            out.push((cohort_session(shop_id, idx, cohort, a2c, &mut r), cohort));
            idx += 1;
        }
    }
    out
}

struct CohortShape {
    searches: (u32, u32),
    views: (u32, u32),
    distinct: (u32, u32),
    gap_s: (u64, u64),
    cart: (f64, f64),
}

const COHORT_SHAPES: [CohortShape; 4] = [
    // skimmers: one or two long looks
    CohortShape { searches: (0, 0), views: (1, 2), distinct: (1, 2), gap_s: (40, 80), cart: (2.0, 6.0) },
    // browsers: search, then flip quickly through a few products
    CohortShape { searches: (1, 2), views: (6, 9), distinct: (2, 3), gap_s: (5, 12), cart: (2.0, 6.0) },
    // buyers: short path to a large order
    CohortShape { searches: (0, 0), views: (3, 5), distinct: (1, 2), gap_s: (15, 30), cart: (150.0, 300.0) },
    // researchers
    CohortShape { searches: (3, 4), views: (12, 15), distinct: (8, 11), gap_s: (10, 20), cart: (2.0, 6.0) },
];

fn cohort_session(shop: &str, idx: usize, cohort: usize, a2c: bool, r: &mut ChaCha8Rng) -> Session {
    let mut s = SessionBuilder::new(format!("{shop}-h{idx:06}"), format!("{shop}-u{:05}", idx / 2), shop);
    s.push(r, EventKind::PageView, None, None, (0, 0));
    if cohort == 0 {
        return s.finish();
    }
    let shape = &COHORT_SHAPES[cohort - 1];
    let views = r.random_range(shape.views.0..=shape.views.1);
    let distinct = r.random_range(shape.distinct.0..=shape.distinct.1).min(views);
    let first = r.random_range(0..40);
    let refs: Vec<String> = (0..distinct).map(|i| format!("p{}", first + i)).collect();
    for _ in 0..r.random_range(shape.searches.0..=shape.searches.1) {
        s.push(r, EventKind::Search, None, None, shape.gap_s);
    }
    for i in 0..views {
        s.push(r, EventKind::ProductView, Some(&refs[(i % distinct) as usize]), None, shape.gap_s);
    }
    if a2c {
        let p = &refs[0];
        let value = (r.random_range(shape.cart.0..shape.cart.1) * 100.0).round() / 100.0;
        s.push(r, EventKind::AddToCart, Some(p), Some(value), shape.gap_s);
        if cohort == 3 {
            s.push(r, EventKind::CheckoutStart, None, Some(value), shape.gap_s);
            s.push(r, EventKind::Purchase, Some(p), Some(value), shape.gap_s);
        }
    }
    s.finish()
}

/// A store with one unrelated product, no collections, no search and no
/// featured slots: the header's home link is the only link on the page.
pub fn adversarial_store() -> StoreSpec {
    StoreSpec {
        shop_id: "mirror".into(),
        name: "Hall of Mirrors".into(),
        products: vec![Product {
            product_ref: "glass".into(),
            name: "Looking Glass".into(),
            price: 10.0,
            category: "mirrors".into(),
            keywords: vec![],
            quality_score: 0.5,
        }],
        collections: vec![],
        search_enabled: false,
        variant_params: VariantParams {
            featured_products: vec![],
            layout_density: 0.0,
            trust_cue_level: 0.0,
            image_quality: 0.0,
            nav_depth: 0,
        },
    }
}

/// `n` shops with positive human shifts: `full` agree in every trial,
/// `half` in one of two trials, the rest in none.
pub fn alignment_fixture(n: usize, full: usize, half: usize) -> Vec<ShopPair> {
    (0..n)
        .map(|i| {
            let trials = if i < full {
                vec![0.02, 0.03]
            } else if i < full + half {
                vec![0.02, -0.01]
            } else {
                vec![-0.02, -0.01]
            };
            ShopPair {
                shop_id: format!("shop{i:02}"),
                human_delta: 0.01 + 0.001 * i as f64,
                agent_trial_deltas: trials,
            }
        })
        .collect()
}

/// `k` isotropic Gaussian blobs of `per_blob` rows each in the session
/// feature space. Centers sit on distinct axes, `spread` apart, with unit
/// standard deviation. Rows are interleaved so labels are not sorted.
pub fn gaussian_blobs(k: usize, per_blob: usize, spread: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let dim = SessionFeatures::DIM;
    let mut r = rng(derive_seed(seed, &["blobs"]));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(k * per_blob);
    let mut labels = Vec::with_capacity(k * per_blob);
    for i in 0..per_blob {
        for c in 0..k {
            let mut center = vec![0.0; dim];
            center[c % dim] = spread * (1 + c / dim) as f64;
            let row: Vec<f64> = center.iter().map(|m| m + noise.sample(&mut r)).collect();
            rows.push((format!("b{c}-{i:03}"), row));
            labels.push(c);
        }
    }
    (FeatureMatrix::from_rows(dim, rows).expect("rows match dim"), labels)
}
