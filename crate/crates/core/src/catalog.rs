//! Product catalogs shared by the persona pipeline and the storefront.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

fn default_quality() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub product_ref: String,
    pub name: String,
    pub price: f64,
    pub category: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "default_quality")]
    pub quality_score: f64,
}

/// One shop's metadata plus its products, as stored in catalog files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopCatalog {
    pub shop_id: String,
    pub name: String,
    #[serde(default)]
    pub industry: String,
    pub products: Vec<Product>,
}

/// Catalog file layout: `{"shops": [ShopCatalog, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub shops: Vec<ShopCatalog>,
}

/// Products indexed by reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    products: BTreeMap<String, Product>,
}

impl Catalog {
    pub fn new(products: impl IntoIterator<Item = Product>) -> Self {
        Self {
            products: products
                .into_iter()
                .map(|p| (p.product_ref.clone(), p))
                .collect(),
        }
    }

    pub fn get(&self, product_ref: &str) -> Option<&Product> {
        self.products.get(product_ref)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Product> {
        self.products.values()
    }

    /// Lower-cased product names, used to keep shop-specific names out of
    /// generic category lists.
    pub fn product_names(&self) -> BTreeSet<String> {
        self.products
            .values()
            .map(|p| p.name.trim().to_lowercase())
            .collect()
    }

    /// Median price per category.
    pub fn category_medians(&self) -> CategoryMedians {
        let mut by_category: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in self.products.values() {
            by_category.entry(p.category.clone()).or_default().push(p.price);
        }
        CategoryMedians(
            by_category
                .into_iter()
                .map(|(cat, prices)| (cat, median(prices)))
                .collect(),
        )
    }
}

impl From<&ShopCatalog> for Catalog {
    fn from(shop: &ShopCatalog) -> Self {
        Catalog::new(shop.products.iter().cloned())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryMedians(pub BTreeMap<String, f64>);

impl CategoryMedians {
    /// Price divided by its category median. Unknown categories and
    /// non-positive medians leave the price unnormalized.
    pub fn normalize(&self, category: &str, price: f64) -> f64 {
        match self.0.get(category) {
            Some(&m) if m > 0.0 => price / m,
            _ => price,
        }
    }
}
