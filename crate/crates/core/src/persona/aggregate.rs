use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PersonaError;
use crate::catalog::Catalog;
use crate::clickstream::{featurize, EventKind, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub product_ref: String,
    pub price: f64,
    pub category: String,
    pub keywords: Vec<String>,
}

/// Cross-session summary of one buyer inside one cluster.
///
/// `browsed` and `purchased` list distinct products in first-seen order.
/// Average cart (order) value is taken over the sessions that added to
/// cart (purchased), and is 0 when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerAggregate {
    pub buyer_id: String,
    pub cluster_id: usize,
    pub session_count: u32,
    pub a2c_count: u32,
    pub checkout_count: u32,
    pub purchase_count: u32,
    pub avg_cart_value: f64,
    pub avg_order_value: f64,
    pub total_duration_s: f64,
    pub total_searches: u32,
    pub total_product_views: u32,
    pub browsed: Vec<ProductRecord>,
    pub purchased: Vec<ProductRecord>,
}

fn record(catalog: &Catalog, product_ref: &str) -> Result<ProductRecord, PersonaError> {
    let p = catalog
        .get(product_ref)
        .ok_or_else(|| PersonaError::UnknownProductRef(product_ref.to_string()))?;
    Ok(ProductRecord {
        product_ref: p.product_ref.clone(),
        price: p.price,
        category: p.category.clone(),
        keywords: p.keywords.clone(),
    })
}

fn push_distinct(list: &mut Vec<ProductRecord>, rec: ProductRecord) {
    if !list.iter().any(|r| r.product_ref == rec.product_ref) {
        list.push(rec);
    }
}

/// One aggregate per buyer, ordered by buyer id.
pub fn aggregate_buyers(
    cluster_id: usize,
    sessions: &[&Session],
    catalog: &Catalog,
) -> Result<Vec<BuyerAggregate>, PersonaError> {
    let mut by_buyer: BTreeMap<&str, Vec<&Session>> = BTreeMap::new();
    for s in sessions {
        by_buyer.entry(s.buyer_id.as_str()).or_default().push(s);
    }
    by_buyer
        .into_iter()
        .map(|(buyer, sessions)| {
            let mut agg = BuyerAggregate {
                buyer_id: buyer.to_string(),
                cluster_id,
                session_count: sessions.len() as u32,
                a2c_count: 0,
                checkout_count: 0,
                purchase_count: 0,
                avg_cart_value: 0.0,
                avg_order_value: 0.0,
                total_duration_s: 0.0,
                total_searches: 0,
                total_product_views: 0,
                browsed: Vec::new(),
                purchased: Vec::new(),
            };
            let (mut cart_sum, mut order_sum) = (0.0, 0.0);
            for s in sessions {
                let f = featurize(s);
                agg.a2c_count += u32::from(f.a2c);
                agg.checkout_count += u32::from(f.checkout);
                agg.purchase_count += u32::from(f.purchase);
                agg.total_duration_s += f.duration_s;
                agg.total_searches += f.search_count;
                agg.total_product_views += f.product_views;
                if f.a2c == 1 {
                    cart_sum += f.cart_value;
                }
                if f.purchase == 1 {
                    order_sum += f.order_value;
                }
                for e in &s.events {
                    let Some(r) = e.product_ref.as_deref() else {
                        continue;
                    };
                    let rec = record(catalog, r)?;
                    match e.kind {
                        EventKind::ProductView => push_distinct(&mut agg.browsed, rec),
                        EventKind::Purchase => push_distinct(&mut agg.purchased, rec),
                        _ => {}
                    }
                }
            }
            if agg.a2c_count > 0 {
                agg.avg_cart_value = cart_sum / agg.a2c_count as f64;
            }
            if agg.purchase_count > 0 {
                agg.avg_order_value = order_sum / agg.purchase_count as f64;
            }
            Ok(agg)
        })
        .collect()
}
