//! Clickstream ingestion and per-session feature extraction.
//!
//! Input is newline-delimited JSON, one event per line:
//!
//! ```text
//! {"session_id":"s1","buyer_id":"b1","shop_id":"shop","ts_ms":0,"kind":"page_view"}
//! {"session_id":"s1","buyer_id":"b1","shop_id":"shop","ts_ms":5000,"kind":"add_to_cart","product_ref":"p9","value":40.0}
//! ```
//!
//! Unknown keys are ignored; unknown event kinds are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClickstreamError {
    #[error("line {line_no}: malformed record: {detail}")]
    MalformedLine { line_no: usize, detail: String },
    #[error("line {line_no}: missing field `{field}`")]
    MissingField { field: String, line_no: usize },
    #[error("line {line_no}: session {session_id} mixes shops or buyers")]
    InconsistentSession { session_id: String, line_no: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PageView,
    ProductView,
    Search,
    AddToCart,
    CheckoutStart,
    Purchase,
}

impl EventKind {
    pub fn requires_product(self) -> bool {
        matches!(
            self,
            EventKind::ProductView | EventKind::AddToCart | EventKind::Purchase
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    pub buyer_id: String,
    pub shop_id: String,
    pub ts_ms: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub shop_id: String,
    pub buyer_id: String,
    pub events: Vec<Event>,
}

impl Session {
    pub fn has_a2c(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::AddToCart)
    }
}

/// The ten behavioral features of a session, in export order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionFeatures {
    pub duration_s: f64,
    pub event_count: u32,
    pub product_views: u32,
    pub distinct_products: u32,
    pub search_count: u32,
    pub a2c: u8,
    pub checkout: u8,
    pub purchase: u8,
    pub cart_value: f64,
    pub order_value: f64,
}

impl SessionFeatures {
    pub const DIM: usize = 10;
    pub const COLUMNS: [&'static str; 10] = [
        "duration_s",
        "event_count",
        "product_views",
        "distinct_products",
        "search_count",
        "a2c",
        "checkout",
        "purchase",
        "cart_value",
        "order_value",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.duration_s,
            self.event_count as f64,
            self.product_views as f64,
            self.distinct_products as f64,
            self.search_count as f64,
            self.a2c as f64,
            self.checkout as f64,
            self.purchase as f64,
            self.cart_value,
            self.order_value,
        ]
    }
}

const REQUIRED: [&str; 5] = ["session_id", "buyer_id", "shop_id", "ts_ms", "kind"];

fn parse_line(line: &str, line_no: usize) -> Result<Event, ClickstreamError> {
    let malformed = |detail: String| ClickstreamError::MalformedLine { line_no, detail };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("record is not a JSON object".into()))?;
    for field in REQUIRED {
        if obj.get(field).is_none_or(|v| v.is_null()) {
            return Err(ClickstreamError::MissingField {
                field: field.into(),
                line_no,
            });
        }
    }
    let event: Event = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if event.kind.requires_product() && event.product_ref.is_none() {
        return Err(ClickstreamError::MissingField {
            field: "product_ref".into(),
            line_no,
        });
    }
    if let Some(v) = event.value {
        if !v.is_finite() || v < 0.0 {
            return Err(malformed(format!("value must be non-negative, got {v}")));
        }
    }
    Ok(event)
}

/// Reads newline-delimited event records and groups them into sessions.
///
/// Sessions come back ordered by `(shop_id, session_id)`; events within a
/// session are stably sorted by timestamp. The first bad line aborts the parse.
pub fn parse_clickstream<R: BufRead>(reader: R) -> Result<Vec<Session>, ClickstreamError> {
    let mut grouped: BTreeMap<(String, String), Session> = BTreeMap::new();
    let mut shop_of: BTreeMap<String, (String, String)> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ClickstreamError::MalformedLine {
            line_no,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_line(&line, line_no)?;
        match shop_of.get(&event.session_id) {
            Some((shop, buyer)) if *shop != event.shop_id || *buyer != event.buyer_id => {
                return Err(ClickstreamError::InconsistentSession {
                    session_id: event.session_id,
                    line_no,
                });
            }
            Some(_) => {}
            None => {
                shop_of.insert(
                    event.session_id.clone(),
                    (event.shop_id.clone(), event.buyer_id.clone()),
                );
            }
        }
        grouped
            .entry((event.shop_id.clone(), event.session_id.clone()))
            .or_insert_with(|| Session {
                id: event.session_id.clone(),
                shop_id: event.shop_id.clone(),
                buyer_id: event.buyer_id.clone(),
                events: Vec::new(),
            })
            .events
            .push(event);
    }
    Ok(grouped
        .into_values()
        .map(|mut s| {
            s.events.sort_by_key(|e| e.ts_ms);
            s
        })
        .collect())
}

pub fn parse_clickstream_str(text: &str) -> Result<Vec<Session>, ClickstreamError> {
    parse_clickstream(text.as_bytes())
}

/// Writes sessions back out as newline-delimited records.
pub fn write_clickstream<W: Write>(mut out: W, sessions: &[Session]) -> std::io::Result<()> {
    for s in sessions {
        for e in &s.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn featurize(session: &Session) -> SessionFeatures {
    let first = session.events.first().map_or(0, |e| e.ts_ms);
    let last = session.events.last().map_or(0, |e| e.ts_ms);
    let mut product_views = 0u32;
    let mut distinct = BTreeSet::new();
    let mut search_count = 0u32;
    let (mut a2c, mut checkout, mut purchase) = (0u8, 0u8, 0u8);
    let (mut cart_value, mut order_value) = (0f64, 0f64);
    for e in &session.events {
        match e.kind {
            EventKind::ProductView => {
                product_views += 1;
                if let Some(r) = &e.product_ref {
                    distinct.insert(r.as_str());
                }
            }
            EventKind::Search => search_count += 1,
            EventKind::AddToCart => {
                a2c = 1;
                cart_value = cart_value.max(e.value.unwrap_or(0.0));
            }
            EventKind::CheckoutStart => checkout = 1,
            EventKind::Purchase => {
                purchase = 1;
                order_value = order_value.max(e.value.unwrap_or(0.0));
            }
            EventKind::PageView => {}
        }
    }
    SessionFeatures {
        duration_s: last.saturating_sub(first) as f64 / 1000.0,
        event_count: session.events.len() as u32,
        product_views,
        distinct_products: distinct.len() as u32,
        search_count,
        a2c,
        checkout,
        purchase,
        cart_value,
        order_value,
    }
}

/// Share of sessions with at least one add-to-cart event.
pub fn a2c_rate(sessions: &[Session]) -> Result<f64, ClickstreamError> {
    if sessions.is_empty() {
        return Err(ClickstreamError::EmptyInput);
    }
    let hits = sessions.iter().filter(|s| s.has_a2c()).count();
    Ok(hits as f64 / sessions.len() as f64)
}

/// Feature export: `session_id` followed by the ten feature columns.
pub fn write_features_csv<W: Write>(
    out: W,
    rows: &[(String, SessionFeatures)],
) -> Result<(), ClickstreamError> {
    let io = |e: csv::Error| ClickstreamError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["session_id"];
    header.extend(SessionFeatures::COLUMNS);
    w.write_record(&header).map_err(io)?;
    for (id, f) in rows {
        let mut record = vec![id.clone()];
        record.extend(f.to_vec().iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| ClickstreamError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(session: &str, ts: u64, kind: &str, product: Option<&str>, value: Option<f64>) -> String {
        let mut v = serde_json::json!({
            "session_id": session, "buyer_id": "b1", "shop_id": "shop", "ts_ms": ts, "kind": kind
        });
        if let Some(p) = product {
            v["product_ref"] = p.into();
        }
        if let Some(x) = value {
            v["value"] = x.into();
        }
        v.to_string()
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_clickstream_str("").unwrap().is_empty());
    }

    #[test]
    fn groups_and_orders_one_session() {
        let text = [
            line("s1", 3000, "add_to_cart", Some("p1"), Some(40.0)),
            line("s1", 0, "page_view", None, None),
            line("s1", 1000, "product_view", Some("p1"), None),
        ]
        .join("\n");
        let sessions = parse_clickstream_str(&text).unwrap();
        assert_eq!(sessions.len(), 1);
        let kinds: Vec<_> = sessions[0].events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EventKind::PageView, EventKind::ProductView, EventKind::AddToCart]
        );
    }

    #[test]
    fn missing_kind_reports_line() {
        let text = format!(
            "{}\n{}",
            line("s1", 0, "page_view", None, None),
            r#"{"session_id":"s1","buyer_id":"b1","shop_id":"shop","ts_ms":5}"#
        );
        assert_eq!(
            parse_clickstream_str(&text).unwrap_err(),
            ClickstreamError::MissingField {
                field: "kind".into(),
                line_no: 2
            }
        );
    }

    #[test]
    fn unknown_kind_and_garbage_are_malformed() {
        let bad_kind = line("s1", 0, "wishlist", None, None);
        assert!(matches!(
            parse_clickstream_str(&bad_kind),
            Err(ClickstreamError::MalformedLine { line_no: 1, .. })
        ));
        assert!(matches!(
            parse_clickstream_str("not json"),
            Err(ClickstreamError::MalformedLine { line_no: 1, .. })
        ));
    }

    #[test]
    fn product_events_need_product_ref() {
        let text = line("s1", 0, "add_to_cart", None, Some(3.0));
        assert_eq!(
            parse_clickstream_str(&text).unwrap_err(),
            ClickstreamError::MissingField {
                field: "product_ref".into(),
                line_no: 1
            }
        );
    }

    #[test]
    fn negative_value_and_mixed_shops_rejected() {
        let neg = line("s1", 0, "add_to_cart", Some("p"), Some(-1.0));
        assert!(matches!(
            parse_clickstream_str(&neg),
            Err(ClickstreamError::MalformedLine { .. })
        ));
        let mixed = format!(
            "{}\n{}",
            line("s1", 0, "page_view", None, None),
            r#"{"session_id":"s1","buyer_id":"b1","shop_id":"other","ts_ms":5,"kind":"page_view"}"#
        );
        assert!(matches!(
            parse_clickstream_str(&mixed),
            Err(ClickstreamError::InconsistentSession { line_no: 2, .. })
        ));
    }

    #[test]
    fn unknown_keys_ignored() {
        let text = r#"{"session_id":"s","buyer_id":"b","shop_id":"x","ts_ms":1,"kind":"search","referrer":"ad"}"#;
        assert_eq!(parse_clickstream_str(text).unwrap()[0].events.len(), 1);
    }

    #[test]
    fn featurize_minimal_session() {
        let s = &parse_clickstream_str(&line("s1", 0, "page_view", None, None)).unwrap()[0];
        let f = featurize(s);
        assert_eq!(f.duration_s, 0.0);
        assert_eq!(f.event_count, 1);
        assert_eq!(f.to_vec()[2..], [0.0; 8]);
    }

    #[test]
    fn featurize_hand_computed_fixture() {
        let text = [
            line("s1", 0, "product_view", Some("p1"), None),
            line("s1", 30_000, "search", None, None),
            line("s1", 60_000, "product_view", Some("p1"), None),
            line("s1", 120_000, "add_to_cart", Some("p1"), Some(40.0)),
        ]
        .join("\n");
        let f = featurize(&parse_clickstream_str(&text).unwrap()[0]);
        assert_eq!(
            f.to_vec(),
            vec![120.0, 4.0, 2.0, 1.0, 1.0, 1.0, 0.0, 0.0, 40.0, 0.0]
        );
    }

    #[test]
    fn featurize_purchase_value() {
        let text = [
            line("s1", 0, "product_view", Some("p1"), None),
            line("s1", 10_000, "purchase", Some("p1"), Some(55.0)),
        ]
        .join("\n");
        let f = featurize(&parse_clickstream_str(&text).unwrap()[0]);
        assert_eq!(f.purchase, 1);
        assert_eq!(f.order_value, 55.0);
        assert_eq!(f.a2c, 0);
    }

    #[test]
    fn a2c_rate_cases() {
        assert_eq!(a2c_rate(&[]), Err(ClickstreamError::EmptyInput));
        let mut lines = Vec::new();
        for i in 0..4 {
            let id = format!("s{i}");
            lines.push(line(&id, 0, "page_view", None, None));
            if i % 2 == 0 {
                lines.push(line(&id, 5, "add_to_cart", Some("p"), Some(1.0)));
            }
        }
        let sessions = parse_clickstream_str(&lines.join("\n")).unwrap();
        assert_eq!(a2c_rate(&sessions).unwrap(), 0.5);
    }

    #[test]
    fn features_csv_has_header_and_rows() {
        let f = featurize(&parse_clickstream_str(&line("s1", 0, "page_view", None, None)).unwrap()[0]);
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &[("s1".into(), f)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "session_id,duration_s,event_count,product_views,distinct_products,search_count,a2c,checkout,purchase,cart_value,order_value"
        );
        assert_eq!(lines.next().unwrap(), "s1,0,1,0,0,0,0,0,0,0,0");
    }

    fn arb_event() -> impl proptest::strategy::Strategy<Value = (u64, EventKind, Option<u8>, Option<u32>)> {
        use proptest::prelude::*;
        (
            0u64..1_000_000,
            prop_oneof![
                Just(EventKind::PageView),
                Just(EventKind::ProductView),
                Just(EventKind::Search),
                Just(EventKind::AddToCart),
                Just(EventKind::CheckoutStart),
                Just(EventKind::Purchase),
            ],
            proptest::option::of(0u8..20),
            proptest::option::of(0u32..100_000),
        )
    }

    proptest::proptest! {
        #[test]
        fn write_then_parse_is_identity(raw in proptest::collection::vec((0usize..4, arb_event()), 1..40)) {
            let events: Vec<Event> = raw
                .iter()
                .map(|(s, (ts, kind, p, v))| Event {
                    session_id: format!("s{s}"),
                    buyer_id: format!("b{s}"),
                    shop_id: "shop".into(),
                    ts_ms: *ts,
                    kind: *kind,
                    product_ref: if kind.requires_product() { Some(format!("p{}", p.unwrap_or(0))) } else { p.map(|x| format!("p{x}")) },
                    value: v.map(|x| x as f64 / 100.0),
                })
                .collect();
            let text: String = events.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
            let sessions = parse_clickstream_str(&text).unwrap();
            let mut buf = Vec::new();
            write_clickstream(&mut buf, &sessions).unwrap();
            let again = parse_clickstream(&buf[..]).unwrap();
            proptest::prop_assert_eq!(&again, &sessions);
            proptest::prop_assert_eq!(sessions.iter().map(|s| s.events.len()).sum::<usize>(), events.len());
            for s in &sessions {
                proptest::prop_assert!(s.events.windows(2).all(|w| w[0].ts_ms <= w[1].ts_ms));
            }
        }
    }
}
