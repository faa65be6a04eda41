//! Synthetic A/B testing for e-commerce storefronts.
//!
//! The crate is organised as a pipeline:
//!
//! * [`clickstream`] parses raw event logs into sessions and feature vectors.
//! * [`clustering`] standardizes those vectors and groups sessions with k-means.
//! * [`persona`] turns session clusters into persona prompts for simulated buyers.
//! * [`storefront`] is a deterministic stand-in for a live shop with two theme variants.
//! * [`agent`] runs observe-plan-act shopping sessions against the storefront.
//! * [`evaluation`] compares simulated add-to-cart shifts with observed ones.
//!
//! [`synthetic`] builds seeded datasets with known answers for experiments and tests.

pub mod agent;
pub mod catalog;
pub mod clickstream;
pub mod clustering;
pub mod evaluation;
pub mod persona;
pub mod remote;
pub mod seeding;
pub mod storefront;
pub mod synthetic;

pub use catalog::{Catalog, Product, ShopCatalog};
pub use clickstream::{Event, EventKind, Session, SessionFeatures};
