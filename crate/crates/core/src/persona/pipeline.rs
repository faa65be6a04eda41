use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_buyers, compose_prompt, construct_archetype, extract_preferences, generate_intent,
    summarize_cluster, ArchetypeInputs, ExplorationNorms, KeywordSets, Persona, PersonaError,
    PreferenceBackend, ShopMeta, ValuesWeights,
};
use crate::catalog::{Catalog, ShopCatalog};
use crate::clickstream::{featurize, Session, SessionFeatures};
use crate::clustering::{
    fit, nearest_sessions, select_k, Assignment, ClusterModel, FeatureMatrix, KMeansConfig,
    SelectKConfig,
};
use crate::remote::TextBackend;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KChoice {
    Fixed(usize),
    Range { lo: usize, hi: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: KChoice,
    pub seed: u64,
    /// Sessions nearest each centroid used for buyer aggregation.
    pub representatives: usize,
    pub personas_per_cluster: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub select: SelectKConfig,
    pub weights: ValuesWeights,
    pub keywords: KeywordSets,
    pub max_retries: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: KChoice::Fixed(5),
            seed: 0,
            representatives: 50,
            personas_per_cluster: 10,
            max_iter: 300,
            tol: 1e-6,
            select: SelectKConfig::default(),
            weights: ValuesWeights::default(),
            keywords: KeywordSets::default(),
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub stage: String,
    pub cluster_id: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopPersonas {
    pub shop_id: String,
    pub model: ClusterModel,
    pub assignments: Vec<Assignment>,
    pub personas: Vec<Persona>,
    pub audit: Vec<AuditEntry>,
}

/// persona ids per shop and cluster
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaManifest {
    pub shops: BTreeMap<String, BTreeMap<usize, Vec<String>>>,
}

impl PersonaManifest {
    pub fn add(&mut self, personas: &[Persona]) {
        for p in personas {
            self.shops
                .entry(p.shop_id.clone())
                .or_default()
                .entry(p.cluster_id)
                .or_default()
                .push(p.persona_id.clone());
        }
    }
}

/// Splits `total` across `(cluster_id, mass)` entries in proportion to
/// mass using largest remainders; ties go to the lower cluster id.
pub fn allocate(total: usize, masses: &[(usize, usize)]) -> Vec<(usize, usize)> {
    if masses.is_empty() {
        return Vec::new();
    }
    let mass_sum: usize = masses.iter().map(|m| m.1).sum();
    let weight = |m: usize| if mass_sum == 0 { 1.0 } else { m as f64 };
    let denom: f64 = masses.iter().map(|m| weight(m.1)).sum();
    let mut out: Vec<(usize, usize, f64)> = masses
        .iter()
        .map(|&(c, m)| {
            let exact = total as f64 * weight(m) / denom;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = out.iter().map(|o| o.1).sum();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.total_cmp(&out[a].2).then_with(|| out[a].0.cmp(&out[b].0)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i].1 += 1;
    }
    out.into_iter().map(|(c, n, _)| (c, n)).collect()
}

fn audit(log: &mut Vec<AuditEntry>, stage: &str, cluster_id: Option<usize>, detail: String) {
    log::debug!("{stage} {cluster_id:?}: {detail}");
    log.push(AuditEntry {
        stage: stage.into(),
        cluster_id,
        detail,
    });
}

/// Clusters one shop's sessions and builds personas for every cluster that
/// has product interactions.
pub fn build_shop_personas(
    shop: &ShopCatalog,
    sessions: &[Session],
    cfg: &PipelineConfig,
    backend: Option<&dyn TextBackend>,
) -> Result<ShopPersonas, PersonaError> {
    if sessions.is_empty() {
        return Err(PersonaError::NoSessions(shop.shop_id.clone()));
    }
    let catalog = Catalog::from(shop);
    let mut log = Vec::new();
    let features: Vec<SessionFeatures> = sessions.iter().map(featurize).collect();
    let matrix = FeatureMatrix::from_rows(
        SessionFeatures::DIM,
        sessions.iter().zip(&features).map(|(s, f)| (s.id.clone(), f.to_vec())),
    )?;
    let n = sessions.len();
    let cluster_seed = derive_seed(cfg.seed, &[&shop.shop_id, "cluster"]);
    let k = match cfg.k {
        KChoice::Fixed(k) => k.min(n),
        KChoice::Range { lo, hi } => {
            let sel = select_k(
                &crate::clustering::zscore(&matrix).matrix,
                lo.min(n)..=hi.min(n),
                cluster_seed,
                &cfg.select,
            )?;
            audit(&mut log, "select_k", None, format!("inertia {:?} -> k={}", sel.inertia, sel.chosen_k));
            sel.chosen_k
        }
    };
    let (model, assignments) = fit(
        &matrix,
        &KMeansConfig {
            k,
            seed: cluster_seed,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        },
    )?;
    audit(
        &mut log,
        "cluster",
        None,
        format!("k={k} inertia={:.6} iterations={}", model.inertia, model.iterations),
    );

    let by_id: BTreeMap<&str, &Session> = sessions.iter().map(|s| (s.id.as_str(), s)).collect();
    let norms = ExplorationNorms::from_features(&features);
    let medians = catalog.category_medians();
    let names = catalog.product_names();
    let meta = ShopMeta {
        name: shop.name.clone(),
        industry: shop.industry.clone(),
    };
    let inputs = ArchetypeInputs {
        norms,
        medians: &medians,
        keywords: &cfg.keywords,
        weights: cfg.weights,
    };
    let pref_backend = match backend {
        Some(b) => PreferenceBackend::Remote {
            backend: b,
            max_retries: cfg.max_retries,
        },
        None => PreferenceBackend::Deterministic,
    };

    let mut personas = Vec::new();
    for c in 0..k {
        let members: Vec<&Session> = assignments
            .iter()
            .filter(|a| a.cluster_id == c)
            .map(|a| by_id[a.session_id.as_str()])
            .collect();
        let summary = summarize_cluster(c, &members, &catalog)?;
        let prefs = match extract_preferences(&meta, &summary, &names, &pref_backend) {
            Ok(p) => p,
            Err(PersonaError::EmptySummary) => {
                audit(&mut log, "preferences", Some(c), format!("{} sessions, no product interactions; skipped", members.len()));
                continue;
            }
            Err(e) => return Err(e),
        };
        audit(&mut log, "preferences", Some(c), format!("categories {:?}", prefs.categories));

        let reps: Vec<&Session> = nearest_sessions(&assignments, k, c, cfg.representatives)?
            .iter()
            .map(|id| by_id[id.as_str()])
            .collect();
        let aggregates = aggregate_buyers(c, &reps, &catalog)?;
        let mut archetypes = Vec::new();
        for agg in &aggregates {
            match construct_archetype(agg, &inputs, backend) {
                Ok(a) => archetypes.push(a),
                Err(PersonaError::NoBrowsedProducts) => {}
                Err(e) => return Err(e),
            }
        }
        audit(
            &mut log,
            "archetypes",
            Some(c),
            format!("{} representatives, {} buyers, {} archetypes", reps.len(), aggregates.len(), archetypes.len()),
        );
        if archetypes.is_empty() {
            continue;
        }
        for j in 0..cfg.personas_per_cluster {
            let seed = derive_seed(cfg.seed, &[&shop.shop_id, &c.to_string(), &j.to_string()]);
            let intent = match generate_intent(&prefs, seed) {
                Ok(i) => i,
                Err(PersonaError::NoCategories) => break,
                Err(e) => return Err(e),
            };
            let archetype = archetypes[j % archetypes.len()].clone();
            personas.push(compose_prompt(
                format!("{}-c{c}-{j:04}", shop.shop_id),
                &shop.shop_id,
                members.len(),
                intent,
                archetype,
                prefs.clone(),
            )?);
        }
    }
    audit(&mut log, "compose", None, format!("{} personas", personas.len()));
    Ok(ShopPersonas {
        shop_id: shop.shop_id.clone(),
        model,
        assignments,
        personas,
        audit: log,
    })
}
