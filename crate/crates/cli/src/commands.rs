use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::{json, Value};

use storesim::agent::{run_cohort, DecisionPolicy, HeuristicPolicy, RemoteModelPolicy, SessionLog, Variant};
use storesim::clickstream::{featurize, write_clickstream, Session, SessionFeatures};
use storesim::clustering::{fit_restarts, ClusterModel, FeatureMatrix, KMeansConfig};
use storesim::evaluation::{budget_sensitivity, cohort_analysis, evaluate, Band};
use storesim::persona::{build_shop_personas, Persona, PersonaManifest};
use storesim::remote::{ChatClient, RemoteTextBackend, TextBackend};
use storesim::storefront::load_store_spec;
use storesim::synthetic::{cohort_population, oracle_dataset, OracleConfig};

use crate::config::{PolicyKind, RunConfig, TextBackendKind};
use crate::io;

pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn finish(&self, command: &str, inputs: &[&Path], outputs: &[&str]) -> Result<()> {
        let meta = io::meta(command, &self.config.hash(), self.config.master_seed, inputs, outputs)?;
        io::write_json(&io::meta_path(&self.out, command), &meta)?;
        info!("{command}: wrote {} to {}", outputs.join(", "), self.out.display());
        Ok(())
    }
}

fn f(x: f64) -> String {
    x.to_string()
}

pub fn personas_build(ctx: &Ctx, clickstream: &Path, catalog: &Path) -> Result<()> {
    let shops = io::read_catalog(catalog)?;
    let sessions = io::read_clickstream(clickstream)?;
    let mut by_shop: BTreeMap<&str, Vec<Session>> = BTreeMap::new();
    for s in &sessions {
        by_shop.entry(s.shop_id.as_str()).or_default().push(s.clone());
    }
    if let Some(orphan) = by_shop.keys().find(|id| !shops.iter().any(|c| c.shop_id == **id)) {
        bail!("shop `{orphan}` has sessions in {} but no entry in {}", clickstream.display(), catalog.display());
    }
    let backend: Option<Box<dyn TextBackend>> = match ctx.config.text_backend {
        TextBackendKind::Deterministic => None,
        TextBackendKind::Remote => Some(Box::new(RemoteTextBackend::new(ChatClient::from_env(ctx.config.endpoint()?)))),
    };
    let built: Vec<_> = shops
        .par_iter()
        .filter_map(|shop| {
            let Some(s) = by_shop.get(shop.shop_id.as_str()) else {
                warn!("shop `{}` has no sessions; skipped", shop.shop_id);
                return None;
            };
            Some(
                build_shop_personas(shop, s, &ctx.config.pipeline, backend.as_deref())
                    .with_context(|| format!("building personas for shop `{}`", shop.shop_id)),
            )
        })
        .collect::<Result<_>>()?;
    if built.is_empty() {
        bail!("no shop in {} has sessions in {}", catalog.display(), clickstream.display());
    }

    let mut personas = Vec::new();
    let mut manifest = PersonaManifest::default();
    let mut audit = Vec::new();
    for b in &built {
        manifest.add(&b.personas);
        personas.extend(b.personas.iter().cloned());
        io::write_atomic(&ctx.out.join("models").join(format!("{}.json", b.shop_id)), b.model.to_json().as_bytes())?;
        for a in &b.audit {
            audit.push(json!({"shop_id": b.shop_id, "stage": a.stage, "cluster_id": a.cluster_id, "detail": a.detail}));
        }
    }
    io::write_json(&ctx.out.join("personas.json"), &personas)?;
    io::write_json(&ctx.out.join("manifest.json"), &manifest)?;
    io::write_jsonl(&ctx.out.join("audit.jsonl"), &audit)?;
    println!("{} personas across {} shops", personas.len(), built.len());
    ctx.finish(
        "personas",
        &[clickstream, catalog],
        &["personas.json", "manifest.json", "audit.jsonl", "models/"],
    )
}

fn policy(cfg: &RunConfig) -> Result<Box<dyn DecisionPolicy>> {
    Ok(match cfg.policy {
        PolicyKind::Heuristic => Box::new(HeuristicPolicy::new(cfg.heuristic, cfg.pipeline.keywords.clone())),
        PolicyKind::Remote => Box::new(RemoteModelPolicy::new(
            ChatClient::from_env(cfg.endpoint()?),
            cfg.guardrails.max_model_retries,
        )),
    })
}

pub fn simulate_run(ctx: &Ctx, stores: &Path, personas: &Path, resume: bool) -> Result<()> {
    let cfg = &ctx.config;
    cfg.guardrails.validate().map_err(anyhow::Error::msg)?;
    let personas_file = io::resolve(personas, "personas.json");
    let all: Vec<Persona> = io::read_json(&personas_file)?;
    let docs = io::read_stores(stores)?;
    let meta = io::meta("simulate", &cfg.hash(), cfg.master_seed, &[stores, &personas_file], &["summary.csv", "logs/"])?;
    let meta_file = io::meta_path(&ctx.out, "simulate");
    let reuse = resume && io::read_json::<Value>(&meta_file).is_ok_and(|m| m == meta);
    if resume && !reuse {
        warn!("no matching earlier run in {}; starting fresh", ctx.out.display());
    }
    // written up front so an interrupted run can be resumed
    io::write_json(&meta_file, &meta)?;
    let policy = policy(cfg)?;
    let cohort = cfg.cohort();
    let mut logs: Vec<SessionLog> = Vec::new();
    for doc in &docs {
        let shop_file = ctx.out.join("logs").join(format!("{}.jsonl", doc.shop_id));
        if reuse && shop_file.exists() {
            info!("{}: reusing {}", doc.shop_id, shop_file.display());
            logs.extend(io::read_logs(&[shop_file])?);
            continue;
        }
        let (control, treatment) =
            load_store_spec(doc).with_context(|| format!("store `{}` in {}", doc.shop_id, stores.display()))?;
        let shop_personas: Vec<Persona> = all.iter().filter(|p| p.shop_id == doc.shop_id).cloned().collect();
        if shop_personas.is_empty() {
            bail!("no personas for shop `{}` in {}", doc.shop_id, personas_file.display());
        }
        let shop_logs = run_cohort(&shop_personas, &control, &treatment, policy.as_ref(), &cohort);
        info!("{}: {} sessions", doc.shop_id, shop_logs.len());
        io::write_jsonl(&shop_file, &shop_logs)?;
        logs.extend(shop_logs);
    }

    let mut cells: BTreeMap<(&str, u32, Variant), (usize, usize)> = BTreeMap::new();
    for l in &logs {
        let c = cells.entry((l.shop_id.as_str(), l.trial, l.variant)).or_default();
        c.0 += 1;
        c.1 += usize::from(l.a2c);
    }
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|((shop, trial, variant), (n, a2c))| {
            vec![shop.to_string(), trial.to_string(), variant.as_str().into(), n.to_string(), f(*a2c as f64 / *n as f64)]
        })
        .collect();
    io::write_csv(&ctx.out.join("summary.csv"), &["shop_id", "trial", "variant", "sessions", "a2c_rate"], &rows)?;
    println!("{} session logs", logs.len());
    info!("simulate: wrote summary.csv, logs/ to {}", ctx.out.display());
    Ok(())
}

fn as_refs(files: &[PathBuf]) -> Vec<&Path> {
    files.iter().map(PathBuf::as_path).collect()
}

pub fn eval_report(ctx: &Ctx, logs: &[PathBuf], truth: &Path) -> Result<()> {
    let files = io::log_files(logs)?;
    let sessions = io::read_logs(&files)?;
    let gt = io::read_truth(truth)?;
    let report = evaluate(&sessions, &gt, &ctx.config.eval)?;
    io::write_json(&ctx.out.join("report.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .per_shop
        .iter()
        .map(|p| {
            let trials: Vec<String> = p.per_trial_agent_delta.iter().map(|d| f(*d)).collect();
            vec![p.shop_id.clone(), f(p.human_delta), f(p.agent_delta), trials.join(";"), f(p.alignment)]
        })
        .collect();
    io::write_csv(
        &ctx.out.join("per_shop.csv"),
        &["shop_id", "human_delta", "agent_delta", "per_trial_agent_delta", "alignment"],
        &rows,
    )?;
    let r = report.pearson_r.map_or("undefined".to_string(), |r| format!("{r:.3}"));
    println!(
        "alignment {:.1}% [{:.1}, {:.1}], pearson r {r}, {} shops",
        report.alignment_rate, report.alignment_ci.0, report.alignment_ci.1, report.n_shops
    );
    let mut inputs = as_refs(&files);
    inputs.push(truth);
    ctx.finish("eval_report", &inputs, &["report.json", "per_shop.csv"])
}

pub fn eval_sensitivity(ctx: &Ctx, logs: &[PathBuf], truth: &Path) -> Result<()> {
    let files = io::log_files(logs)?;
    let sessions = io::read_logs(&files)?;
    let gt = io::read_truth(truth)?;
    let report = budget_sensitivity(&sessions, &gt, &ctx.config.sensitivity)?;
    let cols = |b: Option<&Band>| match b {
        Some(b) => vec![f(b.mean), f(b.p10), f(b.p90)],
        None => vec![String::new(); 3],
    };
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.budget.to_string()];
            row.extend(cols(Some(&r.alignment)));
            row.extend(cols(r.correlation.as_ref()));
            row.push(r.degenerate_replicates.to_string());
            row
        })
        .collect();
    io::write_csv(
        &ctx.out.join("sensitivity.csv"),
        &[
            "budget",
            "alignment_mean",
            "alignment_p10",
            "alignment_p90",
            "correlation_mean",
            "correlation_p10",
            "correlation_p90",
            "degenerate_replicates",
        ],
        &rows,
    )?;
    io::write_json(&ctx.out.join("sensitivity.json"), &report)?;
    println!("{} budgets", report.rows.len());
    let mut inputs = as_refs(&files);
    inputs.push(truth);
    ctx.finish("eval_sensitivity", &inputs, &["sensitivity.csv", "sensitivity.json"])
}

pub fn eval_cohorts(ctx: &Ctx, clickstream: &Path, model: Option<&Path>, k: usize, restarts: usize) -> Result<()> {
    let sessions = io::read_clickstream(clickstream)?;
    let model = match model {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            ClusterModel::from_json(&text).with_context(|| format!("invalid cluster model {}", p.display()))?
        }
        None => {
            let matrix = FeatureMatrix::from_rows(
                SessionFeatures::DIM,
                sessions.iter().map(|s| (s.id.clone(), featurize(s).to_vec())),
            )?;
            let mut km = KMeansConfig::new(k, ctx.config.master_seed);
            km.max_iter = ctx.config.pipeline.max_iter;
            km.tol = ctx.config.pipeline.tol;
            let (m, _) = fit_restarts(&matrix, &km, restarts)?;
            io::write_atomic(&ctx.out.join("cohort_model.json"), m.to_json().as_bytes())?;
            m
        }
    };
    let report = cohort_analysis(&sessions, &model)?;
    io::write_json(&ctx.out.join("cohorts.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .cohorts
        .iter()
        .map(|c| {
            let skim = report.skimmers_cluster_id == Some(c.cluster_id);
            vec![c.cluster_id.to_string(), c.sessions.to_string(), f(c.share), f(c.a2c_rate), c.bounce.to_string(), skim.to_string()]
        })
        .collect();
    io::write_csv(
        &ctx.out.join("cohorts.csv"),
        &["cluster_id", "sessions", "share", "a2c_rate", "bounce", "skimmers"],
        &rows,
    )?;
    match report.skimmers_cluster_id.map(|id| &report.cohorts[id]) {
        Some(c) => println!("skimmers: cluster {} share {:.3} a2c {:.3}", c.cluster_id, c.share, c.a2c_rate),
        None => println!("no non-bouncing cohort"),
    }
    ctx.finish("eval_cohorts", &[clickstream], &["cohorts.json", "cohorts.csv"])
}

pub fn synth_oracle(ctx: &Ctx, shops: usize, sessions: usize) -> Result<()> {
    let data = oracle_dataset(
        ctx.config.master_seed,
        &OracleConfig {
            shops,
            sessions_per_shop: sessions,
            ..OracleConfig::default()
        },
    );
    let mut buf = Vec::new();
    for shop in &data {
        write_clickstream(&mut buf, &shop.sessions)?;
    }
    io::write_atomic(&ctx.out.join("clickstream.jsonl"), &buf)?;
    let catalogs: Vec<_> = data.iter().map(|s| &s.catalog).collect();
    io::write_json(&ctx.out.join("catalog.json"), &json!({"shops": catalogs}))?;
    let stores: Vec<_> = data.iter().map(|s| &s.store).collect();
    io::write_json(&ctx.out.join("stores.json"), &json!({"stores": stores}))?;
    let truth: Vec<_> = data.iter().map(|s| &s.truth).collect();
    io::write_json(&ctx.out.join("truth.json"), &truth)?;
    println!("{} shops", data.len());
    ctx.finish("synth_oracle", &[], &["clickstream.jsonl", "catalog.json", "stores.json", "truth.json"])
}

pub fn synth_cohorts(ctx: &Ctx, sessions: usize) -> Result<()> {
    let pop = cohort_population("cohorts", sessions, ctx.config.master_seed);
    let s: Vec<Session> = pop.into_iter().map(|(s, _)| s).collect();
    let mut buf = Vec::new();
    write_clickstream(&mut buf, &s)?;
    io::write_atomic(&ctx.out.join("clickstream.jsonl"), &buf)?;
    println!("{} sessions", s.len());
    ctx.finish("synth_cohorts", &[], &["clickstream.jsonl"])
}
