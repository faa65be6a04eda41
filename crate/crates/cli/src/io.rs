//! File helpers. Every read error names the offending path.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use storesim::agent::SessionLog;
use storesim::catalog::{CatalogFile, ShopCatalog};
use storesim::clickstream::{parse_clickstream, Session};
use storesim::evaluation::ShopGroundTruth;
use storesim::storefront::{StoreSpecFile, StoreSpecSet};

use crate::config::hex;

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

pub fn read_clickstream(path: &Path) -> Result<Vec<Session>> {
    parse_clickstream(open(path)?).with_context(|| format!("bad clickstream {}", path.display()))
}

/// Accepts `{"shops": [...]}` or a single shop object.
pub fn read_catalog(path: &Path) -> Result<Vec<ShopCatalog>> {
    let v: Value = read_json(path)?;
    let parsed = if v.get("shops").is_some() {
        serde_json::from_value::<CatalogFile>(v).map(|c| c.shops)
    } else {
        serde_json::from_value::<ShopCatalog>(v).map(|c| vec![c])
    };
    parsed.with_context(|| format!("invalid catalog {}", path.display()))
}

/// Accepts `{"stores": [...]}` or a single store document.
pub fn read_stores(path: &Path) -> Result<Vec<StoreSpecFile>> {
    let v: Value = read_json(path)?;
    let parsed = if v.get("stores").is_some() {
        serde_json::from_value::<StoreSpecSet>(v).map(|s| s.stores)
    } else {
        serde_json::from_value::<StoreSpecFile>(v).map(|s| vec![s])
    };
    parsed.with_context(|| format!("invalid store spec {}", path.display()))
}

pub fn read_truth(path: &Path) -> Result<Vec<ShopGroundTruth>> {
    read_json(path)
}

/// A directory stands for the named file inside it.
pub fn resolve(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

/// Expands directories into their `*.jsonl` files, looking inside `logs/`
/// when present, in name order.
pub fn log_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        let dir = if p.join("logs").is_dir() { p.join("logs") } else { p.clone() };
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)
            .with_context(|| format!("cannot list {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        if found.is_empty() {
            bail!("no .jsonl session logs in {}", dir.display());
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

pub fn read_logs(files: &[PathBuf]) -> Result<Vec<SessionLog>> {
    let mut logs = Vec::new();
    for file in files {
        for (i, line) in open(file)?.lines().enumerate() {
            let line = line.with_context(|| format!("cannot read {}", file.display()))?;
            if line.trim().is_empty() {
                continue;
            }
            let log = serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: invalid session log", file.display(), i + 1))?;
            logs.push(log);
        }
    }
    if logs.is_empty() {
        bail!("no session logs found");
    }
    Ok(logs)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let buf = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
    write_atomic(path, &buf)
}

/// Writes to a sibling temp file, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    {
        let mut f = BufWriter::new(File::create(&tmp).with_context(|| format!("cannot write {}", tmp.display()))?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Body of `<command>.meta.json`: config hash, seed and input digests. No
/// timestamps, and inputs are named by file name only so reruns from other
/// directories compare equal.
pub fn meta(command: &str, config_hash: &str, seed: u64, inputs: &[&Path], outputs: &[&str]) -> Result<Value> {
    let mut digests = Vec::new();
    for p in inputs {
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        digests.push(json!({"file": name, "sha256": file_sha256(p)?}));
    }
    Ok(json!({
        "command": command,
        "config_hash": config_hash,
        "master_seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": digests,
        "outputs": outputs,
    }))
}

pub fn meta_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("{command}.meta.json"))
}
