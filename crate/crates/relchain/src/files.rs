//! On-disk formats: packing records (JSON), latency profiles (TOML) and
//! ledger exports (canonical bytes).

use std::fs;
use std::io;
use std::path::Path;

use relchain_core::sim::{LatencyProfile, LinkLatency};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::PackingRecord;

#[derive(Debug, Error)]
pub enum FileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

pub fn save_packing(path: &Path, packing: &PackingRecord) -> Result<(), FileError> {
    fs::write(path, serde_json::to_vec_pretty(packing)?)?;
    Ok(())
}

pub fn load_packing(path: &Path) -> Result<PackingRecord, FileError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LinkFile {
    src: u32,
    dst: u32,
    base_ms: u64,
    #[serde(default)]
    jitter_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    #[serde(default)]
    base_ms: u64,
    #[serde(default)]
    jitter_ms: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default, rename = "link")]
    links: Vec<LinkFile>,
}

/// Parses a latency profile:
///
/// ```toml
/// name = "lan"
/// base_ms = 1
/// jitter_ms = 1
///
/// [[link]]
/// src = 0
/// dst = 1
/// base_ms = 20
/// ```
pub fn parse_latency_profile(text: &str) -> Result<LatencyProfile, FileError> {
    let f: ProfileFile = toml::from_str(text)?;
    let mut p = LatencyProfile::uniform(&f.name, f.base_ms, f.jitter_ms).with_seed(f.seed);
    for l in f.links {
        if l.src == l.dst {
            return Err(FileError::Invalid(format!("link {} -> {} is a self-loop", l.src, l.dst)));
        }
        let prev = p.overrides.insert(
            (l.src, l.dst),
            LinkLatency {
                base_ms: l.base_ms,
                jitter_ms: l.jitter_ms,
            },
        );
        if prev.is_some() {
            return Err(FileError::Invalid(format!("link {} -> {} given twice", l.src, l.dst)));
        }
    }
    Ok(p)
}

pub fn render_latency_profile(p: &LatencyProfile) -> String {
    let f = ProfileFile {
        name: p.name.clone(),
        base_ms: p.default.base_ms,
        jitter_ms: p.default.jitter_ms,
        seed: p.seed,
        links: p
            .overrides
            .iter()
            .map(|(&(src, dst), l)| LinkFile {
                src,
                dst,
                base_ms: l.base_ms,
                jitter_ms: l.jitter_ms,
            })
            .collect(),
    };
    toml::to_string(&f).expect("profile serializes")
}

/// A built-in profile name or a path to a TOML file.
pub fn resolve_latency_profile(spec: &str, nodes: usize) -> Result<LatencyProfile, FileError> {
    if let Some(p) = LatencyProfile::named(spec, nodes) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if path.exists() {
        return parse_latency_profile(&fs::read_to_string(path)?);
    }
    Err(FileError::Invalid(format!(
        "unknown latency profile {spec}: expected one of {} or a file",
        LatencyProfile::NAMES.join(", ")
    )))
}

pub fn write_ledger_export(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip() {
        let p = LatencyProfile::named("two-regions", 4).unwrap().with_seed(7);
        let text = render_latency_profile(&p);
        assert_eq!(parse_latency_profile(&text).unwrap(), p);
    }

    #[test]
    fn profile_rejects_duplicates() {
        let text = "name = \"x\"\n[[link]]\nsrc = 0\ndst = 1\nbase_ms = 3\n[[link]]\nsrc = 0\ndst = 1\nbase_ms = 4\n";
        assert!(matches!(parse_latency_profile(text), Err(FileError::Invalid(_))));
        let self_loop = "name = \"x\"\n[[link]]\nsrc = 2\ndst = 2\nbase_ms = 3\n";
        assert!(parse_latency_profile(self_loop).is_err());
    }

    #[test]
    fn unknown_profile_name() {
        assert!(resolve_latency_profile("mars", 4).is_err());
        assert_eq!(resolve_latency_profile("zero", 4).unwrap(), LatencyProfile::zero());
    }
}
