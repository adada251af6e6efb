use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

pub const SCHEMA: &str = "inflate-config/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emit {
    Csv,
    Svg,
    Jsonl,
}

impl std::str::FromStr for Emit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Emit::Csv),
            "svg" => Ok(Emit::Svg),
            "jsonl" => Ok(Emit::Jsonl),
            other => Err(format!("unknown output kind `{other}` (csv, svg, jsonl)")),
        }
    }
}

/// Everything a config file may set. Unknown keys are errors so typos surface.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema: String,
    pub case: Option<String>,
    #[serde(rename = "N")]
    pub n: Option<Vec<u64>>,
    pub s: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub r: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub emit: Option<Vec<String>>,
    pub cutoff: Option<usize>,
    pub steps: Option<usize>,
    pub d: Option<usize>,
    pub nu: Option<usize>,
    pub range: Option<i64>,
    pub p: Option<usize>,
    pub kmax: Option<usize>,
    pub c: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.schema != SCHEMA {
            bail!("config schema `{}` is not supported (expected `{SCHEMA}`)", cfg.schema);
        }
        Ok(cfg)
    }
}

/// Resolved settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Common {
    pub output_dir: PathBuf,
    pub emit: BTreeSet<Emit>,
}

impl Common {
    pub fn resolve(flag_out: Option<PathBuf>, flag_emit: Option<Vec<Emit>>, file: &FileConfig) -> Result<Self> {
        let output_dir = flag_out
            .or_else(|| file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let emit: BTreeSet<Emit> = match (flag_emit, &file.emit) {
            (Some(e), _) => e.into_iter().collect(),
            (None, Some(names)) => names
                .iter()
                .map(|n| n.parse().map_err(anyhow::Error::msg))
                .collect::<Result<_>>()?,
            (None, None) => [Emit::Csv, Emit::Svg, Emit::Jsonl].into_iter().collect(),
        };
        fs::create_dir_all(&output_dir)
            .with_context(|| format!("creating output directory {}", output_dir.display()))?;
        Ok(Self { output_dir, emit })
    }

    pub fn wants(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Scenario selection after merging flags over the file.
#[derive(Clone, Debug)]
pub struct ScenarioArgs {
    pub case: String,
    pub ns: Vec<u64>,
    pub s: Option<f64>,
    pub k: usize,
    pub overrides: inflate_core::scenarios::Overrides,
}

pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn check_dyadic(ns: &[u64]) -> Result<()> {
    if ns.is_empty() {
        bail!("no N values given (use --N or the `N` key of the config file)");
    }
    if let Some(bad) = ns.iter().find(|n| **n < 4 || !n.is_power_of_two()) {
        bail!("N = {bad} is not a dyadic integer >= 4");
    }
    Ok(())
}
