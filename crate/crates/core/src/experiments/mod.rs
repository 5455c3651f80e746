//! Named experiments. Each one returns its CSV tables, pass/fail checks at
//! the documented tolerances and the resolved parameters; [`Outcome::write`]
//! stores the tables next to a TOML manifest.
//!
//! Parameters come from the `[params]` table of an [`ExperimentConfig`];
//! omitted keys take the experiment's defaults and unknown keys are errors.

mod counterexamples;
mod montecarlo;
mod operator;
mod pathwise;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Table;

pub const NAMES: [&str; 11] = [
    "c1-upper",
    "c1-lower",
    "c2-jump",
    "drift-1d",
    "bm-1d",
    "stable-2d",
    "split-invariance",
    "continuity-scan",
    "gamma-census",
    "ms-continuity",
    "metric-bench",
];

pub const DEFAULT_SEED: u64 = 20_240_917;

/// File form of an experiment request.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Sets one parameter, overriding any value from the file.
    pub fn set(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(rename = "elapsed_seconds", serialize_with = "secs")]
    pub elapsed: Duration,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl Check {
    fn new(name: &str, passed: bool, detail: String, elapsed: Duration) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
            elapsed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub seed: u64,
    pub params: toml::Table,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

/// What an experiment body hands back.
struct Report {
    params: toml::Table,
    tables: Vec<Table>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    seed: u64,
    levy_exit_version: &'a str,
    created_unix_seconds: u64,
    elapsed_seconds: f64,
    params: &'a toml::Table,
    tables: Vec<TableEntry<'a>>,
    checks: &'a [Check],
}

#[derive(Serialize)]
struct TableEntry<'a> {
    name: &'a str,
    file: String,
    rows: usize,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("experiment {} has no table {name}", self.name)))
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn manifest(&self) -> Result<String> {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let m = Manifest {
            experiment: &self.name,
            seed: self.seed,
            levy_exit_version: env!("CARGO_PKG_VERSION"),
            created_unix_seconds: created,
            elapsed_seconds: self.elapsed.as_secs_f64(),
            params: &self.params,
            tables: self
                .tables
                .iter()
                .map(|t| TableEntry {
                    name: &t.name,
                    file: format!("{}.csv", t.name),
                    rows: t.len(),
                })
                .collect(),
            checks: &self.checks,
        };
        toml::to_string(&m).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Writes every table as `<name>.csv` and `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::new();
        for t in &self.tables {
            out.push(t.write_csv(dir)?);
        }
        let path = dir.join("manifest.toml");
        std::fs::write(&path, self.manifest()?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        out.push(path);
        Ok(out)
    }
}

/// Runs a named experiment.
pub fn run(name: &str, config: &ExperimentConfig) -> Result<Outcome> {
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    let p = &config.params;
    let start = Instant::now();
    let report = match name {
        "c1-upper" => counterexamples::c1_upper(p)?,
        "c1-lower" => counterexamples::c1_lower(p)?,
        "c2-jump" => counterexamples::c2_jump(p)?,
        "drift-1d" => montecarlo::drift_1d(p, seed)?,
        "bm-1d" => montecarlo::bm_1d(p, seed)?,
        "stable-2d" => montecarlo::stable_2d(p, seed)?,
        "gamma-census" => montecarlo::gamma_census(p, seed)?,
        "ms-continuity" => montecarlo::ms_continuity(p, seed)?,
        "split-invariance" => operator::split_invariance(p, seed)?,
        "continuity-scan" => pathwise::continuity_scan(p, seed)?,
        "metric-bench" => pathwise::metric_bench(p, seed)?,
        _ => {
            return Err(Error::Config(format!(
                "unknown experiment {name:?}; known: {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(Outcome {
        name: name.to_string(),
        seed,
        params: report.params,
        tables: report.tables,
        checks: report.checks,
        elapsed: start.elapsed(),
    })
}

/// Deserialises `P` from the params table and echoes the resolved values.
fn params<P: DeserializeOwned + Serialize>(t: &toml::Table) -> Result<(P, toml::Table)> {
    let p: P = toml::Value::Table(t.clone())
        .try_into()
        .map_err(|e| Error::Config(format!("experiment params: {e}")))?;
    let echo = toml::Table::try_from(&p).map_err(|e| Error::Config(format!("experiment params: {e}")))?;
    Ok((p, echo))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_are_config_errors() {
        let e = run("c3-nothing", &ExperimentConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn unknown_params_are_rejected() {
        let cfg = ExperimentConfig::default().set("no_such_key", 1);
        assert!(matches!(run("c1-upper", &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn config_file_round_trip() {
        let cfg = ExperimentConfig::parse("name = \"drift-1d\"\nseed = 5\n[params]\nn = 10\n").unwrap();
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.params["n"].as_integer(), Some(10));
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
    }
}
