use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use levy_exit::cadlag::PathLiteral;
use levy_exit::entrance::{classify_gamma, classify_record, entrance_record};
use levy_exit::experiments::{self, ExperimentConfig, DEFAULT_SEED};
use levy_exit::levy::{LevyModel, LevySpec};
use levy_exit::nonlocal::{eval_f_residual, manufactured_cost, Candidate, CandidateSpec, QuadratureSpec};
use levy_exit::sde::{
    batch_simulate, read_archive, write_archive, CoefficientSpec, Coefficients, CostRef, Policy, PolicySpec, SimSpec,
    DEFAULT_DT, DEFAULT_HORIZON,
};
use levy_exit::skorohod::{metric_finite, metric_infinite_with, SearchBudget};
use levy_exit::table::{Cell, Table};
use levy_exit::value::{estimate, CostFn, CostSpec};
use levy_exit::{row, CadlagPath, Domain, DomainSpec, Error};

use crate::{Cli, Command};

/// 2 for bad requests (unknown names, invalid config), 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let input = e
        .chain()
        .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_input) || c.downcast_ref::<BadRequest>().is_some());
    if input {
        2
    } else {
        1
    }
}

/// Unreadable or malformed request files.
#[derive(Debug)]
struct BadRequest(String);

impl std::fmt::Display for BadRequest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadRequest {}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Experiment { name } => experiment(cli, name),
        Command::Metric => {
            let (req, raw): (MetricRequest, _) = load(cli)?;
            emit(cli, "metric", &raw, None, vec![metric(&req)?])
        }
        Command::Entrance { archive: None } => {
            let (req, raw): (EntranceRequest, _) = load(cli)?;
            emit(cli, "entrance", &raw, None, vec![entrance(&req)?])
        }
        Command::Entrance { archive: Some(path) } => {
            let (req, raw): (CensusRequest, _) = load(cli)?;
            emit(cli, "entrance", &raw, None, census(&req, path)?)
        }
        Command::Simulate => {
            let (req, raw): (SimulateRequest, _) = load(cli)?;
            let seed = cli.seed.or(req.seed).unwrap_or(DEFAULT_SEED);
            let (table, archive) = simulate(&req, seed)?;
            std::fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
            let path = cli.out.join("archive.jsonl");
            let mut w = BufWriter::new(File::create(&path).with_context(|| path.display().to_string())?);
            w.write_all(&archive)?;
            w.flush()?;
            emit(cli, "simulate", &raw, Some(seed), vec![table])
        }
        Command::Value => {
            let (req, raw): (ValueRequest, _) = load(cli)?;
            let seed = cli.seed.or(req.seed).unwrap_or(DEFAULT_SEED);
            emit(cli, "value", &raw, Some(seed), vec![value(&req, seed)?])
        }
        Command::Residual => {
            let (req, raw): (ResidualRequest, _) = load(cli)?;
            emit(cli, "residual", &raw, None, vec![residual(&req)?])
        }
    }
}

fn read_config(cli: &Cli) -> Result<Option<String>> {
    match &cli.config {
        None => Ok(None),
        Some(p) => std::fs::read_to_string(p)
            .map(Some)
            .map_err(|e| BadRequest(format!("{}: {e}", p.display())).into()),
    }
}

/// Parses the request file, keeping the raw table for the manifest echo.
fn load<T: DeserializeOwned>(cli: &Cli) -> Result<(T, toml::Table)> {
    let text = read_config(cli)?.ok_or_else(|| BadRequest("this subcommand needs --config FILE".into()))?;
    let raw: toml::Table = toml::from_str(&text).map_err(|e| BadRequest(format!("config: {e}")))?;
    let req = T::deserialize(toml::Value::Table(raw.clone())).map_err(|e| BadRequest(format!("config: {e}")))?;
    Ok((req, raw))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    levy_exit_version: &'a str,
    created_unix_seconds: u64,
    config: &'a toml::Table,
    files: Vec<String>,
}

fn emit(cli: &Cli, command: &str, config: &toml::Table, seed: Option<u64>, tables: Vec<Table>) -> Result<ExitCode> {
    std::fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
    let mut files = Vec::new();
    for t in &tables {
        let p = t.write_csv(&cli.out)?;
        files.push(file_name(&p));
        eprintln!("wrote {}", p.display());
    }
    if command == "simulate" {
        files.push("archive.jsonl".into());
    }
    let m = Manifest {
        command,
        seed,
        levy_exit_version: env!("CARGO_PKG_VERSION"),
        created_unix_seconds: now(),
        config,
        files,
    };
    let path = cli.out.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&m)?).with_context(|| path.display().to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn experiment(cli: &Cli, name: &str) -> Result<ExitCode> {
    let mut cfg = match read_config(cli)? {
        Some(text) => ExperimentConfig::parse(&text)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = &cfg.name {
        if n != name {
            return Err(BadRequest(format!("config is for experiment {n:?}, not {name:?}")).into());
        }
    }
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    let outcome = experiments::run(name, &cfg)?;
    for p in outcome.write(&cli.out)? {
        eprintln!("wrote {}", p.display());
    }
    for c in &outcome.checks {
        println!(
            "{} {:<24} {} ({:.3} s)",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail,
            c.elapsed.as_secs_f64()
        );
    }
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn path_from(lit: &PathLiteral) -> Result<CadlagPath> {
    Ok(CadlagPath::from_literal(lit)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricRequest {
    x: PathLiteral,
    y: PathLiteral,
    /// Finite horizon of `d°_t`; omitted for `d°_∞`.
    t: Option<f64>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_pairs")]
    max_pairs: usize,
    #[serde(default = "default_rounds")]
    refine_rounds: usize,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_pairs() -> usize {
    SearchBudget::default().max_pairs
}

fn default_rounds() -> usize {
    SearchBudget::default().refine_rounds
}

fn metric(req: &MetricRequest) -> Result<Table> {
    let (x, y) = (path_from(&req.x)?, path_from(&req.y)?);
    let budget = SearchBudget {
        max_pairs: req.max_pairs,
        refine_rounds: req.refine_rounds,
    };
    let mut t = Table::new("metric", &["t", "upper", "lower", "gap", "budget_exceeded"]);
    match req.t {
        Some(h) => {
            let r = metric_finite(&x, &y, h, &budget)?;
            t.push(row![h, r.upper, r.lower, r.gap(), r.budget_exceeded]);
        }
        None => {
            let r = metric_infinite_with(&x, &y, req.tol, &budget)?;
            t.push(row![
                f64::INFINITY,
                r.upper,
                r.lower,
                r.upper - r.lower,
                r.budget_exceeded
            ]);
        }
    }
    Ok(t)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntranceRequest {
    domain: DomainSpec,
    path: PathLiteral,
}

fn point_cells(p: Option<&Vec<f64>>, d: usize) -> Vec<Cell> {
    match p {
        Some(v) => v.iter().map(|&x| x.into()).collect(),
        None => vec![Cell::Text(String::new()); d],
    }
}

fn coord_columns(prefix: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![prefix.to_string()]
    } else {
        (0..d).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn entrance(req: &EntranceRequest) -> Result<Table> {
    let dom = Domain::new(req.domain.clone())?;
    let path = path_from(&req.path)?;
    let d = dom.dim();
    let rec = entrance_record(&path, &dom)?;
    let mut cols = vec!["time".to_string()];
    cols.extend(coord_columns("point", d));
    cols.extend(
        [
            "left_time",
            "closed_complement_time",
            "in_gamma",
            "in_gamma_hat",
            "violations",
        ]
        .map(String::from),
    );
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("entrance", &cols);
    let (g, gh, why) = match classify_gamma(&path, &dom) {
        Ok(c) => (c.in_gamma.into(), c.in_gamma_hat.into(), c.violations.join("; ")),
        Err(e @ Error::Undetermined { .. }) => (Cell::Text(String::new()), Cell::Text(String::new()), e.to_string()),
        Err(e) => return Err(e.into()),
    };
    let mut r: Vec<Cell> = vec![rec.time.into()];
    r.extend(point_cells(rec.point.as_ref(), d));
    r.extend([
        rec.left_time.into(),
        rec.closed_complement_time.into(),
        g,
        gh,
        why.into(),
    ]);
    t.push(r);
    Ok(t)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CensusRequest {
    domain: DomainSpec,
}

/// Classifies every recorded skeleton; undetermined ones count as outside.
fn census(req: &CensusRequest, archive: &PathBuf) -> Result<Vec<Table>> {
    let dom = Domain::new(req.domain.clone())?;
    let f = File::open(archive).map_err(|e| BadRequest(format!("{}: {e}", archive.display())))?;
    let records = read_archive(BufReader::new(f))?;
    let mut t = Table::new(
        "census",
        &["index", "tau", "exited_by_jump", "censored", "in_gamma", "in_gamma_hat"],
    );
    let (mut n_g, mut n_gh) = (0usize, 0usize);
    for r in &records {
        let lit = r.trajectory.as_ref().ok_or_else(|| {
            BadRequest(format!(
                "archive record {} has no trajectory; simulate with record_paths = true",
                r.index
            ))
        })?;
        let path = path_from(lit)?;
        let rec = entrance_record(&path, &dom)?;
        let (g, gh) = match classify_record(&rec, &dom, path.horizon()) {
            Ok(c) => (c.in_gamma, c.in_gamma_hat),
            Err(Error::Undetermined { .. }) => (false, false),
            Err(e) => return Err(e.into()),
        };
        n_g += usize::from(g);
        n_gh += usize::from(gh);
        t.push(row![r.index, r.tau, r.exited_by_jump, r.censored, g, gh]);
    }
    let n = records.len().max(1) as f64;
    let mut s = Table::new("summary", &["N", "in_gamma_fraction", "in_gamma_hat_fraction"]);
    s.push(row![records.len(), n_g as f64 / n, n_gh as f64 / n]);
    Ok(vec![t, s])
}

/// Shared model section of `simulate` and `value`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Model {
    domain: DomainSpec,
    policy: PolicySpec,
    coefficients: CoefficientSpec,
    levy: Option<LevySpec>,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "one")]
    discount_rate: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn one() -> f64 {
    1.0
}

impl Model {
    fn spec(&self) -> Result<SimSpec> {
        let domain = Domain::new(self.domain.clone())?;
        let d = domain.dim();
        let coeffs = Coefficients::new(self.coefficients.clone())?;
        let (lo, hi) = coeffs.range();
        let policy = Policy::new(self.policy.clone(), d, lo, hi)?;
        let levy = match &self.levy {
            Some(s) => LevyModel::new(s.clone())?,
            None => LevyModel::none(d),
        };
        Ok(SimSpec::new(domain, policy, coeffs, levy, self.dt, self.horizon)?.with_discount(self.discount_rate)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    #[serde(flatten)]
    model: Model,
    x0: Vec<f64>,
    n: usize,
    seed: Option<u64>,
    running_cost: Option<CostSpec>,
    #[serde(default)]
    record_paths: bool,
}

fn simulate(req: &SimulateRequest, seed: u64) -> Result<(Table, Vec<u8>)> {
    let spec = req.model.spec()?.recording(req.record_paths);
    let d = spec.dim();
    let cost = req.running_cost.clone().map(|c| CostFn::new(c, d)).transpose()?;
    let lf = |y: &[f64]| cost.as_ref().map_or(0.0, |c| c.eval(y));
    let costs: Vec<CostRef<'_>> = if cost.is_some() { vec![&lf] } else { vec![] };
    let samples = batch_simulate(&req.x0, &spec, &costs, req.n, seed)?;
    let mut cols = vec!["index".to_string(), "tau".into(), "tau_hat".into()];
    cols.extend(coord_columns("exit_point", d));
    cols.extend(["exited_by_jump", "censored", "discount", "running_cost"].map(String::from));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("samples", &cols);
    for (i, s) in samples.iter().enumerate() {
        let mut r: Vec<Cell> = vec![i.into(), s.tau.into(), s.tau_hat.into()];
        r.extend(s.exit_point.iter().map(|&v| Cell::from(v)));
        r.extend([
            s.exited_by_jump.into(),
            s.censored.into(),
            s.discount.into(),
            s.discounted_costs.first().copied().unwrap_or(0.0).into(),
        ]);
        t.push(r);
    }
    let mut archive = Vec::new();
    write_archive(&samples, &mut archive)?;
    Ok((t, archive))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueRequest {
    #[serde(flatten)]
    model: Model,
    points: Vec<Vec<f64>>,
    n: usize,
    seed: Option<u64>,
    running_cost: CostSpec,
    terminal_cost: CostSpec,
}

fn value(req: &ValueRequest, seed: u64) -> Result<Table> {
    let spec = req.model.spec()?;
    let d = spec.dim();
    let l = CostFn::new(req.running_cost.clone(), d)?;
    let g = CostFn::new(req.terminal_cost.clone(), d)?;
    let mut cols = coord_columns("x", d);
    cols.extend(["mean", "std_error", "N"].map(String::from));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("value", &cols);
    for x in &req.points {
        let e = estimate(x, &spec, &l, &g, req.n, seed)?;
        if let Some(w) = e.censoring_warning() {
            eprintln!("warning: at {x:?}: {w}");
        }
        let mut r: Vec<Cell> = x.iter().map(|&v| v.into()).collect();
        r.extend([e.mean.into(), e.std_error.into(), e.n.into()]);
        t.push(r);
    }
    Ok(t)
}

/// A registry name or an explicit parameterisation.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CandidateChoice {
    Named(String),
    Spec(CandidateSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResidualRequest {
    candidate: CandidateChoice,
    points: Vec<Vec<f64>>,
    coefficients: CoefficientSpec,
    levy: Option<LevySpec>,
    #[serde(default)]
    quadrature: QuadratureSpec,
    #[serde(default = "default_a_grid")]
    a_grid: usize,
    /// `ℓ` to test against; when omitted, `ℓ` is manufactured from the
    /// candidate and the residual only measures quadrature consistency.
    running_cost: Option<CostSpec>,
    /// Split radius used when manufacturing `ℓ`.
    #[serde(default = "one")]
    manufacture_r: f64,
}

fn default_a_grid() -> usize {
    33
}

fn residual(req: &ResidualRequest) -> Result<Table> {
    let coeffs = Coefficients::new(req.coefficients.clone())?;
    let d = coeffs.dim();
    let phi = match &req.candidate {
        CandidateChoice::Named(n) => Candidate::named(n, d)?,
        CandidateChoice::Spec(s) => Candidate::new(s.clone(), d)?,
    };
    let model = match &req.levy {
        Some(s) => LevyModel::new(s.clone())?,
        None => LevyModel::none(d),
    };
    let cost = req.running_cost.clone().map(|c| CostFn::new(c, d)).transpose()?;
    let mut cols = coord_columns("x", d);
    cols.extend(
        [
            "phi",
            "min_h",
            "a_star",
            "nonlocal",
            "ell",
            "ell_error",
            "residual",
            "error",
            "bound",
            "ok",
        ]
        .map(String::from),
    );
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("residual", &cols);
    for x in &req.points {
        let (ell, ell_err) = match &cost {
            Some(c) => (c.eval(x), 0.0),
            None => {
                let m = manufactured_cost(
                    &phi,
                    x,
                    req.a_grid,
                    &coeffs,
                    &model,
                    &QuadratureSpec::with_r(req.manufacture_r),
                )?;
                (m.value, m.error)
            }
        };
        let r = eval_f_residual(&phi, x, req.a_grid, &|_| ell, &coeffs, &model, &req.quadrature)?;
        let bound = r.error + ell_err + 1e-8;
        let mut row: Vec<Cell> = x.iter().map(|&v| v.into()).collect();
        row.extend([
            r.phi.into(),
            r.min_h.into(),
            r.a_star.into(),
            r.nonlocal.into(),
            ell.into(),
            ell_err.into(),
            r.residual.into(),
            r.error.into(),
            bound.into(),
            (r.residual.abs() <= bound).into(),
        ]);
        t.push(row);
    }
    Ok(t)
}
