//! Experiment orchestration: configuration files, dispatch, content-addressed
//! result cache, threshold bisection, refinement studies and tabular output.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bubbles::{fit_expansion, log_eps_list, sweep_integrals, BubbleIntegrals};
use crate::config::{LabConfig, KEYS};
use crate::constants::{
    alpha_lower_bound, beta_tilde, cached_a_k, gamma_tilde, hardy_check, omega, SobolevConstants, ThresholdSet,
};
use crate::error::{invalid, Error, Result};
use crate::family::{choose_r0, family_report, FamilyParams};
use crate::pohozaev::{certify_nonexistence, pohozaev_residual};
use crate::variational::{
    annulus_solve, eigen_lambda1_div, free_range, minimize_s_lambda, reconstruct_solution, s_lambda_curve,
    DiscreteFunction, MinimizeOptions,
};
use crate::VERSION;

pub const CACHE_ENV: &str = "CRITBUBBLE_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Constants,
    Expansion,
    Minimize,
    Eigen,
    Curve,
    Annulus,
    Certify,
    Family,
    Pohozaev,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::Constants,
        Self::Expansion,
        Self::Minimize,
        Self::Eigen,
        Self::Curve,
        Self::Annulus,
        Self::Certify,
        Self::Family,
        Self::Pohozaev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Constants => "constants",
            Self::Expansion => "expansion",
            Self::Minimize => "minimize",
            Self::Eigen => "eigen",
            Self::Curve => "curve",
            Self::Annulus => "annulus",
            Self::Certify => "certify",
            Self::Family => "family",
            Self::Pohozaev => "pohozaev",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config { key: "kind".into(), message: format!("unknown experiment kind `{s}`") })
    }
}

/// Per-experiment parameters; each kind reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub lambda: Option<f64>,
    pub eps_min: Option<f64>,
    pub eps_max: Option<f64>,
    pub points: Option<usize>,
    pub lambda_from: Option<f64>,
    pub lambda_to: Option<f64>,
    pub steps: Option<usize>,
    pub t: Option<f64>,
    pub sigma_axis: Option<usize>,
    pub scale_index: Option<u32>,
    pub r0: Option<f64>,
    #[serde(rename = "R0")]
    pub big_r0: Option<f64>,
    /// Continuity margin used to choose `r₀` when it is not given.
    pub family_theta: Option<f64>,
    pub refine: Option<bool>,
    pub hardy_samples: Option<usize>,
    pub solution: Option<PathBuf>,
}

pub const PARAM_KEYS: [&str; 16] = [
    "lambda",
    "eps_min",
    "eps_max",
    "points",
    "lambda_from",
    "lambda_to",
    "steps",
    "t",
    "sigma_axis",
    "scale_index",
    "r0",
    "R0",
    "family_theta",
    "refine",
    "hardy_samples",
    "solution",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lab: LabConfig,
    pub kind: ExperimentKind,
    pub params: ExperimentParams,
    /// Where the payload (JSON) or table (CSV) is written.
    pub output: Option<PathBuf>,
    pub seed: u64,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

impl ExperimentConfig {
    pub fn new(lab: LabConfig, kind: ExperimentKind) -> Self {
        Self { lab, kind, params: ExperimentParams::default(), output: None, seed: 0 }
    }

    /// Parses a `key=value` file holding lab keys plus `kind`, `output`,
    /// `seed` and experiment parameters.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lab_lines = String::new();
        let mut kind = None;
        let mut output = None;
        let mut seed = 0;
        let mut p = ExperimentParams::default();
        let mut seen = BTreeSet::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| config_err(line, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            if KEYS.contains(&key) {
                lab_lines.push_str(line);
                lab_lines.push('\n');
                continue;
            }
            if !seen.insert(key.to_string()) {
                return Err(config_err(key, "repeated key"));
            }
            match key {
                "kind" => kind = Some(value.parse::<ExperimentKind>()?),
                "output" => output = Some(PathBuf::from(value)),
                "seed" => seed = parse_value(key, value)?,
                "lambda" => p.lambda = Some(parse_value(key, value)?),
                "eps_min" => p.eps_min = Some(parse_value(key, value)?),
                "eps_max" => p.eps_max = Some(parse_value(key, value)?),
                "points" => p.points = Some(parse_value(key, value)?),
                "lambda_from" => p.lambda_from = Some(parse_value(key, value)?),
                "lambda_to" => p.lambda_to = Some(parse_value(key, value)?),
                "steps" => p.steps = Some(parse_value(key, value)?),
                "t" => p.t = Some(parse_value(key, value)?),
                "sigma_axis" => p.sigma_axis = Some(parse_value(key, value)?),
                "scale_index" => p.scale_index = Some(parse_value(key, value)?),
                "r0" => p.r0 = Some(parse_value(key, value)?),
                "R0" => p.big_r0 = Some(parse_value(key, value)?),
                "family_theta" => p.family_theta = Some(parse_value(key, value)?),
                "refine" => p.refine = Some(parse_value(key, value)?),
                "hardy_samples" => p.hardy_samples = Some(parse_value(key, value)?),
                "solution" => p.solution = Some(PathBuf::from(value)),
                _ => return Err(config_err(key, "unknown key")),
            }
        }
        let lab = LabConfig::parse(&lab_lines)?;
        let kind = kind.ok_or_else(|| config_err("kind", "missing"))?;
        Ok(Self { lab, kind, params: p, output, seed })
    }

    /// Emits every lab key followed by the set experiment keys.
    pub fn emit(&self) -> String {
        let mut s = self.lab.emit();
        let _ = writeln!(s, "kind={}", self.kind.name());
        let _ = writeln!(s, "seed={}", self.seed);
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output={}", o.display());
        }
        let p = &self.params;
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{k}={v}");
            }
        };
        put("lambda", p.lambda.map(|v| v.to_string()));
        put("eps_min", p.eps_min.map(|v| v.to_string()));
        put("eps_max", p.eps_max.map(|v| v.to_string()));
        put("points", p.points.map(|v| v.to_string()));
        put("lambda_from", p.lambda_from.map(|v| v.to_string()));
        put("lambda_to", p.lambda_to.map(|v| v.to_string()));
        put("steps", p.steps.map(|v| v.to_string()));
        put("t", p.t.map(|v| v.to_string()));
        put("sigma_axis", p.sigma_axis.map(|v| v.to_string()));
        put("scale_index", p.scale_index.map(|v| v.to_string()));
        put("r0", p.r0.map(|v| v.to_string()));
        put("R0", p.big_r0.map(|v| v.to_string()));
        put("family_theta", p.family_theta.map(|v| v.to_string()));
        put("refine", p.refine.map(|v| v.to_string()));
        put("hardy_samples", p.hardy_samples.map(|v| v.to_string()));
        put("solution", p.solution.as_ref().map(|v| v.display().to_string()));
        s
    }

    /// Hex SHA-256 of the canonical JSON of the configuration (without the
    /// output path) and the crate version.
    pub fn cache_key(&self) -> Result<String> {
        let keyed = Self { output: None, ..self.clone() };
        let canonical = serde_json::to_string(&json!({ "config": keyed, "version": VERSION }))?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    fn require<T: Copy>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| config_err(key, format!("required by the {} experiment", self.kind.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn relative(name: &str, expected: f64, observed: f64, tolerance: f64) -> Self {
        let err = (observed - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        Self { name: name.into(), expected, observed, tolerance, pass: err <= tolerance }
    }
}

/// Rows of a CSV table with a header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// CSV with `{:.16e}` cells: 17 significant digits, `.` separator.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| invalid(format!("non-numeric csv cell `{c}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub cache_key: String,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub payload: Value,
    pub table: Option<Table>,
    pub checks: Vec<OracleCheck>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Content-addressed store of run records, one JSON file per cache key.
#[derive(Debug, Clone)]
pub struct RecordStore {
    pub dir: PathBuf,
}

impl RecordStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$CRITBUBBLE_CACHE_DIR` if set, else `fallback`.
    pub fn from_env(fallback: Option<PathBuf>) -> Option<Self> {
        std::env::var_os(CACHE_ENV).map(PathBuf::from).or(fallback).map(Self::new)
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<RunRecord>> {
        match std::fs::read_to_string(self.path_for(key)) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes once; an existing record for the same key is kept.
    pub fn store(&self, rec: &RunRecord) -> Result<()> {
        let path = self.path_for(&rec.cache_key);
        if path.exists() {
            return Ok(());
        }
        write_atomic(&path, &to_json_pretty(rec)?)
    }
}

/// Writes `contents` through a temporary file in the same directory and
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// The text `run` writes to `config.output`.
pub fn rendered_output(rec: &RunRecord) -> Result<String> {
    match &rec.table {
        Some(t) => t.to_csv(),
        None => to_json_pretty(&rec.payload),
    }
}

/// Runs `config`, serving from `store` when a record with the same key
/// exists; persists the record and writes the output file.
pub fn run(config: &ExperimentConfig, store: Option<&RecordStore>) -> Result<RunRecord> {
    let key = config.cache_key()?;
    let cached = match store {
        Some(s) => s.load(&key)?,
        None => None,
    };
    let rec = match cached {
        Some(r) => r,
        None => {
            let started = now_ms();
            let (payload, table, checks) = dispatch(config).map_err(|e| with_context(config, e))?;
            let rec = RunRecord {
                config: config.clone(),
                cache_key: key,
                version: VERSION.to_string(),
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
                payload,
                table,
                checks,
            };
            if let Some(s) = store {
                s.store(&rec)?;
            }
            rec
        }
    };
    if let Some(out) = &config.output {
        write_atomic(out, &rendered_output(&rec)?)?;
    }
    Ok(rec)
}

fn with_context(config: &ExperimentConfig, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Precondition(format!("{} experiment (n={}): {other}", config.kind.name(), config.lab.n)),
    }
}

type Outcome = (Value, Option<Table>, Vec<OracleCheck>);

fn dispatch(c: &ExperimentConfig) -> Result<Outcome> {
    match c.kind {
        ExperimentKind::Constants => run_constants(c),
        ExperimentKind::Expansion => run_expansion(c),
        ExperimentKind::Minimize => run_minimize(c),
        ExperimentKind::Eigen => run_eigen(c),
        ExperimentKind::Curve => run_curve(c),
        ExperimentKind::Annulus => run_annulus(c),
        ExperimentKind::Certify => run_certify(c),
        ExperimentKind::Family => run_family(c),
        ExperimentKind::Pohozaev => run_pohozaev(c),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K3")]
    pub k3: Option<f64>,
    #[serde(rename = "S")]
    pub s: f64,
    pub omega_n: f64,
    #[serde(rename = "A_k")]
    pub a_k: Option<f64>,
    pub gamma_tilde: Option<f64>,
    pub beta_tilde: Option<f64>,
    pub alpha_lower: Option<f64>,
    /// Why absent entries are absent.
    pub regime: Option<String>,
}

/// Closed-form and quadrature constants for dimension `n` and, when given,
/// the weight exponent `k`, coefficient `β` and domain diameter.
pub fn constants_table(n: usize, k: Option<f64>, beta: f64, diam: f64) -> Result<ConstantsTable> {
    let c = SobolevConstants::cached(n)?;
    let mut notes = Vec::new();
    let mut keep = |r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e @ Error::Regime { .. }) | Err(e @ Error::InvalidParameter(_)) => {
            notes.push(e.to_string());
            None
        }
        Err(_) => None,
    };
    if c.k3.is_none() {
        keep(Err(Error::Regime { quantity: "K3", hint: "needs n >= 5".into() }));
    }
    let (a_k, gt, bt, al) = match k {
        Some(k) => (
            keep(cached_a_k(n, k, beta)),
            if (k - 2.0).abs() < 1e-12 { keep(gamma_tilde(n, beta)) } else { None },
            keep(beta_tilde(k, beta, diam)),
            keep(alpha_lower_bound(n, k, beta, diam)),
        ),
        None => (None, None, None, None),
    };
    if k.is_none() {
        notes.push("weight-dependent constants need k".into());
    }
    Ok(ConstantsTable {
        k1: c.k1,
        k2: c.k2,
        k3: c.k3,
        s: c.s,
        omega_n: c.omega_n,
        a_k,
        gamma_tilde: gt,
        beta_tilde: bt,
        alpha_lower: al,
        regime: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    })
}

/// Hardy check at `t = 0` on `samples` random zero-trace functions drawn
/// from `seed`; returns the number of violations and the largest ratio
/// `lhs/rhs`.
pub fn hardy_random_sweep(lab: &LabConfig, samples: usize, seed: u64) -> Result<(usize, f64)> {
    let grid = lab.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = free_range(&grid);
    let free_len = hi - lo;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let free: Vec<f64> = (0..free_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = DiscreteFunction::from_free(grid.clone(), &free);
        let r = hardy_check(&u, 0.0)?;
        if !r.holds {
            violations += 1;
        }
        if r.rhs > 0.0 {
            worst = worst.max(r.lhs / r.rhs);
        }
    }
    Ok((violations, worst))
}

fn run_constants(c: &ExperimentConfig) -> Result<Outcome> {
    let d = c.lab.domain()?;
    let table = constants_table(c.lab.n, Some(c.lab.k), c.lab.beta, d.diam())?;
    let fresh = SobolevConstants::compute(c.lab.n)?;
    let mut checks = vec![
        OracleCheck::relative("K1 cache vs recompute", fresh.k1, table.k1, 0.0),
        OracleCheck::relative("K2 cache vs recompute", fresh.k2, table.k2, 0.0),
        OracleCheck::relative("omega_n closed form", omega(c.lab.n)?, table.omega_n, 1e-14),
    ];
    let samples = c.params.hardy_samples.unwrap_or(20);
    if samples > 0 && !d.is_annulus() {
        let (violations, worst) = hardy_random_sweep(&c.lab, samples, c.seed)?;
        checks.push(OracleCheck {
            name: format!("Hardy inequality on {samples} random functions"),
            expected: 0.0,
            observed: violations as f64,
            tolerance: 0.0,
            pass: violations == 0 && worst <= 1.0 + crate::constants::HARDY_SLACK,
        });
    }
    Ok((serde_json::to_value(&table)?, None, checks))
}

fn expansion_eps(c: &ExperimentConfig) -> Result<Vec<f64>> {
    let (lo, hi) = default_eps_range(c.lab.n);
    log_eps_list(c.params.eps_min.unwrap_or(lo), c.params.eps_max.unwrap_or(hi), c.params.points.unwrap_or(8))
}

fn default_eps_range(n: usize) -> (f64, f64) {
    if n == 3 {
        (1e-6, 1e-3)
    } else {
        (1e-5, 1e-3)
    }
}

fn run_expansion(c: &ExperimentConfig) -> Result<Outcome> {
    let w = c.lab.weight()?;
    let d = c.lab.domain()?;
    let lambda = c.params.lambda.unwrap_or(0.0);
    let integrals = sweep_integrals(&w, &d, &expansion_eps(c)?)?;
    let fit = fit_expansion(&w, lambda, &d, &integrals)?;
    let table = Table {
        header: ["eps", "dirichlet", "l2", "lq", "Q_lambda", "regime_prediction"].map(String::from).to_vec(),
        rows: fit
            .samples
            .iter()
            .map(|s| vec![s.eps, s.dirichlet, s.l2, s.lq, s.q_lambda, s.regime_prediction])
            .collect(),
    };
    let s = SobolevConstants::cached(c.lab.n)?.s;
    let checks = vec![
        OracleCheck::relative("leading coefficient vs p0 S", w.p0 * s, fit.leading, 1e-4),
        OracleCheck::relative("slope vs prediction", fit.predicted_slope, fit.slope, 0.1),
    ];
    Ok((serde_json::to_value(&fit)?, Some(table), checks))
}

fn minimize_options(c: &ExperimentConfig) -> MinimizeOptions {
    MinimizeOptions { refine: c.params.refine.unwrap_or(true), ..MinimizeOptions::default() }
}

fn run_minimize(c: &ExperimentConfig) -> Result<Outcome> {
    let lambda = c.require("lambda", c.params.lambda)?;
    let (w, d, g) = (c.lab.weight()?, c.lab.domain()?, c.lab.grid()?);
    let rep = minimize_s_lambda(&w, &d, &g, lambda, &minimize_options(c))?;
    Ok((serde_json::to_value(&rep)?, None, Vec::new()))
}

fn run_eigen(c: &ExperimentConfig) -> Result<Outcome> {
    let (w, d, g) = (c.lab.weight()?, c.lab.domain()?, c.lab.grid()?);
    let rep = eigen_lambda1_div(&w, &d, &g)?;
    let mut checks = Vec::new();
    if c.lab.n == 3 && w.beta == 0.0 && !d.is_annulus() {
        let exact = w.p0 * (std::f64::consts::PI / d.radius()).powi(2);
        checks.push(OracleCheck::relative("constant weight, n=3: p0 (pi/R)^2", exact, rep.lambda1_div, 1e-3));
    }
    Ok((serde_json::to_value(&rep)?, None, checks))
}

fn run_curve(c: &ExperimentConfig) -> Result<Outcome> {
    let from = c.require("lambda_from", c.params.lambda_from)?;
    let to = c.require("lambda_to", c.params.lambda_to)?;
    let steps = c.params.steps.unwrap_or(20);
    if steps < 2 || !(to > from) {
        return Err(config_err("steps", "need steps >= 2 and lambda_to > lambda_from"));
    }
    let lambdas: Vec<f64> = (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect();
    let (w, d, g) = (c.lab.weight()?, c.lab.domain()?, c.lab.grid()?);
    let pts = s_lambda_curve(&w, &d, &g, &lambdas)?;
    let table = Table {
        header: ["lambda", "S_lambda", "concentration_radius_90", "iterations", "converged"]
            .map(String::from)
            .to_vec(),
        rows: pts
            .iter()
            .map(|p| {
                vec![p.lambda, p.s_lambda, p.concentration_radius_90, p.iterations as f64, f64::from(u8::from(p.converged))]
            })
            .collect(),
    };
    let monotone = pts.windows(2).all(|p| p[1].s_lambda <= p[0].s_lambda * (1.0 + 1e-9));
    let checks = vec![OracleCheck {
        name: "S_lambda nonincreasing".into(),
        expected: 1.0,
        observed: f64::from(u8::from(monotone)),
        tolerance: 0.0,
        pass: monotone,
    }];
    Ok((serde_json::to_value(&pts)?, Some(table), checks))
}

fn run_annulus(c: &ExperimentConfig) -> Result<Outcome> {
    let mut lab = c.lab.clone();
    lab.domain = crate::config::DomainChoice::Annulus;
    let (w, g) = (lab.weight()?, lab.grid()?);
    let rep = annulus_solve(&w, lab.n, lab.eps_hole, lab.radius, &g)?;
    Ok((serde_json::to_value(&rep)?, None, Vec::new()))
}

fn run_certify(c: &ExperimentConfig) -> Result<Outcome> {
    let lambda = c.require("lambda", c.params.lambda)?;
    let (w, d, g) = (c.lab.weight()?, c.lab.domain()?, c.lab.grid()?);
    let mut th = ThresholdSet::analytic(&w, &d)?;
    th.lambda1_div = Some(eigen_lambda1_div(&w, &d, &g)?.lambda1_div);
    let cert = certify_nonexistence(&w, &d, &g, lambda, &th)?;
    Ok((json!({ "certificate": cert, "thresholds": th }), None, Vec::new()))
}

fn run_family(c: &ExperimentConfig) -> Result<Outcome> {
    let (w, d) = (c.lab.weight()?, c.lab.domain()?);
    let big_r0 = c.params.big_r0.unwrap_or(0.5 * c.lab.radius);
    let r0 = match c.params.r0 {
        Some(r) => r,
        None => choose_r0(&w, c.lab.n, c.params.family_theta.unwrap_or(0.1), big_r0)?,
    };
    let fp = FamilyParams {
        t: c.params.t.unwrap_or(0.0),
        sigma: FamilyParams::axis(c.lab.n, c.params.sigma_axis.unwrap_or(0))?,
        scale_index: c.params.scale_index.unwrap_or(64),
        r0,
        big_r0,
    };
    let rep = family_report(&fp, &w, &d)?;
    let checks = vec![OracleCheck::relative("E vs concentration limit", rep.energy_limit, rep.energy, 0.05)];
    Ok((serde_json::to_value(&rep)?, None, checks))
}

fn run_pohozaev(c: &ExperimentConfig) -> Result<Outcome> {
    let lambda = c.require("lambda", c.params.lambda)?;
    let (w, d) = (c.lab.weight()?, c.lab.domain()?);
    let u = match &c.params.solution {
        Some(path) => {
            let u: DiscreteFunction = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            u.grid.matches(&d)?;
            u
        }
        None => {
            let rep = minimize_s_lambda(&w, &d, &c.lab.grid()?, lambda, &minimize_options(c))?;
            reconstruct_solution(&rep, &w, &d)?.solution
        }
    };
    let rep = pohozaev_residual(&u, &w, &d, lambda)?;
    Ok((serde_json::to_value(&rep)?, None, Vec::new()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predicate {
    /// Sign of the fitted first-order coefficient of the bubble expansion.
    SlopeSign,
    /// Whether the discrete minimizer is classified as achieved.
    Achieved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub evaluations: usize,
}

/// Bisects `[λ_lo, λ_hi]` for the flip of `predicate` down to width
/// `1e-3 (λ_hi - λ_lo)`.
pub fn bisect_threshold(config: &ExperimentConfig, lambda_lo: f64, lambda_hi: f64, predicate: Predicate) -> Result<Bracket> {
    if !(lambda_hi > lambda_lo) {
        return Err(invalid("bisection needs lambda_lo < lambda_hi"));
    }
    let w = config.lab.weight()?;
    let d = config.lab.domain()?;
    let mut evaluations = 0;
    let integrals: Vec<BubbleIntegrals> = match predicate {
        Predicate::SlopeSign => sweep_integrals(&w, &d, &expansion_eps(config)?)?,
        Predicate::Achieved => Vec::new(),
    };
    let grid = config.lab.grid()?;
    let opts = MinimizeOptions::default();
    let mut eval = |lambda: f64| -> Result<bool> {
        evaluations += 1;
        match predicate {
            Predicate::SlopeSign => Ok(fit_expansion(&w, lambda, &d, &integrals)?.slope > 0.0),
            Predicate::Achieved => Ok(minimize_s_lambda(&w, &d, &grid, lambda, &opts)?.achieved == Some(true)),
        }
    };
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    let f_lo = eval(lo)?;
    if eval(hi)? == f_lo {
        return Err(Error::Precondition(format!("predicate has the same value ({f_lo}) at both ends of [{lo}, {hi}]")));
    }
    let width = 1e-3 * (lambda_hi - lambda_lo);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? == f_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket { lo, hi, estimate: 0.5 * (lo + hi), evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyTarget {
    Minimize,
    Eigen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub elements: usize,
    pub value: f64,
    pub radius_90: Option<f64>,
    /// `|value - reference|` when a reference is known.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTable {
    pub target: StudyTarget,
    pub rows: Vec<RefineRow>,
    /// Least-squares slope of `log error` against `log(1/M)`, from the
    /// reference when given, else from successive differences.
    pub observed_order: Option<f64>,
}

/// Reruns `target` on each grid size in `m_list` (in parallel).
pub fn refine_study(
    config: &ExperimentConfig,
    m_list: &[usize],
    target: StudyTarget,
    reference: Option<f64>,
) -> Result<RefineTable> {
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms.len() < 2 {
        return Err(invalid("refinement study needs at least two grid sizes"));
    }
    let w = config.lab.weight()?;
    let d = config.lab.domain()?;
    let lambda = match target {
        StudyTarget::Minimize => config.require("lambda", config.params.lambda)?,
        StudyTarget::Eigen => 0.0,
    };
    let opts = MinimizeOptions { refine: false, ..MinimizeOptions::default() };
    let rows = ms
        .par_iter()
        .map(|&m| -> Result<RefineRow> {
            let g = config.lab.grid_with(m)?;
            let (value, radius_90) = match target {
                StudyTarget::Eigen => (eigen_lambda1_div(&w, &d, &g)?.lambda1_div, None),
                StudyTarget::Minimize => {
                    let r = minimize_s_lambda(&w, &d, &g, lambda, &opts)?;
                    (r.s_lambda_estimate, Some(r.concentration_radius_90))
                }
            };
            Ok(RefineRow { elements: m, value, radius_90, error: reference.map(|r| (value - r).abs()) })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = match reference {
        Some(_) => rows.iter().map(|r| (r.elements as f64, r.error.unwrap_or(0.0))).collect(),
        None => rows.windows(2).map(|p| (p[1].elements as f64, (p[1].value - p[0].value).abs())).collect(),
    };
    Ok(RefineTable { target, rows, observed_order: loglog_order(&pairs) })
}

fn loglog_order(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs.iter().filter(|p| p.1 > 0.0).map(|&(m, e)| ((1.0 / m).ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("kind={kind}\nn=3\nbeta=1\nk=2\ngrid_M=64\nhardy_samples=5\n")).unwrap()
    }

    #[test]
    fn parse_emit_roundtrip() {
        let mut c = cfg("minimize");
        c.params.lambda = Some(2.5);
        c.params.solution = Some(PathBuf::from("u.json"));
        c.output = Some(PathBuf::from("out.json"));
        c.seed = 7;
        assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::parse("kind=eigen\nlambdda=3\n").unwrap_err().to_string();
        assert!(e.contains("`lambdda`"), "{e}");
        let e = ExperimentConfig::parse("n=3\n").unwrap_err().to_string();
        assert!(e.contains("`kind`"), "{e}");
    }

    #[test]
    fn cache_key_tracks_config() {
        let a = cfg("eigen");
        let mut b = a.clone();
        assert_eq!(a.cache_key().unwrap(), b.cache_key().unwrap());
        b.output = Some(PathBuf::from("elsewhere.json"));
        assert_eq!(a.cache_key().unwrap(), b.cache_key().unwrap());
        b.seed = 1;
        assert_ne!(a.cache_key().unwrap(), b.cache_key().unwrap());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let t = Table {
            header: vec!["a".into(), "b".into()],
            rows: vec![vec![0.1, -1.0 / 3.0], vec![1e-300, 6.02214076e23]],
        };
        assert_eq!(Table::from_csv(&t.to_csv().unwrap()).unwrap(), t);
    }

    #[test]
    fn loglog_order_of_quadratic_error() {
        let pairs: Vec<(f64, f64)> = [16.0, 32.0, 64.0].iter().map(|&m| (m, 3.0 / (m * m))).collect();
        assert!((loglog_order(&pairs).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_rejects_constant_predicate() {
        let mut c = cfg("expansion");
        c.lab.n = 5;
        let e = bisect_threshold(&c, 0.0, 1.0, Predicate::SlopeSign).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }

    #[test]
    fn constants_run_checks_pass() {
        let rec = run(&cfg("constants"), None).unwrap();
        assert!(rec.checks.iter().all(|c| c.pass), "{:?}", rec.checks);
        assert!(rec.payload["K3"].is_null());
        assert!(rec.payload["regime"].as_str().unwrap().contains("K3"));
    }
}
