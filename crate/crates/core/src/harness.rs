//! Experiment configuration, scenario runs, CSV bundles and comparison
//! against the published tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{build_calibration, Calibration, PARAMETERS};
use crate::error::{Error, Result};
use crate::model::{Scenario, Var};
use crate::perturbation::{solve_policy, Order};
use crate::reference::{reference_table, TableId, COLUMNS};
use crate::simulate::{
    girf, irf, moments, simulate_pruned, stochastic_steady_state, IrfSet, SimulationReport, DEFAULT_BURN_IN,
    DEFAULT_HORIZON, MEAN_ROWS, STD_ROWS,
};
use crate::steady_state::{solve_steady_state, SteadyState};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_IRF_HORIZON: usize = 100;
pub const DEFAULT_GIRF_DRAWS: usize = 500;
/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "CTAX_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum XiSpec {
    Value(f64),
    /// Uniform redistribution, `ξ = γ`.
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScenarioSpec {
    Bau,
    Unconstrained,
    Constrained(XiSpec),
}

impl ScenarioSpec {
    /// The five regimes reported in the tables, in column order.
    pub const TABLE: [ScenarioSpec; 5] = [
        ScenarioSpec::Bau,
        ScenarioSpec::Unconstrained,
        ScenarioSpec::Constrained(XiSpec::Value(0.0)),
        ScenarioSpec::Constrained(XiSpec::Gamma),
        ScenarioSpec::Constrained(XiSpec::Value(1.0)),
    ];

    pub fn key(&self) -> String {
        match self {
            ScenarioSpec::Bau => "bau".into(),
            ScenarioSpec::Unconstrained => "unconstrained".into(),
            ScenarioSpec::Constrained(XiSpec::Gamma) => "constrained:gamma".into(),
            ScenarioSpec::Constrained(XiSpec::Value(x)) => format!("constrained:{x}"),
        }
    }

    pub fn resolve(&self, calib: &Calibration) -> Scenario {
        match *self {
            ScenarioSpec::Bau => Scenario::Bau,
            ScenarioSpec::Unconstrained => Scenario::Unconstrained,
            ScenarioSpec::Constrained(XiSpec::Gamma) => Scenario::Constrained { xi: calib.gamma },
            ScenarioSpec::Constrained(XiSpec::Value(xi)) => Scenario::Constrained { xi },
        }
    }
}

impl FromStr for ScenarioSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown scenario `{s}` (expected bau, unconstrained or constrained:<xi|gamma>)"));
        match s.trim() {
            "bau" => Ok(ScenarioSpec::Bau),
            "unconstrained" => Ok(ScenarioSpec::Unconstrained),
            other => {
                let xi = other.strip_prefix("constrained:").ok_or_else(bad)?;
                if xi == "gamma" {
                    return Ok(ScenarioSpec::Constrained(XiSpec::Gamma));
                }
                let v: f64 = xi.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("xi = {v} outside [0, 1]")));
                }
                Ok(ScenarioSpec::Constrained(XiSpec::Value(v)))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    preset: Option<String>,
    scenarios: Option<Vec<String>>,
    seed: Option<u64>,
    horizon: Option<usize>,
    burn_in: Option<usize>,
    irf_horizon: Option<usize>,
    shock_sds: Option<f64>,
    order: Option<u8>,
    girf: Option<bool>,
    girf_draws: Option<usize>,
    output: Option<PathBuf>,
    compare: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub preset: String,
    pub overrides: Vec<(String, f64)>,
    pub scenarios: Vec<ScenarioSpec>,
    pub seed: u64,
    pub horizon: usize,
    pub burn_in: usize,
    pub irf_horizon: usize,
    pub shock_sds: f64,
    pub order: Order,
    pub girf: bool,
    pub girf_draws: usize,
    pub output: PathBuf,
    pub compare: bool,
}

/// Output root: `$CTAX_OUT` if set, else `ctax-out` in the working directory.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ctax-out"))
}

impl ExperimentConfig {
    /// Baseline preset, all five table scenarios, default simulation design.
    pub fn preset(preset: &str) -> Result<Self> {
        let cfg = Self {
            name: preset.to_string(),
            preset: preset.to_string(),
            overrides: Vec::new(),
            scenarios: ScenarioSpec::TABLE.to_vec(),
            seed: DEFAULT_SEED,
            horizon: DEFAULT_HORIZON,
            burn_in: DEFAULT_BURN_IN,
            irf_horizon: DEFAULT_IRF_HORIZON,
            shock_sds: 1.0,
            order: Order::Second,
            girf: false,
            girf_draws: DEFAULT_GIRF_DRAWS,
            output: default_output_root().join(preset),
            compare: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let e = raw.experiment;
        let preset = e.preset.unwrap_or_else(|| "baseline".into());
        let name = e.name.unwrap_or_else(|| preset.clone());
        let scenarios = match e.scenarios {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?,
            None => ScenarioSpec::TABLE.to_vec(),
        };
        let order = match e.order {
            None => Order::Second,
            Some(k) => Order::from_int(k).ok_or_else(|| Error::Config(format!("order must be 1 or 2, got {k}")))?,
        };
        let cfg = Self {
            output: e.output.unwrap_or_else(|| default_output_root().join(&name)),
            name,
            preset,
            overrides: raw.overrides.into_iter().collect(),
            scenarios,
            seed: e.seed.unwrap_or(DEFAULT_SEED),
            horizon: e.horizon.unwrap_or(DEFAULT_HORIZON),
            burn_in: e.burn_in.unwrap_or(DEFAULT_BURN_IN),
            irf_horizon: e.irf_horizon.unwrap_or(DEFAULT_IRF_HORIZON),
            shock_sds: e.shock_sds.unwrap_or(1.0),
            order,
            girf: e.girf.unwrap_or(false),
            girf_draws: e.girf_draws.unwrap_or(DEFAULT_GIRF_DRAWS),
            compare: e.compare.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn calibration(&self) -> Result<Calibration> {
        let pairs: Vec<(&str, f64)> = self.overrides.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        build_calibration(&self.preset, &pairs)
    }

    /// Checks everything that can be checked before solving.
    pub fn validate(&self) -> Result<()> {
        let calib = self.calibration()?;
        if self.scenarios.is_empty() {
            return Err(Error::Config("scenario list is empty".into()));
        }
        for s in &self.scenarios {
            crate::model::Model::new(s.resolve(&calib), calib.clone())?;
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !self.shock_sds.is_finite() {
            return Err(Error::Config("shock_sds must be finite".into()));
        }
        if self.girf && self.girf_draws == 0 {
            return Err(Error::Config("girf_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything computed for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub key: String,
    pub scenario: Scenario,
    pub steady_state: SteadyState,
    pub n_stable: usize,
    pub max_stable_modulus: f64,
    pub sss_iterations: usize,
    pub report: SimulationReport,
    pub irf: IrfSet,
    pub seconds: f64,
}

/// Solves, simulates and computes impulse responses for one scenario.
pub fn run_scenario(calib: &Calibration, spec: ScenarioSpec, cfg: &ExperimentConfig) -> Result<ScenarioRun> {
    let start = Instant::now();
    let scenario = spec.resolve(calib);
    let ss = solve_steady_state(scenario, calib)?;
    let policy = solve_policy(&ss, cfg.order)?;
    let sss = stochastic_steady_state(&policy)?;
    let paths = simulate_pruned(&policy, cfg.horizon, cfg.burn_in, cfg.seed)?;
    let report = moments(&paths, calib.theta1, calib.theta2, &sss.values)?;
    let irf = if cfg.girf {
        girf(&policy, cfg.shock_sds, cfg.irf_horizon, cfg.girf_draws, cfg.burn_in, cfg.seed)?
    } else {
        irf(&policy, &sss, cfg.shock_sds, cfg.irf_horizon)?
    };
    let max_stable_modulus = policy.eigenvalues[..policy.n_stable]
        .iter()
        .map(|(r, i)| r.hypot(*i))
        .fold(0.0, f64::max);
    Ok(ScenarioRun {
        key: spec.key(),
        scenario,
        n_stable: policy.n_stable,
        max_stable_modulus,
        sss_iterations: sss.iterations,
        steady_state: ss,
        report,
        irf,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub key: String,
    pub result: Result<ScenarioRun>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub calibration: Calibration,
    pub outcomes: Vec<ScenarioOutcome>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &Error)> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().err().map(|e| (o.key.as_str(), e)))
    }

    pub fn run(&self, key: &str) -> Option<&ScenarioRun> {
        self.outcomes.iter().find(|o| o.key == key).and_then(|o| o.result.as_ref().ok())
    }

    pub fn mean(&self, key: &str, row: &str) -> Option<f64> {
        self.run(key)?.report.mean(row).map(|m| m.value)
    }
}

/// Runs every scenario in parallel. Solver errors are kept per scenario.
pub fn run_scenarios(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let calib = cfg.calibration()?;
    let outcomes = cfg
        .scenarios
        .par_iter()
        .map(|&spec| ScenarioOutcome { key: spec.key(), result: run_scenario(&calib, spec, cfg) })
        .collect();
    Ok(ExperimentReport { config: cfg.clone(), calibration: calib, outcomes })
}

/// Runs the experiment and writes its bundle to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_scenarios(cfg)?;
    write_bundle(&report, &cfg.output)?;
    Ok(report)
}

/// Computes only the impulse responses of every scenario and writes one
/// CSV per scenario plus the manifest.
pub fn irf_experiment(cfg: &ExperimentConfig) -> Result<Vec<(String, Result<IrfSet>)>> {
    cfg.validate()?;
    let calib = cfg.calibration()?;
    let sets: Vec<(String, Result<IrfSet>)> = cfg
        .scenarios
        .par_iter()
        .map(|spec| {
            let set = (|| {
                let ss = solve_steady_state(spec.resolve(&calib), &calib)?;
                let policy = solve_policy(&ss, cfg.order)?;
                if cfg.girf {
                    girf(&policy, cfg.shock_sds, cfg.irf_horizon, cfg.girf_draws, cfg.burn_in, cfg.seed)
                } else {
                    irf(&policy, &stochastic_steady_state(&policy)?, cfg.shock_sds, cfg.irf_horizon)
                }
            })();
            (spec.key(), set)
        })
        .collect();
    fs::create_dir_all(&cfg.output).map_err(|e| io_err(&cfg.output, e))?;
    let mut m = String::new();
    let _ = writeln!(m, "preset = {}\nseed = {}\nirf_horizon = {}\nshock_sds = {}", cfg.preset, cfg.seed, cfg.irf_horizon, cfg.shock_sds);
    for (key, set) in &sets {
        match set {
            Ok(s) => {
                write_irf(&cfg.output.join(irf_file_name(key)), cfg.seed, s)?;
                let _ = writeln!(m, "{key}.status = ok");
            }
            Err(e) => {
                let _ = writeln!(m, "{key}.status = failed: {e}");
            }
        }
    }
    fs::write(cfg.output.join("manifest.txt"), m).map_err(|e| io_err(&cfg.output, e))?;
    Ok(sets)
}

/// Formats with six significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let mag: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if !(-5..15).contains(&mag) {
        return sci;
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn write_table(
    path: &Path,
    seed: u64,
    rows: &[&str],
    keys: &[String],
    cell: impl Fn(usize, &str) -> Option<f64>,
) -> Result<()> {
    let mut buf = format!("# seed = {seed}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["variable".to_string()];
        header.extend(keys.iter().cloned());
        w.write_record(&header).map_err(|e| io_err(path, e))?;
        for row in rows {
            let mut rec = vec![row.to_string()];
            rec.extend((0..keys.len()).map(|k| cell(k, row).map_or("NA".into(), fmt_sig)));
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// File name for a scenario's impulse responses.
pub fn irf_file_name(key: &str) -> String {
    format!("irf_{}.csv", key.replace([':', '.'], "_"))
}

fn write_irf(path: &Path, seed: u64, set: &IrfSet) -> Result<()> {
    let mut buf = format!("# seed = {seed}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["h".to_string()];
        header.extend(set.names.iter().cloned());
        w.write_record(&header).map_err(|e| io_err(path, e))?;
        for (h, row) in set.data.iter().enumerate() {
            let mut rec = vec![h.to_string()];
            rec.extend(row.iter().map(|v| fmt_sig(*v)));
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Writes means, standard deviations, their standard errors, one IRF file
/// per scenario and the manifest.
pub fn write_bundle(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg = &report.config;
    let keys: Vec<String> = report.outcomes.iter().map(|o| o.key.clone()).collect();
    let runs: Vec<Option<&ScenarioRun>> = report.outcomes.iter().map(|o| o.result.as_ref().ok()).collect();
    let runs = &runs;
    let mean = |se: bool| {
        move |k: usize, row: &str| {
            let m = runs[k]?.report.mean(row)?;
            Some(if se { m.se } else { m.value })
        }
    };
    let std = |se: bool| {
        move |k: usize, row: &str| {
            let m = runs[k]?.report.log_std(row)?;
            if m.flag.is_some() {
                return None;
            }
            Some(if se { m.se } else { m.value })
        }
    };
    write_table(&dir.join("means.csv"), cfg.seed, &MEAN_ROWS, &keys, mean(false))?;
    write_table(&dir.join("means_se.csv"), cfg.seed, &MEAN_ROWS, &keys, mean(true))?;
    write_table(&dir.join("stds.csv"), cfg.seed, &STD_ROWS, &keys, std(false))?;
    write_table(&dir.join("stds_se.csv"), cfg.seed, &STD_ROWS, &keys, std(true))?;
    for run in runs.iter().flatten() {
        write_irf(&dir.join(irf_file_name(&run.key)), cfg.seed, &run.irf)?;
    }
    fs::write(dir.join("manifest.txt"), manifest(report)).map_err(|e| io_err(dir, e))
}

fn manifest(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let mut m = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(m, "{k} = {v}");
    };
    kv("name", cfg.name.clone());
    kv("preset", cfg.preset.clone());
    kv("seed", cfg.seed.to_string());
    kv("horizon", cfg.horizon.to_string());
    kv("burn_in", cfg.burn_in.to_string());
    kv("order", if cfg.order == Order::First { "1" } else { "2" }.into());
    kv("irf_horizon", cfg.irf_horizon.to_string());
    kv("shock_sds", cfg.shock_sds.to_string());
    kv("irf_mode", if cfg.girf { format!("generalized ({} draws)", cfg.girf_draws) } else { "deterministic".into() });
    kv("scenarios", report.outcomes.iter().map(|o| o.key.as_str()).collect::<Vec<_>>().join(", "));
    for (k, v) in &cfg.overrides {
        kv(&format!("override.{k}"), v.to_string());
    }
    for p in PARAMETERS {
        if let Ok(v) = report.calibration.get(p) {
            kv(&format!("calibration.{p}"), v.to_string());
        }
    }
    for o in &report.outcomes {
        let k = &o.key;
        match &o.result {
            Ok(r) => {
                kv(&format!("{k}.status"), "ok".into());
                kv(&format!("{k}.steady_state_residual"), format!("{:e}", r.steady_state.residual_norm));
                kv(&format!("{k}.steady_state_iterations"), r.steady_state.iterations.to_string());
                kv(&format!("{k}.stable_roots"), r.n_stable.to_string());
                kv(&format!("{k}.max_stable_modulus"), r.max_stable_modulus.to_string());
                kv(&format!("{k}.sss_iterations"), r.sss_iterations.to_string());
                kv(&format!("{k}.seconds"), format!("{:.3}", r.seconds));
            }
            Err(e) => kv(&format!("{k}.status"), format!("failed: {e}")),
        }
    }
    m
}

/// Tables read back from a bundle directory.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub manifest: BTreeMap<String, String>,
    pub tables: BTreeMap<(String, String, String), f64>,
}

impl Bundle {
    pub fn preset(&self) -> Option<&str> {
        self.manifest.get("preset").map(String::as_str)
    }

    /// Cell of `means`, `means_se`, `stds` or `stds_se`.
    pub fn cell(&self, file: &str, row: &str, column: &str) -> Option<f64> {
        self.tables.get(&(file.to_string(), row.to_string(), column.to_string())).copied()
    }
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    let mpath = dir.join("manifest.txt");
    let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            bundle.manifest.insert(k.to_string(), v.to_string());
        }
    }
    for file in ["means", "means_se", "stds", "stds_se"] {
        let path = dir.join(format!("{file}.csv"));
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).map_err(|e| io_err(&path, e))?;
        let header: Vec<String> = r.headers().map_err(|e| io_err(&path, e))?.iter().map(String::from).collect();
        for rec in r.records() {
            let rec = rec.map_err(|e| io_err(&path, e))?;
            let row = rec.get(0).unwrap_or_default().to_string();
            for (col, v) in header.iter().zip(rec.iter()).skip(1) {
                if let Ok(x) = v.parse::<f64>() {
                    bundle.tables.insert((file.to_string(), row.clone(), col.clone()), x);
                }
            }
        }
    }
    Ok(bundle)
}

/// Comparison tolerances.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Relative tolerance for quantity rows, widened by half a unit of the
    /// last printed digit.
    pub quantity_rel: f64,
    /// Absolute tolerance for the tax and social-cost rows.
    pub price_abs: f64,
    pub welfare_rel: f64,
    pub std_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quantity_rel: 0.01, price_abs: 0.002, welfare_rel: 0.05, std_rel: 0.15 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub table: TableId,
    pub source: &'static str,
    pub row: &'static str,
    pub column: &'static str,
    pub reference: f64,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub tolerance: f64,
    /// Whether the Monte-Carlo standard error is below half the tolerance.
    pub se_ok: bool,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub preset: String,
    pub table: TableId,
    pub cells: Vec<CellResult>,
}

impl Comparison {
    pub fn pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| !c.pass)
    }

    pub fn listing(&self) -> String {
        let mut s = String::new();
        let n_fail = self.failures().count();
        let _ = writeln!(s, "{} {} vs {}: {} cells, {} failed", self.preset, self.table.as_str(), self.cells.first().map_or("-", |c| c.source), self.cells.len(), n_fail);
        for c in &self.cells {
            let _ = writeln!(
                s,
                "  {:4} {:18} {:18} ref {:>10} got {:>10} se {:>9} |d| {:>9} tol {:>9} {}",
                if c.pass { "ok" } else { "FAIL" },
                c.row,
                c.column,
                fmt_sig(c.reference),
                c.value.map_or("NA".into(), fmt_sig),
                c.se.map_or("NA".into(), fmt_sig),
                fmt_sig(c.abs_diff),
                fmt_sig(c.tolerance),
                c.note
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["table", "source", "row", "column", "reference", "value", "se", "abs_diff", "rel_diff", "tolerance", "se_ok", "pass", "note"])
            .map_err(|e| io_err(path, e))?;
        for c in &self.cells {
            w.write_record([
                self.table.as_str().to_string(),
                c.source.to_string(),
                c.row.to_string(),
                c.column.to_string(),
                fmt_sig(c.reference),
                c.value.map_or("NA".into(), fmt_sig),
                c.se.map_or("NA".into(), fmt_sig),
                fmt_sig(c.abs_diff),
                fmt_sig(c.rel_diff),
                fmt_sig(c.tolerance),
                c.se_ok.to_string(),
                c.pass.to_string(),
                c.note.clone(),
            ])
            .map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

fn structural_zero_cell(row: &str, column: &str) -> bool {
    matches!((row, column), ("log(tau_t)", "bau") | ("log(lambda^H_t)", "unconstrained"))
}

/// Compares a bundle against the embedded reference table of `preset`.
/// Cells absent from the bundle are reported as failures.
pub fn compare_to_reference(bundle: &Bundle, preset: &str, table: TableId, tol: &Tolerances) -> Result<Comparison> {
    let reference = reference_table(preset, table).ok_or_else(|| Error::UnknownPreset(preset.to_string()))?;
    let (file, se_file) = match table {
        TableId::Stds => ("stds", "stds_se"),
        _ => ("means", "means_se"),
    };
    let cells = reference
        .into_iter()
        .map(|e| {
            let r = e.value();
            let value = bundle.cell(file, e.row, e.column);
            let se = bundle.cell(se_file, e.row, e.column);
            let exact = table == TableId::Stds && structural_zero_cell(e.row, e.column);
            let (tolerance, note) = if exact {
                (0.0, "structural zero")
            } else {
                match table {
                    TableId::Means if matches!(e.row, "tau_t" | "V^X_t") => (tol.price_abs, "absolute"),
                    TableId::Means => (tol.quantity_rel * r.abs() + e.half_unit(), "relative + rounding"),
                    TableId::Welfare => (tol.welfare_rel * r.abs(), "relative"),
                    TableId::Stds => (tol.std_rel * r.abs(), "relative"),
                }
            };
            let Some(v) = value else {
                return CellResult {
                    table,
                    source: e.source,
                    row: e.row,
                    column: e.column,
                    reference: r,
                    value: None,
                    se,
                    abs_diff: f64::NAN,
                    rel_diff: f64::NAN,
                    tolerance,
                    se_ok: false,
                    pass: false,
                    note: "missing or flagged in bundle".into(),
                };
            };
            let abs_diff = (v - r).abs();
            let rel_diff = if r != 0.0 { abs_diff / r.abs() } else { f64::NAN };
            let se_ok = exact || se.is_some_and(|s| s <= 0.5 * tolerance);
            let within = if exact { v == 0.0 } else { abs_diff <= tolerance };
            let mut note = note.to_string();
            if !se_ok {
                note.push_str("; standard error above half the tolerance");
            }
            CellResult {
                table,
                source: e.source,
                row: e.row,
                column: e.column,
                reference: r,
                value: Some(v),
                se,
                abs_diff,
                rel_diff,
                tolerance,
                se_ok,
                pass: within && se_ok,
                note,
            }
        })
        .collect();
    Ok(Comparison { preset: preset.to_string(), table, cells })
}

/// Bundle built from an in-memory report, equivalent to reading the files
/// back after [`write_bundle`] up to the six-digit rounding.
pub fn bundle_from_report(report: &ExperimentReport) -> Bundle {
    let mut b = Bundle::default();
    b.manifest.insert("preset".into(), report.config.preset.clone());
    b.manifest.insert("seed".into(), report.config.seed.to_string());
    for o in &report.outcomes {
        let Ok(run) = &o.result else { continue };
        for m in &run.report.means {
            b.tables.insert(("means".into(), m.name.clone(), o.key.clone()), m.value);
            b.tables.insert(("means_se".into(), m.name.clone(), o.key.clone()), m.se);
        }
        for m in run.report.log_stds.iter().filter(|m| m.flag.is_none()) {
            b.tables.insert(("stds".into(), m.name.clone(), o.key.clone()), m.value);
            b.tables.insert(("stds_se".into(), m.name.clone(), o.key.clone()), m.se);
        }
    }
    b
}

/// Outcome of a qualitative property check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

fn need<'a>(report: &'a ExperimentReport, key: &str) -> std::result::Result<&'a ScenarioRun, Check> {
    report.run(key).ok_or_else(|| Check::new(key, false, format!("scenario {key} missing or failed")))
}

const POLICY: [&str; 4] = ["unconstrained", "constrained:0", "constrained:gamma", "constrained:1"];
const CONSTRAINED: [&str; 3] = ["constrained:0", "constrained:gamma", "constrained:1"];

/// Ordering of taxes, emissions, the social cost and welfare across regimes.
pub fn ordering_checks(report: &ExperimentReport) -> Vec<Check> {
    let m = |k: &str, row: &str| report.mean(k, row).unwrap_or(f64::NAN);
    let (t0, tg, t1) = (m("constrained:0", "tau_t"), m("constrained:gamma", "tau_t"), m("constrained:1", "tau_t"));
    let (e0, eg, e1) = (m("constrained:0", "E_t"), m("constrained:gamma", "E_t"), m("constrained:1", "E_t"));
    let (v0, vg, v1) = (m("constrained:0", "V^X_t"), m("constrained:gamma", "V^X_t"), m("constrained:1", "V^X_t"));
    let w_bau = m("bau", "W_t");
    let welfare: Vec<(&str, f64)> = POLICY.iter().map(|k| (*k, m(k, "W_t"))).collect();
    vec![
        Check::new("tax falls with xi", t0 > tg && tg > t1, format!("tau: {t0:.5} > {tg:.5} > {t1:.5}")),
        Check::new("emissions rise with xi", e0 < eg && eg < e1, format!("E: {e0:.4} < {eg:.4} < {e1:.4}")),
        Check::new("social cost highest at xi=0", v0 > vg && v0 > v1, format!("V^X: {v0:.5} vs {vg:.5}, {v1:.5}")),
        Check::new(
            "policy improves welfare",
            welfare.iter().all(|(_, w)| *w > w_bau),
            format!("W bau {w_bau:.3}; {welfare:?}"),
        ),
    ]
}

/// First index at which `path` is strictly positive.
fn first_positive(path: &[f64]) -> Option<usize> {
    path.iter().position(|v| *v > 0.0)
}

/// Signs and shapes of the responses to a positive TFP shock.
pub fn irf_checks(report: &ExperimentReport) -> Vec<Check> {
    let mut out = Vec::new();
    let impact = |k: &str, v: Var| need(report, k).map(|r| r.irf.data[0][v.idx()]);
    let all_keys = COLUMNS;
    for v in [Var::Y, Var::C, Var::I, Var::E] {
        let vals: Vec<_> = all_keys.iter().map(|k| impact(k, v)).collect();
        if let Some(Err(c)) = vals.iter().find(|x| x.is_err()) {
            out.push(c.clone());
            continue;
        }
        let vals: Vec<f64> = vals.into_iter().map(|x| x.unwrap()).collect();
        out.push(Check::new(&format!("{} rises at impact", v.name()), vals.iter().all(|x| *x > 0.0), format!("{vals:?}")));
    }
    let unequal: Vec<&str> = std::iter::once("bau").chain(CONSTRAINED).collect();
    for (v, label) in [(Var::LamH, "lambdaH falls at impact"), (Var::VX, "V^X falls at impact")] {
        let vals: Vec<f64> = unequal.iter().map(|k| impact(k, v).unwrap_or(f64::NAN)).collect();
        out.push(Check::new(label, vals.iter().all(|x| *x < 0.0), format!("bau and constrained: {vals:?}")));
    }
    match need(report, "unconstrained") {
        Ok(r) => {
            let p = r.irf.path(Var::VX);
            let (peak, max) = p.iter().enumerate().fold((0, f64::MIN), |acc, (h, v)| if *v > acc.1 { (h, *v) } else { acc });
            let hump = p[0] > 0.0 && peak > 0 && peak + 1 < p.len() && p[p.len() - 1] < max;
            out.push(Check::new(
                "unconstrained V^X rises with a hump",
                hump,
                format!("impact {:.5}, peak {max:.5} at h={peak}, end {:.5}", p[0], p[p.len() - 1]),
            ));
        }
        Err(c) => out.push(c),
    }
    let unc = impact("unconstrained", Var::Tau).unwrap_or(f64::NAN);
    for k in ["constrained:gamma", "constrained:1"] {
        let t = impact(k, Var::Tau).unwrap_or(f64::NAN);
        out.push(Check::new(
            &format!("{k} tax strongly procyclical"),
            t > 0.0 && t > unc,
            format!("impact {t:.5} vs unconstrained {unc:.5}"),
        ));
    }
    match need(report, "constrained:0") {
        Ok(r) => {
            let p = r.irf.path(Var::Tau);
            let cross = first_positive(&p);
            out.push(Check::new(
                "constrained:0 tax turns positive within 5 periods",
                p[0] < 0.0 && cross.is_some_and(|h| h <= 5),
                format!("impact {:.5}, first positive at h={cross:?}", p[0]),
            ));
        }
        Err(c) => out.push(c),
    }
    out
}

/// Qualitative checks across the sensitivity presets. `runs` maps preset
/// name to its report and must include the baseline.
pub fn sensitivity_checks(runs: &BTreeMap<String, ExperimentReport>) -> Vec<Check> {
    let mut out = Vec::new();
    let m = |p: &str, k: &str, row: &str| runs.get(p).and_then(|r| r.mean(k, row)).unwrap_or(f64::NAN);
    let effects = |p: &str| {
        let t0 = m(p, "constrained:0", "tau_t");
        let t1 = m(p, "constrained:1", "tau_t");
        let tu = m(p, "unconstrained", "tau_t");
        (t0 - tu, t0 - t1)
    };
    let (base_prem, base_spread) = effects("baseline");
    let (lo_prem, lo_spread) = effects("gamma_low");
    let (hi_prem, hi_spread) = effects("gamma_high");
    out.push(Check::new(
        "fewer hand-to-mouth shrink the inequality effect on tau",
        lo_prem < base_prem && lo_spread < base_spread,
        format!("xi=0 premium {lo_prem:.5} vs {base_prem:.5}; xi spread {lo_spread:.5} vs {base_spread:.5}"),
    ));
    out.push(Check::new(
        "more hand-to-mouth grow the inequality effect on tau",
        hi_prem > base_prem && hi_spread > base_spread,
        format!("xi=0 premium {hi_prem:.5} vs {base_prem:.5}; xi spread {hi_spread:.5} vs {base_spread:.5}"),
    ));
    let (w0, w1) = (m("theta1_high", "constrained:0", "W_t"), m("theta1_high", "constrained:1", "W_t"));
    out.push(Check::new(
        "costly abatement favours redistribution to hand-to-mouth",
        w1 > w0,
        format!("W xi=1 {w1:.3} vs xi=0 {w0:.3}"),
    ));
    let tau_chi = m("chi_high", "unconstrained", "tau_t");
    out.push(Check::new(
        "high externality weight raises the unconstrained tax to about 0.045",
        (tau_chi - 0.045).abs() <= 0.003,
        format!("tau {tau_chi:.5}"),
    ));
    match runs.get("eps_high") {
        Some(r) => {
            let mut ok = true;
            let mut detail = String::new();
            for k in COLUMNS {
                let Some(run) = r.run(k) else {
                    ok = false;
                    let _ = write!(detail, "{k}: missing; ");
                    continue;
                };
                let vx = run.irf.path(Var::VX);
                let tau = run.irf.path(Var::Tau);
                let window = 20.min(vx.len());
                let vx_pos = vx[..window].iter().all(|v| *v > 0.0);
                let tau_pos = k == "bau" || tau[..window].iter().all(|v| *v > 0.0);
                ok &= vx_pos && tau_pos;
                let _ = write!(detail, "{k}: V^X {:+.4} tau {:+.4}; ", vx[0], tau[0]);
            }
            out.push(Check::new("adjustment costs make V^X and tau procyclical", ok, detail));
        }
        None => out.push(Check::new("adjustment costs make V^X and tau procyclical", false, "eps_high missing".into())),
    }
    out
}

/// Presets of the sensitivity suite, without the baseline.
pub const SENSITIVITY_PRESETS: [&str; 6] = ["gamma_low", "gamma_high", "theta1_high", "sigma_low", "chi_high", "eps_high"];

#[derive(Debug)]
pub struct SensitivityReport {
    pub runs: BTreeMap<String, ExperimentReport>,
    pub comparisons: Vec<Comparison>,
    pub checks: Vec<Check>,
}

impl SensitivityReport {
    pub fn solver_failures(&self) -> usize {
        self.runs.values().map(|r| r.failures().count()).sum()
    }
}

/// Runs the baseline and every sensitivity preset with the simulation
/// design of `template`, writing one bundle per preset under `outdir`.
pub fn sensitivity_suite(template: &ExperimentConfig, outdir: &Path) -> Result<SensitivityReport> {
    let mut runs = BTreeMap::new();
    let mut comparisons = Vec::new();
    for preset in std::iter::once("baseline").chain(SENSITIVITY_PRESETS) {
        let cfg = ExperimentConfig {
            name: preset.into(),
            preset: preset.into(),
            overrides: Vec::new(),
            scenarios: ScenarioSpec::TABLE.to_vec(),
            output: outdir.join(preset),
            ..template.clone()
        };
        let report = run_experiment(&cfg)?;
        let bundle = bundle_from_report(&report);
        for table in [TableId::Means, TableId::Welfare, TableId::Stds] {
            let c = compare_to_reference(&bundle, preset, table, &Tolerances::default())?;
            c.write_csv(&cfg.output.join(format!("comparison_{}.csv", table.as_str())))?;
            comparisons.push(c);
        }
        runs.insert(preset.to_string(), report);
    }
    let checks = sensitivity_checks(&runs);
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "{} | {} | {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    fs::write(outdir.join("qualitative.txt"), text).map_err(|e| io_err(outdir, e))?;
    Ok(SensitivityReport { runs, comparisons, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_strings_round_trip() {
        for s in ["bau", "unconstrained", "constrained:0", "constrained:gamma", "constrained:1", "constrained:0.5"] {
            assert_eq!(s.parse::<ScenarioSpec>().unwrap().key(), s);
        }
        assert!("constrained:2".parse::<ScenarioSpec>().is_err());
        assert!("planner".parse::<ScenarioSpec>().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [experiment]
            preset = "gamma_low"
            scenarios = ["bau", "constrained:gamma"]
            seed = 9
            output = "/tmp/x"

            [overrides]
            sigma = 3.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.horizon, DEFAULT_HORIZON);
        let c = cfg.calibration().unwrap();
        assert_eq!(c.gamma, 0.11);
        assert_eq!(c.sigma, 3.0);
        assert_eq!(cfg.scenarios[1].resolve(&c), Scenario::Constrained { xi: 0.11 });
    }

    #[test]
    fn config_errors_before_solving() {
        let bad = [
            "[experiment]\nscenarios = [\"nope\"]",
            "[experiment]\nscenarios = []",
            "[experiment]\npreset = \"nope\"",
            "[experiment]\norder = 3",
            "[experiment]\nhorizon = 0",
            "[experiment]\nunknown_key = 1",
            "[overrides]\nbogus = 1.0\n[experiment]",
            "[experiment]\n[overrides]\nbeta = 1.5",
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(1.0043219), "1.00432");
        assert_eq!(fmt_sig(477.50241), "477.502");
        assert_eq!(fmt_sig(-108.34567), "-108.346");
        assert_eq!(fmt_sig(0.020512345), "0.0205123");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(9.9999996), "10");
        assert_eq!(fmt_sig(-2276.50714), "-2276.51");
        assert_eq!(fmt_sig(f64::NAN), "NA");
        assert_eq!(fmt_sig(1.5e-9), "1.50000e-9");
    }

    #[test]
    fn missing_cells_fail_comparison() {
        let c = compare_to_reference(&Bundle::default(), "baseline", TableId::Means, &Tolerances::default()).unwrap();
        assert_eq!(c.cells.len(), 60);
        assert!(c.cells.iter().all(|c| !c.pass && c.value.is_none()));
        assert!(compare_to_reference(&Bundle::default(), "nope", TableId::Means, &Tolerances::default()).is_err());
    }
}
