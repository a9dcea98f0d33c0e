//! Run configuration, on-disk layout and the command implementations behind
//! the command line front end.
//!
//! Layout under the configured directories:
//!
//! ```text
//! data_dir/   manifest.json, <id>.csv (timestamp,power_kw,ghat_wm2,that_c)
//! model_dir/  <id>.model.json, <id>.trials.jsonl
//! report_dir/ report.txt, report.json, weights_<id>.csv, daily_curves.csv,
//!             consistency.json, simulate_<id>.csv, simulate_<id>.weights.jsonl
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::csv_io::{read_plant_csv, write_plant_csv};
use crate::ensemble::{
    append_weight_log, pool_forecasts, simulate_online, SimulationConfig, WeightLogEntry,
    DEFAULT_CYCLE_DAYS, DEFAULT_WINDOW_SAMPLES,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    pretrain_pool, run_consistency, run_leave_one_out_detailed, EvaluationConfig,
    EvaluationReport, FoldForecasts, Method,
};
use crate::par::Execution;
use crate::pipeline::{PipelineConfig, TrainedPlantModel};
use crate::synth::FleetSpec;
use crate::timeseries::{Mounting, PlantRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: "data".into(), model_dir: "models".into(), report_dir: "reports".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSettings {
    pub seed: u64,
    pub days: usize,
    pub start: DateTime<Utc>,
}

impl Default for FleetSettings {
    fn default() -> Self {
        let d = FleetSpec::default_fleet(0);
        Self { seed: 1, days: d.days, start: d.start }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub seed: u64,
    pub cycle_days: usize,
    pub window_samples: usize,
    pub test_start: DateTime<Utc>,
    pub max_trials: usize,
    /// Strided training subsample per model; unset uses every daytime row.
    pub max_train_rows: Option<usize>,
    pub im_it: bool,
    pub consistency: bool,
    pub execution: Execution,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 7,
            cycle_days: DEFAULT_CYCLE_DAYS,
            window_samples: DEFAULT_WINDOW_SAMPLES,
            test_start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid date"),
            max_trials: 200,
            max_train_rows: Some(4000),
            im_it: true,
            consistency: true,
            execution: Execution::default(),
        }
    }
}

/// Everything a command needs; loaded from TOML, overridable from flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub fleet: FleetSettings,
    pub run: RunSettings,
}

impl RunConfig {
    /// Parse a TOML file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.paths.data_dir, &mut cfg.paths.model_dir, &mut cfg.paths.report_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.cycle_days < 1 {
            return Err(Error::InvalidConfig("cycle_days must be >= 1".into()));
        }
        if r.window_samples < 2 {
            return Err(Error::InvalidConfig("window_samples must cover at least two models".into()));
        }
        if r.max_trials < 1 {
            return Err(Error::InvalidConfig("max_trials must be >= 1".into()));
        }
        if r.max_train_rows == Some(0) {
            return Err(Error::InvalidConfig("max_train_rows must be >= 1".into()));
        }
        if self.fleet.days < 1 {
            return Err(Error::InvalidConfig("fleet days must be >= 1".into()));
        }
        for (name, p) in [
            ("data_dir", &self.paths.data_dir),
            ("model_dir", &self.paths.model_dir),
            ("report_dir", &self.paths.report_dir),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::InvalidConfig(format!("{name} is empty")));
            }
            if p.exists() && !p.is_dir() {
                return Err(Error::InvalidConfig(format!("{name} {} is not a directory", p.display())));
            }
        }
        Ok(())
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        let mut pipeline = PipelineConfig { max_train_rows: self.run.max_train_rows, ..PipelineConfig::default() };
        pipeline.cash.max_trials = self.run.max_trials;
        pipeline.cash.execution = self.run.execution;
        EvaluationConfig {
            pipeline,
            test_start: self.run.test_start,
            cycle_days: self.run.cycle_days,
            window_samples: self.run.window_samples,
            seed: self.run.seed,
            im_it: self.run.im_it,
            execution: self.run.execution,
        }
    }

    pub fn fleet_spec(&self) -> FleetSpec {
        let mut spec = FleetSpec::default_fleet(self.fleet.seed).with_days(self.fleet.days);
        spec.start = self.fleet.start;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub p_n: f64,
    pub mounting: Option<Mounting>,
    pub file: String,
}

/// Fleet description written next to the plant files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Generator parameters, absent for fleets not produced by `generate`.
    pub generator: Option<FleetSpec>,
    pub plants: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(data_dir: &Path) -> Result<Self> {
        let p = data_dir.join(MANIFEST_FILE);
        if !p.exists() {
            return Err(Error::InvalidConfig(format!("no fleet manifest at {}", p.display())));
        }
        Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
    }
}

pub fn load_fleet(data_dir: &Path) -> Result<(Manifest, Vec<PlantRecord>)> {
    let manifest = Manifest::load(data_dir)?;
    let records = manifest
        .plants
        .iter()
        .map(|e| read_plant_csv(&data_dir.join(&e.file), &e.id, e.p_n, e.mounting))
        .collect::<Result<_>>()?;
    Ok((manifest, records))
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Generate the synthetic fleet: one CSV per plant plus the manifest.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = &cfg.paths.data_dir;
    ensure_dir(dir)?;
    let spec = cfg.fleet_spec();
    let records = spec.generate(cfg.run.execution)?;
    let mut files = Vec::with_capacity(records.len() + 1);
    let mut entries = Vec::with_capacity(records.len());
    for rec in &records {
        let file = format!("{}.csv", rec.id);
        let path = dir.join(&file);
        write_plant_csv(&path, rec)?;
        files.push(path);
        entries.push(ManifestEntry { id: rec.id.clone(), p_n: rec.p_n, mounting: rec.mounting, file });
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &Manifest { generator: Some(spec), plants: entries })?;
    files.push(manifest_path);
    Ok(files)
}

fn bundle_path(model_dir: &Path, id: &str) -> PathBuf {
    model_dir.join(format!("{id}.model.json"))
}

fn trial_log_path(model_dir: &Path, id: &str) -> PathBuf {
    model_dir.join(format!("{id}.trials.jsonl"))
}

/// Train and store one pipeline per plant on the pre-training period.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (_, fleet) = load_fleet(&cfg.paths.data_dir)?;
    ensure_dir(&cfg.paths.model_dir)?;
    let trained = pretrain_pool(&fleet, &cfg.evaluation())?;
    let mut files = Vec::with_capacity(trained.len());
    for (model, state) in &trained {
        let p = bundle_path(&cfg.paths.model_dir, &model.plant_id);
        model.save(&p)?;
        state.write_trial_log(&trial_log_path(&cfg.paths.model_dir, &model.plant_id))?;
        files.push(p);
    }
    Ok(files)
}

pub fn load_models(model_dir: &Path, ids: &[&str]) -> Result<Vec<TrainedPlantModel>> {
    ids.iter().map(|id| TrainedPlantModel::load(&bundle_path(model_dir, id))).collect()
}

/// Forecasts and weight log of one simulated target plant.
#[derive(Debug, Clone)]
pub struct SimulationFiles {
    pub forecast: PathBuf,
    pub weight_log: PathBuf,
    pub entries: Vec<WeightLogEntry>,
}

/// Replay the test period for `target` with a pool of all other plants.
pub fn cmd_simulate(cfg: &RunConfig, target: &str) -> Result<SimulationFiles> {
    cfg.validate()?;
    let (_, fleet) = load_fleet(&cfg.paths.data_dir)?;
    let rec = fleet
        .iter()
        .find(|r| r.id == target)
        .ok_or_else(|| Error::InvalidConfig(format!("plant {target} not in the fleet")))?;
    let pool_ids: Vec<&str> = fleet.iter().map(|r| r.id.as_str()).filter(|id| *id != target).collect();
    let pool = load_models(&cfg.paths.model_dir, &pool_ids)?;
    let test = rec.slice_time(cfg.run.test_start, rec.power.end())?;
    let forecasts = pool_forecasts(&pool, &test.weather, cfg.run.execution)?;
    let sim = simulate_online(
        &forecasts,
        &test.power,
        test.p_n,
        &SimulationConfig {
            cycle_days: cfg.run.cycle_days,
            window_samples: cfg.run.window_samples,
            adapt: true,
        },
    )?;

    ensure_dir(&cfg.paths.report_dir)?;
    let forecast_path = cfg.paths.report_dir.join(format!("simulate_{target}.csv"));
    let mut w = csv::Writer::from_path(&forecast_path)?;
    w.write_record(["timestamp", "actual_kw", "forecast_kw"])?;
    for k in 0..test.len() {
        w.write_record([
            crate::csv_io::format_ts(test.power.timestamp(k)),
            test.power.values()[k].to_string(),
            sim.forecast.values()[k].to_string(),
        ])?;
    }
    w.flush()?;
    let log_path = cfg.paths.report_dir.join(format!("simulate_{target}.weights.jsonl"));
    if log_path.exists() {
        fs::remove_file(&log_path)?;
    }
    for e in &sim.weight_log {
        append_weight_log(&log_path, std::slice::from_ref(e))?;
    }
    Ok(SimulationFiles { forecast: forecast_path, weight_log: log_path, entries: sim.weight_log })
}

/// Leave-one-out evaluation; stored bundles are reused when all are present.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let (manifest, fleet) = load_fleet(&cfg.paths.data_dir)?;
    let eval = cfg.evaluation();
    let ids: Vec<&str> = fleet.iter().map(|r| r.id.as_str()).collect();
    let models = match load_models(&cfg.paths.model_dir, &ids) {
        Ok(m) => m,
        Err(Error::MissingBundle(_)) => {
            cmd_pretrain(cfg)?;
            load_models(&cfg.paths.model_dir, &ids)?
        }
        Err(e) => return Err(e),
    };
    let mut loo = run_leave_one_out_detailed(&fleet, &models, &eval)?;
    loo.report.metadata.fleet_seed = manifest.generator.as_ref().map(|g| g.seed);
    if cfg.run.consistency {
        loo.report.consistency = Some(run_consistency(&fleet, &models, &eval)?);
    }

    let dir = &cfg.paths.report_dir;
    ensure_dir(dir)?;
    fs::write(dir.join(REPORT_TEXT), loo.report.to_table())?;
    write_json(&dir.join(REPORT_JSON), &loo.report)?;
    for (id, log) in &loo.report.weight_logs {
        let pool: Vec<&str> = ids.iter().copied().filter(|p| p != id).collect();
        write_weight_csv(&dir.join(format!("weights_{id}.csv")), &pool, log)?;
    }
    if let Some(c) = &loo.report.consistency {
        write_json(&dir.join("consistency.json"), c)?;
    }
    write_daily_curves(&dir.join("daily_curves.csv"), &loo.folds)?;
    Ok(loo.report)
}

fn write_weight_csv(path: &Path, pool: &[&str], log: &[WeightLogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string(), "outcome".to_string(), "windowed_mse".to_string()];
    header.extend(pool.iter().map(|p| p.to_string()));
    w.write_record(&header)?;
    for e in log {
        let mut row = vec![
            crate::csv_io::format_ts(e.timestamp),
            serde_json::to_value(e.outcome)?.as_str().unwrap_or_default().to_string(),
            e.windowed_mse.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(e.weights.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Actual and forecast curves on the 15th of every test month.
fn write_daily_curves(path: &Path, folds: &[FoldForecasts]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let methods: Vec<Method> =
        Method::ALL.into_iter().filter(|m| folds.iter().all(|f| f.forecasts.contains_key(m))).collect();
    let mut header = vec!["plant".to_string(), "timestamp".to_string(), "actual_kw".to_string()];
    header.extend(methods.iter().map(|m| m.label().to_string()));
    w.write_record(&header)?;
    for f in folds {
        for k in 0..f.actual.len() {
            let ts = f.actual.timestamp(k);
            if ts.day() != 15 {
                continue;
            }
            let mut row =
                vec![f.plant_id.clone(), crate::csv_io::format_ts(ts), f.actual.values()[k].to_string()];
            row.extend(methods.iter().map(|m| f.forecasts[m].values()[k].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Re-render the stored report, checking that its mean row is consistent.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let p = cfg.paths.report_dir.join(REPORT_JSON);
    if !p.exists() {
        return Err(Error::InvalidConfig(format!("no report at {}; run evaluate first", p.display())));
    }
    let report = EvaluationReport::from_json(&fs::read_to_string(&p)?)?;
    let recomputed = crate::evaluation::mean_scores(&report.plants);
    for (m, v) in &report.mean {
        let r = recomputed.get(m).copied().unwrap_or(f64::NAN);
        if (r - v).abs() > 1e-12 {
            return Err(Error::InvalidData(format!("{} mean {v} does not match plant rows ({r})", m.label())));
        }
    }
    let mut out = report.to_table();
    if let Some(c) = &report.consistency {
        out.push_str("\nown-model mean weight with the full pool\n");
        for r in c {
            match r.mean_own_weight {
                Some(w) => out.push_str(&format!("{:<10}{w:>11.4}\n", r.plant_id)),
                None => out.push_str(&format!("{:<10}{:>11}\n", r.plant_id, "-")),
            }
        }
    }
    Ok(out)
}
