//! Experiment configuration and the command implementations behind the
//! `udn-sim` binary. Numerical work is delegated to the other modules.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    ControlConfig, Scheme, BRUTE_FORCE_MAX_BS, BRUTE_FORCE_MAX_SUBCARRIERS, BRUTE_FORCE_MAX_USERS,
};
use crate::phy::{ChannelModel, PowerModel};
use crate::scenario::{
    self, load_scenario, save_scenario, DensityName, DensityTier, RegionSize, Scenario,
};
use crate::sim::{self, OracleReport, OracleSize, RunKey, SweepCell};
use crate::traffic::TrafficModel;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("reading config {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("scenario file {path}: {source}")]
    ScenarioFile {
        path: String,
        #[source]
        source: scenario::ScenarioError,
    },
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("structural constraint failed in {0} oracle instance(s)")]
    VerifyFailed(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSource {
    /// Density tiers to generate, one scenario per (tier, seed).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tiers: Vec<DensityName>,
    /// A scenario file used as-is; seeds then only drive arrivals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_dim")]
    pub width_m: f64,
    #[serde(default = "default_dim")]
    pub height_m: f64,
    /// Mean fixed-scheme utilisation that generated scenarios are scaled to.
    #[serde(default = "default_offered_load")]
    pub offered_load: f64,
}

fn default_dim() -> f64 {
    1000.0
}

fn default_offered_load() -> f64 {
    0.3
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource {
            tiers: DensityName::ALL.to_vec(),
            file: None,
            width_m: default_dim(),
            height_m: default_dim(),
            offered_load: default_offered_load(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_horizon")]
    pub horizon_slots: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    /// V values to sweep; empty means `[control.v_weight]`.
    #[serde(default)]
    pub v_values: Vec<f64>,
    /// Worker threads; 0 means one per available processor.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub control: ControlConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_horizon() -> u64 {
    5000
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: default_output_dir(),
            horizon_slots: default_horizon(),
            seeds: default_seeds(),
            schemes: default_schemes(),
            v_values: Vec::new(),
            jobs: 0,
            scenario: ScenarioSource::default(),
            control: ControlConfig::default(),
        }
    }
}

/// Scalar settings given on the command line. They win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub horizon_slots: Option<u64>,
    pub jobs: Option<usize>,
    pub v_weight: Option<f64>,
    pub seeds: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Applies command-line overrides. A `--v` override replaces both the
    /// base V and the sweep list.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(h) = o.horizon_slots {
            self.horizon_slots = h;
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(v) = o.v_weight {
            self.control.v_weight = v;
            self.v_values = vec![v];
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
    }

    pub fn effective_v_values(&self) -> Vec<f64> {
        if self.v_values.is_empty() {
            vec![self.control.v_weight]
        } else {
            self.v_values.clone()
        }
    }

    pub fn effective_jobs(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if self.horizon_slots == 0 {
            return bad("horizon_slots must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if let Some(seed) = self.seeds.iter().find(|&&s| s > crate::scenario::MAX_SEED) {
            return bad(format!("seed {seed} exceeds {}", crate::scenario::MAX_SEED));
        }
        if self.schemes.is_empty() {
            return bad("schemes must not be empty".into());
        }
        self.control.validate().map_err(CliError::Invalid)?;
        if let Some(v) = self.v_values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return bad(format!("v_values entry {v} must be finite and >= 0"));
        }
        let src = &self.scenario;
        match (&src.file, src.tiers.is_empty()) {
            (Some(_), false) => {
                return bad("scenario: give either `tiers` or `file`, not both".into())
            }
            (None, true) => return bad("scenario: one of `tiers` or `file` is required".into()),
            (Some(path), true) if !path.exists() => {
                return bad(format!("scenario file {} does not exist", path.display()))
            }
            _ => {}
        }
        if !(src.width_m > 0.0 && src.height_m > 0.0) {
            return bad("scenario width_m and height_m must be positive".into());
        }
        if !(src.offered_load > 0.0 && src.offered_load.is_finite()) {
            return bad("scenario.offered_load must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serialises")
    }

    /// Scenario instances the experiment runs on.
    pub fn cells(&self) -> Result<Vec<SweepCell>, CliError> {
        let src = &self.scenario;
        if let Some(path) = &src.file {
            let scenario = load_scenario(path).map_err(|source| CliError::ScenarioFile {
                path: path.display().to_string(),
                source,
            })?;
            let label = path
                .file_stem()
                .map_or_else(|| "file".to_string(), |s| s.to_string_lossy().into_owned());
            return Ok(self
                .seeds
                .iter()
                .map(|&seed| SweepCell {
                    label: label.clone(),
                    seed,
                    scenario: scenario.clone(),
                })
                .collect());
        }
        let tiers: Vec<DensityTier> = src.tiers.iter().map(|&t| DensityTier::default_for(t)).collect();
        let dims = RegionSize {
            width_m: src.width_m,
            height_m: src.height_m,
        };
        Ok(sim::tier_cells(&tiers, dims, &self.seeds, src.offered_load)?)
    }
}

pub struct GenerateSummary {
    pub macro_count: usize,
    pub small_count: usize,
    pub user_count: usize,
    pub fixed_utilization: f64,
}

pub fn cmd_generate(
    tier: DensityName,
    seed: u64,
    dims: RegionSize,
    offered_load: f64,
    out: &Path,
) -> Result<GenerateSummary, CliError> {
    let cells = sim::tier_cells(&[DensityTier::default_for(tier)], dims, &[seed], offered_load)?;
    let scenario = &cells[0].scenario;
    save_scenario(scenario, out)?;
    Ok(GenerateSummary {
        macro_count: scenario.macro_ids().count(),
        small_count: scenario.small_ids().count(),
        user_count: scenario.num_users(),
        fixed_utilization: sim::fixed_utilization(scenario),
    })
}

pub const CONFIG_FILE: &str = "effective_config.toml";
pub const CSV_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "comparison.txt";

/// Validates, runs the sweep and writes config echo, CSV, JSON summary and
/// the comparison table into the output directory. Returns the table.
pub fn cmd_run(config: &ExperimentConfig) -> Result<String, CliError> {
    config.validate()?;
    let cells = config.cells()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, config.to_toml_string()).map_err(io_err(&cfg_path))?;

    let runs = sim::sweep(
        &cells,
        &config.schemes,
        &config.effective_v_values(),
        &config.control,
        config.horizon_slots,
        config.effective_jobs(),
    )?;

    let csv_path = dir.join(CSV_FILE);
    let csv_file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    sim::write_csv(std::io::BufWriter::new(csv_file), &runs)?;
    let json_path = dir.join(SUMMARY_FILE);
    let json_file = fs::File::create(&json_path).map_err(io_err(&json_path))?;
    sim::write_summary_json(std::io::BufWriter::new(json_file), &runs)?;

    let summaries: Vec<(RunKey, sim::RunSummary)> =
        runs.into_iter().map(|(k, m)| (k, m.summary)).collect();
    let table = sim::format_comparison(&sim::comparison_rows(&summaries));
    let table_path = dir.join(TABLE_FILE);
    fs::write(&table_path, &table).map_err(io_err(&table_path))?;
    Ok(table)
}

/// Checks the requested oracle instance size against the exhaustive
/// solver's limits, naming the first one exceeded.
pub fn check_oracle_size(size: &OracleSize) -> Result<(), CliError> {
    for (what, value, limit) in [
        ("base stations", size.num_bs, BRUTE_FORCE_MAX_BS),
        ("users", size.num_users, BRUTE_FORCE_MAX_USERS),
        ("subcarriers", size.num_subcarriers, BRUTE_FORCE_MAX_SUBCARRIERS),
    ] {
        if value > limit {
            return Err(CliError::Invalid(format!(
                "{what} = {value} exceeds the brute-force limit of {limit}"
            )));
        }
    }
    if size.num_bs == 0 || size.num_users == 0 || size.num_subcarriers == 0 {
        return Err(CliError::Invalid("oracle instance sizes must be at least 1".into()));
    }
    Ok(())
}

/// Runs `instances` seeded oracle comparisons and optionally writes the
/// report as JSON. Fails if any greedy decision is structurally infeasible.
pub fn cmd_verify(
    instances: usize,
    seed: u64,
    size: OracleSize,
    config: &ControlConfig,
    out: Option<&Path>,
) -> Result<OracleReport, CliError> {
    check_oracle_size(&size)?;
    config.validate().map_err(CliError::Invalid)?;
    let report = sim::oracle_comparison(instances, seed, size, config)?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serialises");
        fs::write(path, text).map_err(io_err(path))?;
    }
    let infeasible = report.instances.iter().filter(|i| !i.feasible).count();
    if infeasible > 0 {
        return Err(CliError::VerifyFailed(infeasible));
    }
    Ok(report)
}

#[derive(Serialize)]
struct Defaults {
    control: ControlConfig,
    channel: ChannelModel,
    traffic: TrafficModel,
    macro_power_model: PowerModel,
    small_power_model: PowerModel,
    radio: RadioDefaults,
    tiers: Vec<DensityTier>,
    experiment: ExperimentConfig,
}

#[derive(Serialize)]
struct RadioDefaults {
    num_subcarriers: usize,
    subcarrier_bandwidth_hz: f64,
    noise_psd_dbm_per_hz: f64,
    macro_max_transmit_power_w: f64,
    small_max_transmit_power_w: f64,
    slot_duration_s: f64,
}

/// Every default parameter, as TOML.
pub fn cmd_describe() -> String {
    let d = Defaults {
        control: ControlConfig::default(),
        channel: ChannelModel::default(),
        traffic: TrafficModel::default(),
        macro_power_model: PowerModel::MACRO,
        small_power_model: PowerModel::SMALL,
        radio: RadioDefaults {
            num_subcarriers: scenario::DEFAULT_NUM_SUBCARRIERS,
            subcarrier_bandwidth_hz: scenario::DEFAULT_SUBCARRIER_BANDWIDTH_HZ,
            noise_psd_dbm_per_hz: scenario::DEFAULT_NOISE_PSD_DBM_PER_HZ,
            macro_max_transmit_power_w: scenario::MACRO_MAX_POWER_W,
            small_max_transmit_power_w: scenario::SMALL_MAX_POWER_W,
            slot_duration_s: 1.0,
        },
        tiers: DensityName::ALL.iter().map(|&t| DensityTier::default_for(t)).collect(),
        experiment: ExperimentConfig::default(),
    };
    toml::to_string(&d).expect("defaults serialise")
}

/// Loaded or generated scenario summary for `describe --scenario`.
pub fn describe_scenario(s: &Scenario) -> String {
    format!(
        "region {} x {} m, {} macro + {} small BSs, {} user points, {} subcarriers, mean fixed-scheme utilisation {:.3}\n",
        s.region_width_m,
        s.region_height_m,
        s.macro_ids().count(),
        s.small_ids().count(),
        s.num_users(),
        s.num_subcarriers,
        sim::fixed_utilization(s)
    )
}
