//! Scenario configuration, read from TOML.
//!
//! Every table and key is optional; anything missing takes the default drive
//! and coupling values. Unknown keys are rejected.
//!
//! ```toml
//! scenario = "compare_all"      # stationary_wk | physical_scan | analyzer_bank | compare_all
//! output_dir = "out"
//! base_seed = 1
//! initial_level = 2             # source starts in |level⟩⟨level|, levels 1..=3
//! readout_times = [200.0]
//! min_prominence = 0.05
//!
//! [source]
//! energies = [0.0, 4.0, 8.0]
//! decays = [0.1, 0.1]
//! rabi = [2.0, 2.0]
//!
//! [omega]
//! min = 0.0
//! max = 12.0
//! count = 128
//!
//! [stationary]
//! t_max = 200.0
//! dtau = 0.02
//!
//! [physical]
//! gamma_f = 0.1
//! grid_n = 1600                 # grid nodes span [0, max readout time]
//! dt = 0.02
//! write_grid = true             # grid.tsv holds (N+1)² rows
//!
//! [analyzer]
//! method = "mcwf"               # mcwf | master_equation
//! p = 0.005
//! gamma_b = 0.001
//! n_traj = 300
//! dt = 0.01
//! record_interval = 1.0
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tdspectra::{linspace, AnalyzerBankConfig, BankMethod, CascadedParams, Error, FilterParams, ThreeLevelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    StationaryWk,
    PhysicalScan,
    AnalyzerBank,
    CompareAll,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::StationaryWk => "stationary_wk",
            Scenario::PhysicalScan => "physical_scan",
            Scenario::AnalyzerBank => "analyzer_bank",
            Scenario::CompareAll => "compare_all",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mcwf,
    MasterEquation,
}

impl From<Method> for BankMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Mcwf => BankMethod::Trajectories,
            Method::MasterEquation => BankMethod::MasterEquation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub energies: [f64; 3],
    pub decays: [f64; 2],
    pub rabi: [f64; 2],
}

impl Default for SourceSection {
    fn default() -> Self {
        let p = ThreeLevelParams::default();
        Self { energies: p.energies, decays: p.decays, rabi: p.rabi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for OmegaSection {
    fn default() -> Self {
        Self { min: 0.0, max: 12.0, count: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySection {
    pub t_max: f64,
    pub dtau: f64,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self { t_max: 200.0, dtau: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalSection {
    pub gamma_f: f64,
    pub grid_n: usize,
    pub dt: f64,
    pub write_grid: bool,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        Self { gamma_f: 0.1, grid_n: 1600, dt: 0.02, write_grid: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerSection {
    pub method: Method,
    pub p: f64,
    pub gamma_b: f64,
    pub n_traj: usize,
    pub dt: f64,
    pub record_interval: f64,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        let c = CascadedParams::default();
        let b = AnalyzerBankConfig::default();
        Self {
            method: Method::Mcwf,
            p: c.p,
            gamma_b: c.gamma_b,
            n_traj: b.n_traj,
            dt: b.dt,
            record_interval: b.record_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    pub base_seed: u64,
    pub initial_level: usize,
    pub readout_times: Vec<f64>,
    pub min_prominence: f64,
    pub source: SourceSection,
    pub omega: OmegaSection,
    pub stationary: StationarySection,
    pub physical: PhysicalSection,
    pub analyzer: AnalyzerSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::CompareAll,
            output_dir: PathBuf::from("out"),
            base_seed: 1,
            initial_level: 2,
            readout_times: vec![200.0],
            min_prominence: 0.05,
            source: SourceSection::default(),
            omega: OmegaSection::default(),
            stationary: StationarySection::default(),
            physical: PhysicalSection::default(),
            analyzer: AnalyzerSection::default(),
        }
    }
}

/// Reads, fills defaults and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> anyhow::Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config_str(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_config_str(text: &str) -> anyhow::Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Prefixes a core parameter error with the section it came from.
fn keyed(section: &str, err: Error) -> anyhow::Error {
    match err {
        Error::InvalidParameter { name, reason } => anyhow::anyhow!("{section}.{name}: {reason}"),
        other => anyhow::anyhow!("{section}: {other}"),
    }
}

fn positive(key: &str, v: f64) -> anyhow::Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{key}: {v} must be finite and > 0");
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn source_params(&self) -> ThreeLevelParams {
        ThreeLevelParams { energies: self.source.energies, decays: self.source.decays, rabi: self.source.rabi }
    }

    pub fn cascaded_params(&self) -> CascadedParams {
        CascadedParams {
            source: self.source_params(),
            p: self.analyzer.p,
            gamma_b: self.analyzer.gamma_b,
            ..CascadedParams::default()
        }
    }

    pub fn omegas(&self) -> Vec<f64> {
        linspace(self.omega.min, self.omega.max, self.omega.count)
    }

    /// Analyzer bank settings, integrated up to the latest readout time.
    pub fn bank_config(&self) -> AnalyzerBankConfig {
        AnalyzerBankConfig {
            omegas: self.omegas(),
            n_traj: self.analyzer.n_traj,
            t_final: self.horizon(),
            dt: self.analyzer.dt,
            record_interval: self.analyzer.record_interval,
            base_seed: self.base_seed,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.readout_times.iter().copied().fold(0.0, f64::max)
    }

    /// Source level as a 0-based index.
    pub fn initial_index(&self) -> usize {
        self.initial_level - 1
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.source_params().validate().map_err(|e| keyed("source", e))?;
        if !(1..=3).contains(&self.initial_level) {
            bail!("initial_level: {} is not one of 1, 2, 3", self.initial_level);
        }
        if !(0.0..1.0).contains(&self.min_prominence) {
            bail!("min_prominence: {} is outside [0, 1)", self.min_prominence);
        }
        if self.readout_times.is_empty() {
            bail!("readout_times: need at least one readout time");
        }
        if let Some(t) = self.readout_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            bail!("readout_times: {t} must be finite and >= 0");
        }
        if self.omega.count == 0 {
            bail!("omega.count: need at least one frequency");
        }
        if !(self.omega.min.is_finite() && self.omega.max.is_finite()) {
            bail!("omega: bounds must be finite");
        }
        if self.omega.count > 1 && !(self.omega.max > self.omega.min) {
            bail!("omega.max: {} must exceed omega.min {}", self.omega.max, self.omega.min);
        }
        positive("stationary.t_max", self.stationary.t_max)?;
        positive("stationary.dtau", self.stationary.dtau)?;
        FilterParams::new(0.0, self.physical.gamma_f).map_err(|e| keyed("physical", e))?;
        if self.physical.grid_n < 2 {
            bail!("physical.grid_n: {} must be at least 2", self.physical.grid_n);
        }
        positive("physical.dt", self.physical.dt)?;
        self.cascaded_params().validate().map_err(|e| keyed("analyzer", e))?;
        if matches!(self.scenario, Scenario::AnalyzerBank | Scenario::CompareAll) {
            self.bank_config().validate().map_err(|e| keyed("analyzer", e))?;
        }
        Ok(())
    }

    /// The config as TOML, for the manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
