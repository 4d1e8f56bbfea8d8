//! Run configuration: a JSON file, overridden by command-line flags, and
//! echoed in full next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use gpca::evaluation::Schema;
use gpca::simulation::{DgpConfig, Setting};
use gpca::{FitSettings, GpcaError, Method, Result};
use serde::{Deserialize, Serialize};

pub const ECHO_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub reps: usize,
    pub methods: Vec<Method>,
    pub setting: Setting,
    /// Sweep over `T`; setting A ties `p2 = T`, setting B ties `p1 = T`.
    /// Empty means the single `dgp.T`.
    pub t_values: Vec<usize>,
    /// Monte Carlo draws for the asymptotic variance (normality mode).
    pub n_mc: usize,
    pub hist_bins: usize,
    pub hist_range: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            reps: 100,
            methods: vec![Method::Gpca, Method::OracleGpca, Method::Pe, Method::AlphaPca],
            setting: Setting::A,
            t_values: Vec::new(),
            n_mc: 20_000,
            hist_bins: 40,
            hist_range: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    pub input: Option<PathBuf>,
    pub schema: Schema,
    /// Standardize every cell series over the full sample after imputation.
    pub standardize: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions { input: None, schema: Schema::Wide, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    pub k1: usize,
    pub k2: usize,
    pub method: Method,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { k1: 2, k2: 2, method: Method::Gpca }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingOptions {
    pub n_years: usize,
    pub k: usize,
    pub methods: Vec<Method>,
    pub months_per_period: usize,
    pub per_window_standardization: bool,
    /// No unit-root test is run; unless this is set, the run warns about it.
    pub assume_stationary: bool,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions {
            n_years: 5,
            k: 2,
            methods: vec![Method::Gpca, Method::Pe, Method::AlphaPca],
            months_per_period: 12,
            per_window_standardization: false,
            assume_stationary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub months: usize,
    pub start_year: u32,
    /// Entries blanked out as `NA`.
    pub missing: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { months: 300, start_year: 1995, missing: 6 }
    }
}

/// Everything a run depends on. `seed` is the master seed: it is copied into
/// `dgp.seed` and `fit.threshold.cv_seed` before the run and echoed that way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide. Results do not depend on it.
    pub threads: usize,
    pub dgp: DgpConfig,
    pub fit: FitSettings,
    pub simulate: SimulateOptions,
    pub data: DataOptions,
    pub estimate: EstimateOptions,
    pub rolling: RollingOptions,
    pub synth: SynthOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: 0,
            threads: 0,
            dgp: DgpConfig::default(),
            fit: FitSettings::default(),
            simulate: SimulateOptions::default(),
            data: DataOptions::default(),
            estimate: EstimateOptions::default(),
            rolling: RollingOptions::default(),
            synth: SynthOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| GpcaError::Config(format!("{}: {e}", path.display())))
    }

    /// Propagates the master seed and checks the sections shared by all runs.
    pub fn resolve(mut self) -> Result<RunConfig> {
        self.version = env!("CARGO_PKG_VERSION").to_string();
        self.dgp.seed = self.seed;
        self.fit.threshold.cv_seed = self.seed;
        self.fit.threshold.validate()?;
        if self.fit.iteration.max_iter == 0 || !(self.fit.iteration.tol > 0.0) {
            return Err(GpcaError::Config("max_iter must be positive and tol > 0".into()));
        }
        Ok(self)
    }

    pub fn input(&self) -> Result<&Path> {
        self.data.input.as_deref().ok_or_else(|| GpcaError::Config("no input dataset (use --input)".into()))
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| GpcaError::Data(e.to_string()))?;
        fs::write(dir.join(ECHO_FILE), text + "\n")?;
        Ok(())
    }
}
