//! Command-line flags and their application on top of a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gpca::evaluation::Schema;
use gpca::simulation::{CovCase, NoiseDraw, Setting};
use gpca::{GpcaError, Method, Result};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "gpca", version, about = "Matrix factor models with heteroscedastic noise: simulation, estimation, rolling validation")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (data generation and cross-validation splits).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = automatic). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo tables (and the normality experiment in normality mode).
    Simulate(SimulateArgs),
    /// Fit one method to a panel dataset.
    Estimate(EstimateArgs),
    /// Thresholded row and column covariance estimates of a panel dataset.
    Cov(CovArgs),
    /// Rolling out-of-sample validation on a panel dataset.
    Rolling(RollingArgs),
    /// Write the synthetic 10x10 portfolio fixture.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Fixed row threshold constant (cross-validated when absent).
    #[arg(long)]
    pub c_r: Option<f64>,
    /// Fixed column threshold constant (cross-validated when absent).
    #[arg(long)]
    pub c_c: Option<f64>,
    /// Cross-validation splits.
    #[arg(long)]
    pub h: Option<usize>,
    /// Candidate threshold constants, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub m_cap: Option<f64>,
    #[arg(long)]
    pub pd_tolerance: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// long (date,row,col,value) or wide (date + row__col columns).
    #[arg(long)]
    pub schema: Option<String>,
    /// Skip full-sample standardization (missing values are still imputed).
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Covariance case: 1, 2 or 3.
    #[arg(long)]
    pub case: Option<u8>,
    #[arg(long = "t")]
    pub t: Option<usize>,
    #[arg(long)]
    pub p1: Option<usize>,
    #[arg(long)]
    pub p2: Option<usize>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// root (U^{1/2} W V^{1/2}) or direct (U W V).
    #[arg(long)]
    pub noise_draw: Option<String>,
    #[arg(long)]
    pub normality_mode: bool,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// A (p2 = T), B (p1 = T) or custom.
    #[arg(long)]
    pub setting: Option<String>,
    /// Sweep of T values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub t_values: Option<Vec<usize>>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Default)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Default)]
pub struct CovArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Default)]
pub struct RollingArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bandwidth in periods.
    #[arg(long)]
    pub n_years: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub months_per_period: Option<usize>,
    /// Standardize with each training window's moments.
    #[arg(long)]
    pub per_window_standardization: bool,
    /// Silence the warning that stationarity is not tested.
    #[arg(long)]
    pub assume_stationary: bool,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub months: Option<usize>,
    #[arg(long)]
    pub start_year: Option<u32>,
    #[arg(long)]
    pub missing: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_methods(names: Option<Vec<String>>) -> Result<Option<Vec<Method>>> {
    names.map(|ns| ns.iter().map(|n| Method::parse(n)).collect()).transpose()
}

impl FitArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let th = &mut cfg.fit.threshold;
        if self.c_r.is_some() {
            th.c_r = self.c_r;
        }
        if self.c_c.is_some() {
            th.c_c = self.c_c;
        }
        if self.m_cap.is_some() {
            th.m_cap = self.m_cap;
        }
        set(&mut th.h, self.h);
        set(&mut th.grid, self.grid);
        set(&mut th.pd_tolerance, self.pd_tolerance);
        set(&mut cfg.fit.iteration.max_iter, self.max_iter);
        set(&mut cfg.fit.iteration.tol, self.tol);
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<()> {
        if self.input.is_some() {
            cfg.data.input = self.input;
        }
        if let Some(s) = self.schema {
            cfg.data.schema = Schema::parse(&s)?;
        }
        if self.no_standardize {
            cfg.data.standardize = false;
        }
        Ok(())
    }
}

fn parse_setting(s: &str) -> Result<Setting> {
    match s.trim().to_ascii_lowercase().as_str() {
        "a" => Ok(Setting::A),
        "b" => Ok(Setting::B),
        "custom" => Ok(Setting::Custom),
        other => Err(GpcaError::Config(format!("unknown setting '{other}'"))),
    }
}

impl Cli {
    /// Loads `--config` (or the defaults), applies every flag and resolves seeds.
    pub fn run_config(&mut self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.threads, self.threads);
        match std::mem::replace(&mut self.command, Command::Synth(SynthArgs::default())) {
            Command::Simulate(a) => {
                if let Some(c) = a.case {
                    cfg.dgp.cov_case = match c {
                        1 => CovCase::Case1,
                        2 => CovCase::Case2,
                        3 => CovCase::Case3,
                        other => return Err(GpcaError::Config(format!("unknown covariance case {other}"))),
                    };
                }
                let d = &mut cfg.dgp;
                set(&mut d.t, a.t);
                set(&mut d.p1, a.p1);
                set(&mut d.p2, a.p2);
                set(&mut d.k1, a.k1);
                set(&mut d.k2, a.k2);
                set(&mut d.phi, a.phi);
                set(&mut d.psi, a.psi);
                set(&mut d.burn_in, a.burn_in);
                set(&mut d.noise_scale, a.noise_scale);
                if let Some(s) = a.noise_draw {
                    d.noise_draw = match s.trim().to_ascii_lowercase().as_str() {
                        "root" => NoiseDraw::Root,
                        "direct" => NoiseDraw::Direct,
                        other => return Err(GpcaError::Config(format!("unknown noise draw '{other}'"))),
                    };
                }
                if a.normality_mode {
                    d.normality_mode = true;
                }
                let s = &mut cfg.simulate;
                set(&mut s.reps, a.reps);
                set(&mut s.methods, parse_methods(a.methods)?);
                set(&mut s.setting, a.setting.as_deref().map(parse_setting).transpose()?);
                set(&mut s.t_values, a.t_values);
                set(&mut s.n_mc, a.n_mc);
                a.fit.apply(&mut cfg);
                cfg.dgp.validate()?;
            }
            Command::Estimate(a) => {
                a.data.apply(&mut cfg)?;
                set(&mut cfg.estimate.k1, a.k1);
                set(&mut cfg.estimate.k2, a.k2);
                set(&mut cfg.estimate.method, a.method.as_deref().map(Method::parse).transpose()?);
                a.fit.apply(&mut cfg);
            }
            Command::Cov(a) => {
                a.data.apply(&mut cfg)?;
                set(&mut cfg.estimate.k1, a.k1);
                set(&mut cfg.estimate.k2, a.k2);
                a.fit.apply(&mut cfg);
            }
            Command::Rolling(a) => {
                a.data.apply(&mut cfg)?;
                let r = &mut cfg.rolling;
                set(&mut r.n_years, a.n_years);
                set(&mut r.k, a.k);
                set(&mut r.methods, parse_methods(a.methods)?);
                set(&mut r.months_per_period, a.months_per_period);
                if a.per_window_standardization {
                    r.per_window_standardization = true;
                }
                if a.assume_stationary {
                    r.assume_stationary = true;
                }
                a.fit.apply(&mut cfg);
            }
            Command::Synth(a) => {
                set(&mut cfg.synth.months, a.months);
                set(&mut cfg.synth.start_year, a.start_year);
                set(&mut cfg.synth.missing, a.missing);
            }
        }
        cfg.resolve()
    }
}
