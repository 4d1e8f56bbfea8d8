//! Monte Carlo replication of the estimators on synthetic data.

use std::fmt::Write as _;
use std::io;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{self, DgpConfig};
use crate::error::{GpcaError, Result};
use crate::linalg;
use crate::model::Method;
use crate::pipeline::{self, FitSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    Custom,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::A => "A",
            Setting::B => "B",
            Setting::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "D_R")]
    DistR,
    #[serde(rename = "D_C")]
    DistC,
    #[serde(rename = "MSE")]
    Mse,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DistR, Metric::DistC, Metric::Mse];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::DistR => "D_R",
            Metric::DistC => "D_C",
            Metric::Mse => "MSE",
        }
    }
}

/// Metrics of one method in one replication; `None` when the fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub values: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub setting: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub p1: usize,
    pub p2: usize,
    pub method: Method,
    pub metric: Metric,
    pub mean: f64,
    pub sd: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub records: Vec<RepRecord>,
    pub n_reps: usize,
}

impl ReportTable {
    pub fn get(&self, t: usize, method: Method, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.t == t && r.method == method && r.metric == metric)
    }

    /// Appends another table's rows (e.g. the next dimension in a sweep).
    pub fn extend(&mut self, other: ReportTable) {
        self.rows.extend(other.rows);
        self.records.extend(other.records);
        self.n_reps = self.n_reps.max(other.n_reps);
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(|e| GpcaError::Data(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// One block per metric; rows are dimensions, columns methods, cells `mean(sd)`.
    pub fn to_text(&self) -> String {
        let mut methods: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        methods.sort();
        methods.dedup();
        let mut dims: Vec<(String, String, usize, usize, usize)> =
            self.rows.iter().map(|r| (r.case.clone(), r.setting.clone(), r.t, r.p1, r.p2)).collect();
        dims.dedup();
        let mut s = String::new();
        for metric in Metric::ALL {
            if !self.rows.iter().any(|r| r.metric == metric) {
                continue;
            }
            let _ = write!(s, "{:<6} {:<7} {:<7} {:>5} {:>5} {:>5}", metric.name(), "case", "setting", "T", "p1", "p2");
            for m in &methods {
                let _ = write!(s, " {:>18}", m.name());
            }
            s.push('\n');
            for (case, setting, t, p1, p2) in &dims {
                let _ = write!(s, "{:<6} {:<7} {:<7} {:>5} {:>5} {:>5}", "", case, setting, t, p1, p2);
                for m in &methods {
                    let cell = self.rows.iter().find(|r| {
                        r.metric == metric && r.method == *m && &r.case == case && &r.setting == setting && r.t == *t && r.p1 == *p1 && r.p2 == *p2
                    });
                    match cell {
                        Some(r) if r.n_effective > 0 => {
                            let _ = write!(s, " {:>18}", format!("{:.4}({:.4})", r.mean, r.sd));
                        }
                        _ => {
                            let _ = write!(s, " {:>18}", "-");
                        }
                    }
                }
                s.push('\n');
            }
            s.push('\n');
        }
        let failed: Vec<String> = methods
            .iter()
            .filter_map(|m| {
                let n = self.records.iter().filter(|r| r.method == *m && r.values.is_none()).count();
                (n > 0).then(|| format!("{}: {n}", m.name()))
            })
            .collect();
        if !failed.is_empty() {
            let _ = writeln!(s, "failed replications: {}", failed.join(", "));
        }
        s
    }
}

/// Seed of replication `rep`, drawn from an independent stream of `base`.
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(rep as u64 + 1);
    rng.next_u64()
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn one_replication(cfg: &DgpConfig, rep: usize, methods: &[Method], settings: &FitSettings) -> Result<Vec<RepRecord>> {
    let seed = replication_seed(cfg.seed, rep);
    let rep_cfg = DgpConfig { seed, ..cfg.clone() };
    let (x, truth) = dgp::gen_series(&rep_cfg)?;
    let mut local = settings.clone();
    local.threshold.cv_seed ^= seed;
    let fits = pipeline::fit_methods(&x, cfg.k1, cfg.k2, methods, Some(&truth.cov), &local);
    let records = fits
        .fits
        .into_iter()
        .map(|(method, fit)| {
            let values = fit.ok().and_then(|f| {
                let dr = linalg::subspace_distance(f.r_hat.values(), truth.r.values()).ok()?;
                let dc = linalg::subspace_distance(f.c_hat.values(), truth.c.values()).ok()?;
                let mse = dgp::mse_common(&f.common, &truth.common).ok()?;
                Some([dr, dc, mse])
            });
            RepRecord { rep, method, values }
        })
        .collect();
    Ok(records)
}

/// Runs `n_reps` independent replications of `cfg` (each with a seed derived
/// from `cfg.seed` and the replication index) and summarizes every method.
///
/// Replications run in parallel; results are gathered in replication order,
/// so the table does not depend on the thread count. A failed fit is
/// excluded from that method's averages and shows up in `n_effective`.
pub fn run_monte_carlo(
    cfg: &DgpConfig,
    methods: &[Method],
    n_reps: usize,
    setting: Setting,
    settings: &FitSettings,
) -> Result<ReportTable> {
    if n_reps == 0 {
        return Err(GpcaError::Config("n_reps must be at least 1".into()));
    }
    cfg.validate()?;
    let per_rep: Vec<Result<Vec<RepRecord>>> =
        (0..n_reps).into_par_iter().map(|rep| one_replication(cfg, rep, methods, settings)).collect();
    let mut records = Vec::with_capacity(n_reps * methods.len());
    for r in per_rep {
        records.extend(r?);
    }
    let mut rows = Vec::new();
    for &method in methods {
        for (slot, metric) in Metric::ALL.iter().enumerate() {
            let xs: Vec<f64> =
                records.iter().filter(|r| r.method == method).filter_map(|r| r.values.map(|v| v[slot])).collect();
            let (mean, sd) = mean_sd(&xs);
            rows.push(ReportRow {
                case: cfg.cov_case.name().to_string(),
                setting: setting.name().to_string(),
                t: cfg.t,
                p1: cfg.p1,
                p2: cfg.p2,
                method,
                metric: *metric,
                mean,
                sd,
                n_effective: xs.len(),
            });
        }
    }
    Ok(ReportTable { rows, records, n_reps })
}
