//! The subcommands. Each writes its outputs plus the config echo into the
//! output directory and returns an error for any output it could not write.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use gpca::covariance::{self, CovarianceEstimate};
use gpca::evaluation::{self, PanelDataset, RollingConfig, RollingReport};
use gpca::simulation::{self, DgpConfig, NormalityReport, ReportTable, Setting};
use gpca::{estimators, DenseMatrix, EstimationResult, GpcaError, MatrixSeries, Method, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::synth;

pub const FIXTURE_FILE: &str = "ff_synthetic_10x10.csv";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| GpcaError::Data(e.to_string()))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

/// Matrix with labelled rows; columns are named by `col_names`.
fn write_matrix(dir: &Path, name: &str, m: &DenseMatrix, row_names: &[String], col_names: &[String]) -> Result<()> {
    let mut w = create(dir, name)?;
    writeln!(w, "label,{}", col_names.join(","))?;
    for i in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols()).map(|j| fmt(m[(i, j)])).collect();
        writeln!(w, "{},{}", row_names[i], cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// A matrix series in the long schema `date,row,col,value`.
fn write_series(dir: &Path, name: &str, s: &MatrixSeries, dates: &[String], rows: &[String], cols: &[String]) -> Result<()> {
    let mut w = create(dir, name)?;
    writeln!(w, "date,row,col,value")?;
    for (t, m) in s.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                writeln!(w, "{},{},{},{}", dates[t], rows[i], cols[j], fmt(m[(i, j)]))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Reads the configured dataset, imputes missing entries and, unless turned
/// off, standardizes every cell over the full sample.
pub fn load_dataset(cfg: &RunConfig) -> Result<PanelDataset> {
    let raw = evaluation::ingest_csv(cfg.input()?, cfg.data.schema)?;
    if cfg.data.standardize && !cfg.rolling.per_window_standardization {
        evaluation::preprocess(&raw)
    } else {
        evaluation::impute(&raw)
    }
}

/// Dimensions of one sweep point.
fn sweep_config(base: &DgpConfig, setting: Setting, t: usize) -> DgpConfig {
    let mut cfg = base.clone();
    cfg.t = t;
    match setting {
        Setting::A => cfg.p2 = t,
        Setting::B => cfg.p1 = t,
        Setting::Custom => {}
    }
    cfg
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<ReportTable> {
    let sim = &cfg.simulate;
    let ts = if sim.t_values.is_empty() { vec![cfg.dgp.t] } else { sim.t_values.clone() };
    let mut table = ReportTable::default();
    for &t in &ts {
        let point = sweep_config(&cfg.dgp, sim.setting, t);
        table.extend(simulation::run_monte_carlo(&point, &sim.methods, sim.reps, sim.setting, &cfg.fit)?);
    }
    table.write_csv(create(out, "table.csv")?)?;
    fs::write(out.join("table.txt"), table.to_text())?;
    if cfg.dgp.normality_mode {
        let point = sweep_config(&cfg.dgp, sim.setting, ts[0]);
        let report = simulation::normality_experiment(&point, &sim.methods, sim.reps, &cfg.fit, sim.n_mc)?;
        write_normality(cfg, out, &report)?;
    }
    Ok(table)
}

fn write_normality(cfg: &RunConfig, out: &Path, report: &NormalityReport) -> Result<()> {
    let mut w = create(out, "normality_z.csv")?;
    writeln!(w, "method,index,z")?;
    for m in &report.methods {
        for (i, z) in m.z.iter().enumerate() {
            writeln!(w, "{},{i},{}", m.method, fmt(*z))?;
        }
    }
    w.flush()?;

    let mut w = create(out, "normality_summary.csv")?;
    writeln!(w, "method,n,failures,ks,asymptotic_variance,variance_std_error")?;
    let var = &report.variance;
    for m in &report.methods {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.method,
            m.z.len(),
            m.failures,
            fmt(m.ks),
            fmt(var.covariance[(0, 0)]),
            fmt(var.std_error[(0, 0)])
        )?;
    }
    w.flush()?;

    let (bins, range) = (cfg.simulate.hist_bins.max(1), cfg.simulate.hist_range);
    let mut w = create(out, "normality_hist.csv")?;
    writeln!(w, "method,bin_lo,bin_hi,count")?;
    for m in &report.methods {
        let counts = simulation::histogram(&m.z, -range, range, bins);
        for (b, n) in counts.iter().enumerate() {
            let lo = -range + 2.0 * range * b as f64 / bins as f64;
            let hi = -range + 2.0 * range * (b + 1) as f64 / bins as f64;
            writeln!(w, "{},{},{},{n}", m.method, fmt(lo), fmt(hi))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fit_one(cfg: &RunConfig, x: &MatrixSeries) -> Result<EstimationResult> {
    let (k1, k2) = (cfg.estimate.k1, cfg.estimate.k2);
    let fit = &cfg.fit;
    match cfg.estimate.method {
        Method::Gpca => covariance::data_driven_gpca(x, k1, k2, &fit.threshold, &fit.iteration),
        Method::Pe => estimators::pe_estimate(x, k1, k2, &fit.iteration),
        Method::AlphaPca => estimators::alpha_pca_estimate(x, k1, k2),
        Method::OracleGpca => Err(GpcaError::Config("oracle GPCA needs the true covariance; use simulate".into())),
    }
}

pub fn estimate(cfg: &RunConfig, out: &Path) -> Result<EstimationResult> {
    let d = load_dataset(cfg)?;
    let fit = fit_one(cfg, d.values())?;
    let (rows, cols, dates) = (d.row_labels(), d.col_labels(), d.dates());
    write_matrix(out, "r_hat.csv", fit.r_hat.values(), rows, &names("f", fit.k1()))?;
    write_matrix(out, "c_hat.csv", fit.c_hat.values(), cols, &names("f", fit.k2()))?;
    write_matrix(out, "u.csv", fit.covariance.u(), rows, rows)?;
    write_matrix(out, "v.csv", fit.covariance.v(), cols, cols)?;
    write_series(out, "factors.csv", &fit.factors, dates, &names("f", fit.k1()), &names("f", fit.k2()))?;
    write_series(out, "common.csv", &fit.common, dates, rows, cols)?;
    write_series(out, "residuals.csv", &fit.residuals, dates, rows, cols)?;
    let summary = json!({
        "method": fit.method,
        "k1": fit.k1(),
        "k2": fit.k2(),
        "T": d.len(),
        "p1": rows.len(),
        "p2": cols.len(),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_step_distance": fit.final_step_distance,
        "objective_trace": fit.objective_trace,
        "warnings": fit.warnings,
    });
    write_json(out, "summary.json", &summary)?;
    Ok(fit)
}

pub fn cov(cfg: &RunConfig, out: &Path) -> Result<CovarianceEstimate> {
    let d = load_dataset(cfg)?;
    let est = covariance::estimate_separable_cov(d.values(), cfg.estimate.k1, cfg.estimate.k2, &cfg.fit.threshold, &cfg.fit.iteration)?;
    let (rows, cols) = (d.row_labels(), d.col_labels());
    write_matrix(out, "u_hat.csv", &est.row.matrix, rows, rows)?;
    write_matrix(out, "v_hat.csv", &est.col.matrix, cols, cols)?;
    write_matrix(out, "u_scaled.csv", est.covariance.u(), rows, rows)?;
    let side = |t: &gpca::ThresholdedCovariance, cv: &Option<covariance::CvSelection>| {
        json!({
            "chosen_constant": t.chosen_constant,
            "omega": t.omega,
            "sparsity": t.sparsity,
            "cross_validation": cv,
        })
    };
    let summary = json!({
        "scale_constant": est.scale_constant,
        "row": side(&est.row, &est.row_cv),
        "col": side(&est.col, &est.col_cv),
        "warnings": est.warnings,
    });
    write_json(out, "cov_summary.json", &summary)?;
    Ok(est)
}

pub fn rolling(cfg: &RunConfig, out: &Path) -> Result<Vec<RollingReport>> {
    let d = load_dataset(cfg)?;
    let r = &cfg.rolling;
    if !r.assume_stationary {
        eprintln!("warning: stationarity of the input series is not tested (--assume-stationary to silence)");
    }
    let mut reports = Vec::with_capacity(r.methods.len());
    for &method in &r.methods {
        let rc = RollingConfig {
            n_years: r.n_years,
            k: r.k,
            method,
            months_per_period: r.months_per_period,
            per_window_standardization: r.per_window_standardization,
            settings: cfg.fit.clone(),
        };
        let report = evaluation::rolling_validate(&d, &rc)?;
        report.write_csv(create(out, &format!("rolling_{method}.csv"))?)?;
        reports.push(report);
    }
    let mut w = create(out, "rolling_summary.csv")?;
    writeln!(w, "method,n_years,k,mean_mse,mean_rho,mean_upsilon")?;
    for rep in &reports {
        let c = &rep.config;
        let ups = rep.mean_upsilon.map(fmt).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{ups}", c.method, c.n_years, c.k, fmt(rep.mean_mse), fmt(rep.mean_rho))?;
    }
    w.flush()?;
    Ok(reports)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<PanelDataset> {
    let d = synth::ff_fixture(cfg.seed, &cfg.synth)?;
    d.write_wide(create(out, FIXTURE_FILE)?)?;
    Ok(d)
}
