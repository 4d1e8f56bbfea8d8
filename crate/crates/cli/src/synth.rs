//! Synthetic stand-in for the 10×10 size/book-to-market portfolio returns.
//!
//! Monthly percent returns with a dominant market factor, a weaker
//! size/value factor, and idiosyncratic noise that is correlated between
//! neighbouring portfolios and much noisier for small firms.

use gpca::evaluation::PanelDataset;
use gpca::{DenseMatrix, MatrixSeries, Result};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::SynthOptions;

const P: usize = 10;
const NEIGHBOUR_CORRELATION: f64 = 0.8;
const MARKET_SCALE: f64 = 1.5;
const OTHER_SCALE: f64 = 0.4;
const FACTOR_AR: f64 = 0.1;
const MEAN_RETURN: f64 = 0.9;

/// Cholesky factor of `sᵢsⱼρ^{|i−j|}` with `s` linear from `hi` to `lo`.
fn noise_factor(hi: f64, lo: f64) -> DenseMatrix {
    let s: Vec<f64> = (0..P).map(|i| hi + (lo - hi) * i as f64 / (P - 1) as f64).collect();
    let cov = DMatrix::from_fn(P, P, |i, j| s[i] * s[j] * NEIGHBOUR_CORRELATION.powi((i as i32 - j as i32).abs()));
    cov.cholesky().expect("AR(1) correlation with positive scales is positive definite").l()
}

pub fn ff_fixture(seed: u64, opts: &SynthOptions) -> Result<PanelDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = |i: usize| i as f64 / (P - 1) as f64;
    let r = DMatrix::from_fn(P, 2, |i, j| if j == 0 { 1.0 + 0.3 * (1.0 - grid(i)) } else { 1.0 - 2.0 * grid(i) });
    let c = DMatrix::from_fn(P, 2, |i, j| if j == 0 { 0.8 + 0.4 * grid(i) } else { 1.0 - 2.0 * grid(i) });
    let (lu, lv) = (noise_factor(3.0, 0.5), noise_factor(1.0, 1.0));
    let scale = DMatrix::from_fn(2, 2, |i, j| if i == 0 && j == 0 { MARKET_SCALE } else { OTHER_SCALE });
    let innov = (1.0 - FACTOR_AR * FACTOR_AR).sqrt();

    let mut f = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut values = Vec::with_capacity(opts.months);
    for _ in 0..opts.months {
        let g = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        f = &f * FACTOR_AR + g * innov;
        let w = DMatrix::from_fn(P, P, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &r * f.component_mul(&scale) * c.transpose() + &lu * w * lv.transpose();
        // Returns are published with two decimals.
        values.push(x.map(|v| ((v + MEAN_RETURN) * 100.0).round() / 100.0));
    }
    let mut missing = vec![DMatrix::from_element(P, P, false); opts.months];
    let cells = opts.months * P * P;
    for slot in index::sample(&mut rng, cells, opts.missing.min(cells)).into_vec() {
        let (t, rest) = (slot / (P * P), slot % (P * P));
        missing[t][(rest % P, rest / P)] = true;
        values[t][(rest % P, rest / P)] = 0.0;
    }

    let mut dates = Vec::with_capacity(opts.months);
    for m in 0..opts.months {
        dates.push(format!("{}{:02}", opts.start_year as usize + m / 12, m % 12 + 1));
    }
    let rows = (1..=P).map(|i| format!("ME{i}")).collect();
    let cols = (1..=P).map(|j| format!("BM{j}")).collect();
    PanelDataset::new(dates, rows, cols, MatrixSeries::new(values)?, missing)
}
