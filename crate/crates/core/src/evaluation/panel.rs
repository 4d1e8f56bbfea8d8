//! Matrix-valued panel data: CSV ingestion and preprocessing.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::model::MatrixSeries;

/// Separator between the row and column label in wide-format headers.
pub const WIDE_SEPARATOR: &str = "__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    /// Columns `date,row,col,value`, one entry per line.
    Long,
    /// A `date` column followed by one `row__col` column per cell.
    Wide,
}

impl Schema {
    pub fn parse(s: &str) -> Result<Schema> {
        match s.trim().to_ascii_lowercase().as_str() {
            "long" => Ok(Schema::Long),
            "wide" => Ok(Schema::Wide),
            other => Err(GpcaError::Config(format!("unknown schema '{other}' (expected long or wide)"))),
        }
    }
}

/// Labelled matrix observations over time. Missing entries hold 0 in
/// `values` and are flagged in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    dates: Vec<String>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    values: MatrixSeries,
    missing: Vec<DMatrix<bool>>,
}

impl PanelDataset {
    pub fn new(
        dates: Vec<String>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        values: MatrixSeries,
        missing: Vec<DMatrix<bool>>,
    ) -> Result<Self> {
        if dates.len() != values.len() || missing.len() != values.len() {
            return Err(GpcaError::Shape(format!(
                "{} dates and {} masks for {} observations",
                dates.len(),
                missing.len(),
                values.len()
            )));
        }
        if row_labels.len() != values.rows() || col_labels.len() != values.cols() {
            return Err(GpcaError::Shape(format!(
                "{}x{} labels for {}x{} observations",
                row_labels.len(),
                col_labels.len(),
                values.rows(),
                values.cols()
            )));
        }
        if missing.iter().any(|m| m.shape() != values.shape()) {
            return Err(GpcaError::Shape("missing mask does not match the observation shape".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| compare_dates(&w[0], &w[1]) != Ordering::Less) {
            return Err(GpcaError::Data(format!("dates are not strictly increasing at '{}'", w[1])));
        }
        Ok(PanelDataset { dates, row_labels, col_labels, values, missing })
    }

    /// Fully observed dataset with generated labels `r1..`, `c1..` and dates `1..`.
    pub fn from_series(values: MatrixSeries) -> Self {
        let (p1, p2) = values.shape();
        let dates = (1..=values.len()).map(|t| t.to_string()).collect();
        let row_labels = (1..=p1).map(|i| format!("r{i}")).collect();
        let col_labels = (1..=p2).map(|j| format!("c{j}")).collect();
        let missing = vec![DMatrix::from_element(p1, p2, false); values.len()];
        PanelDataset { dates, row_labels, col_labels, values, missing }
    }

    /// Same labels and mask with replaced values.
    pub fn with_values(&self, values: MatrixSeries) -> Result<Self> {
        PanelDataset::new(self.dates.clone(), self.row_labels.clone(), self.col_labels.clone(), values, self.missing.clone())
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn values(&self) -> &MatrixSeries {
        &self.values
    }

    pub fn missing_mask(&self) -> &[DMatrix<bool>] {
        &self.missing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().map(|m| m.iter().filter(|&&b| b).count()).sum()
    }

    /// Writes the wide schema; missing entries become `NA`. Values use the
    /// shortest representation that reads back exactly.
    pub fn write_wide<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        for r in &self.row_labels {
            for c in &self.col_labels {
                header.push(format!("{r}{WIDE_SEPARATOR}{c}"));
            }
        }
        out.write_record(&header).map_err(csv_error)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.clone()];
            for i in 0..self.row_labels.len() {
                for j in 0..self.col_labels.len() {
                    rec.push(if self.missing[t][(i, j)] { "NA".into() } else { self.values.get(t)[(i, j)].to_string() });
                }
            }
            out.write_record(&rec).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Numeric labels compare as numbers, everything else lexicographically.
fn compare_dates(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.cmp(b),
    }
}

fn csv_error(e: csv::Error) -> GpcaError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    GpcaError::Parse { line, message: e.to_string() }
}

/// `None` for a missing entry (empty field or `NA`).
fn parse_value(field: &str, line: u64) -> Result<Option<f64>> {
    let s = field.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("NA") {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| GpcaError::Parse { line, message: format!("'{s}' is not a number") })?;
    if !v.is_finite() {
        return Err(GpcaError::Parse { line, message: format!("non-finite value '{s}'") });
    }
    Ok(Some(v))
}

fn index_of(labels: &mut Vec<String>, lookup: &mut HashMap<String, usize>, label: &str) -> usize {
    *lookup.entry(label.to_string()).or_insert_with(|| {
        labels.push(label.to_string());
        labels.len() - 1
    })
}

/// Cells per date before assembly, keyed by date label.
struct Cells {
    rows: Vec<String>,
    cols: Vec<String>,
    by_date: Vec<(String, HashMap<(usize, usize), Option<f64>>)>,
}

impl Cells {
    fn assemble(mut self) -> Result<PanelDataset> {
        if self.by_date.is_empty() {
            return Err(GpcaError::Data("panel file has no observations".into()));
        }
        self.by_date.sort_by(|a, b| compare_dates(&a.0, &b.0));
        let (p1, p2) = (self.rows.len(), self.cols.len());
        let mut dates = Vec::with_capacity(self.by_date.len());
        let mut values = Vec::with_capacity(self.by_date.len());
        let mut missing = Vec::with_capacity(self.by_date.len());
        for (date, cells) in self.by_date {
            if cells.len() != p1 * p2 {
                return Err(GpcaError::Shape(format!(
                    "date '{date}' has {} of the {p1}x{p2} cells",
                    cells.len()
                )));
            }
            let mut m = DMatrix::zeros(p1, p2);
            let mut mask = DMatrix::from_element(p1, p2, false);
            for ((i, j), v) in cells {
                match v {
                    Some(x) => m[(i, j)] = x,
                    None => mask[(i, j)] = true,
                }
            }
            dates.push(date);
            values.push(m);
            missing.push(mask);
        }
        if let Some(w) = dates.windows(2).find(|w| compare_dates(&w[0], &w[1]) == Ordering::Equal) {
            return Err(GpcaError::Data(format!("dates '{}' and '{}' are not distinct", w[0], w[1])));
        }
        PanelDataset::new(dates, self.rows, self.cols, MatrixSeries::new(values)?, missing)
    }
}

fn read_long<R: io::Read>(reader: R) -> Result<Cells> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["date", "row", "col", "value"];
    if header.len() != 4 || header.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(GpcaError::Parse { line: 1, message: "long schema header must be date,row,col,value".into() });
    }
    let mut cells = Cells { rows: Vec::new(), cols: Vec::new(), by_date: Vec::new() };
    let (mut row_ix, mut col_ix, mut date_ix) = (HashMap::new(), HashMap::new(), HashMap::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(GpcaError::Parse { line, message: format!("expected 4 fields, found {}", rec.len()) });
        }
        let i = index_of(&mut cells.rows, &mut row_ix, &rec[1]);
        let j = index_of(&mut cells.cols, &mut col_ix, &rec[2]);
        let value = parse_value(&rec[3], line)?;
        let slot = *date_ix.entry(rec[0].to_string()).or_insert_with(|| {
            cells.by_date.push((rec[0].to_string(), HashMap::new()));
            cells.by_date.len() - 1
        });
        if cells.by_date[slot].1.insert((i, j), value).is_some() {
            return Err(GpcaError::Parse {
                line,
                message: format!("duplicate entry for date '{}', row '{}', col '{}'", &rec[0], &rec[1], &rec[2]),
            });
        }
    }
    Ok(cells)
}

fn read_wide<R: io::Read>(reader: R) -> Result<Cells> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 {
        return Err(GpcaError::Parse { line: 1, message: "wide schema needs a date column and value columns".into() });
    }
    let mut cells = Cells { rows: Vec::new(), cols: Vec::new(), by_date: Vec::new() };
    let (mut row_ix, mut col_ix) = (HashMap::new(), HashMap::new());
    let mut positions = Vec::with_capacity(header.len() - 1);
    let mut seen = HashMap::new();
    for name in header.iter().skip(1) {
        let (r, c) = name.split_once(WIDE_SEPARATOR).ok_or_else(|| GpcaError::Parse {
            line: 1,
            message: format!("column '{name}' is not of the form row{WIDE_SEPARATOR}col"),
        })?;
        let pos = (index_of(&mut cells.rows, &mut row_ix, r), index_of(&mut cells.cols, &mut col_ix, c));
        if seen.insert(pos, ()).is_some() {
            return Err(GpcaError::Parse { line: 1, message: format!("duplicate column '{name}'") });
        }
        positions.push(pos);
    }
    if positions.len() != cells.rows.len() * cells.cols.len() {
        return Err(GpcaError::Shape(format!(
            "{} value columns do not cover the {}x{} grid",
            positions.len(),
            cells.rows.len(),
            cells.cols.len()
        )));
    }
    let mut dates_seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(GpcaError::Parse { line, message: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        if dates_seen.insert(rec[0].to_string(), ()).is_some() {
            return Err(GpcaError::Parse { line, message: format!("duplicate date '{}'", &rec[0]) });
        }
        let mut row = HashMap::with_capacity(positions.len());
        for (field, &pos) in rec.iter().skip(1).zip(&positions) {
            row.insert(pos, parse_value(field, line)?);
        }
        cells.by_date.push((rec[0].to_string(), row));
    }
    Ok(cells)
}

/// Reads a panel in the given schema from any reader.
pub fn ingest_reader<R: io::Read>(reader: R, schema: Schema) -> Result<PanelDataset> {
    match schema {
        Schema::Long => read_long(reader)?.assemble(),
        Schema::Wide => read_wide(reader)?.assemble(),
    }
}

/// Reads a panel CSV. Rows and columns keep their order of first appearance;
/// dates are sorted (numerically when every label is a number).
pub fn ingest_csv(path: impl AsRef<Path>, schema: Schema) -> Result<PanelDataset> {
    ingest_reader(File::open(path)?, schema)
}

/// Fills missing entries of every cell series by linear interpolation in
/// time, carrying the nearest observation past either end.
pub fn impute(d: &PanelDataset) -> Result<PanelDataset> {
    let (p1, p2) = d.values.shape();
    let n = d.len();
    let mut out: Vec<DMatrix<f64>> = d.values.as_slice().to_vec();
    for i in 0..p1 {
        for j in 0..p2 {
            let observed: Vec<usize> = (0..n).filter(|&t| !d.missing[t][(i, j)]).collect();
            let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
                return Err(GpcaError::Data(format!(
                    "series ({}, {}) has no observed values",
                    d.row_labels[i], d.col_labels[j]
                )));
            };
            for t in 0..first {
                out[t][(i, j)] = out[first][(i, j)];
            }
            for t in last + 1..n {
                out[t][(i, j)] = out[last][(i, j)];
            }
            for w in observed.windows(2) {
                let (a, b) = (w[0], w[1]);
                let (ya, yb) = (out[a][(i, j)], out[b][(i, j)]);
                for t in a + 1..b {
                    out[t][(i, j)] = ya + (yb - ya) * (t - a) as f64 / (b - a) as f64;
                }
            }
        }
    }
    let p = DMatrix::from_element(p1, p2, false);
    PanelDataset::new(d.dates.clone(), d.row_labels.clone(), d.col_labels.clone(), MatrixSeries::new(out)?, vec![p; n])
}

/// Per-cell mean and population standard deviation over `x`.
pub(crate) fn cell_moments(x: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.len() as f64;
    let (p1, p2) = x[0].shape();
    let mut mean = DMatrix::zeros(p1, p2);
    for m in x {
        mean += m;
    }
    mean /= n;
    let mut var = DMatrix::zeros(p1, p2);
    for m in x {
        let d = m - &mean;
        var += d.component_mul(&d);
    }
    (mean, (var / n).map(f64::sqrt))
}

/// Rejects cells whose spread is negligible against their level.
pub(crate) fn check_spread(mean: &DMatrix<f64>, sd: &DMatrix<f64>, rows: &[String], cols: &[String]) -> Result<()> {
    for i in 0..sd.nrows() {
        for j in 0..sd.ncols() {
            if !(sd[(i, j)] > 1e-12 * mean[(i, j)].abs().max(1.0)) {
                return Err(GpcaError::Data(format!("series ({}, {}) has zero variance", rows[i], cols[j])));
            }
        }
    }
    Ok(())
}

/// Imputes missing entries (see [`impute`]) and standardizes every cell
/// series to mean 0 and population variance 1 over the full sample.
pub fn preprocess(d: &PanelDataset) -> Result<PanelDataset> {
    for i in 0..d.values.rows() {
        for j in 0..d.values.cols() {
            let seen = d.missing.iter().filter(|m| !m[(i, j)]).count();
            if seen < 2 {
                return Err(GpcaError::Data(format!(
                    "series ({}, {}) has {seen} observed values, need at least 2",
                    d.row_labels[i], d.col_labels[j]
                )));
            }
        }
    }
    let filled = impute(d)?;
    let (mean, sd) = cell_moments(filled.values.as_slice());
    check_spread(&mean, &sd, &d.row_labels, &d.col_labels)?;
    let values = filled.values.map(|m| (m - &mean).component_div(&sd))?;
    filled.with_values(values)
}
