//! Panel data ingestion, preprocessing and rolling out-of-sample validation.

mod panel;
mod rolling;

pub use panel::{impute, ingest_csv, ingest_reader, preprocess, PanelDataset, Schema, WIDE_SEPARATOR};
pub use rolling::{
    loading_drift, period_metrics, rolling_validate, rolling_validate_with, PeriodFit, RollingConfig, RollingReport,
    YearRecord,
};
