use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, LrSchedule, Variant};
use crate::harness::train::{EpochLog, EvalMetrics};
use crate::weightgen::Setting;

/// Column order of every results table.
pub const CSV_HEADER: &str = "variant,setting,AP,AP50,AP75,AUC3,AUC5,AUC10,seed,wall_s";

/// One evaluated (variant, setting, seed) cell. Metrics are fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: Variant,
    pub setting: Setting,
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "AUC3")]
    pub auc3: f64,
    #[serde(rename = "AUC5")]
    pub auc5: f64,
    #[serde(rename = "AUC10")]
    pub auc10: f64,
    pub seed: u64,
    pub wall_s: f64,
}

impl ResultRow {
    pub fn new(variant: Variant, setting: Setting, seed: u64, m: &EvalMetrics, wall_s: f64) -> Self {
        Self {
            variant,
            setting,
            ap: m.ap,
            ap50: m.ap50,
            ap75: m.ap75,
            auc3: m.auc3,
            auc5: m.auc5,
            auc10: m.auc10,
            seed,
            wall_s,
        }
    }
}

/// Outcome of `run`: training trace, final metrics and the config echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
    pub epochs: Vec<EpochLog>,
    pub final_metrics: EvalMetrics,
    pub rows: Vec<ResultRow>,
    pub wall_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

/// Rows as CSV under [`CSV_HEADER`]; the header is written even with no rows.
pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Format(format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_rows_csv(&report.rows, file),
        ReportFormat::Json => write_json(report, file),
    }
}

pub(crate) fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
