//! Structured evaluation reports and their JSON/CSV serializations.
//!
//! JSON follows the versioned `srab-report/1` schema; emitting and
//! re-parsing a report is byte-stable. CSV rows carry the fixed columns
//! `image_id,alpha,lr_psnr,sr_psnr,outer_sr_psnr,robustness_index`
//! (transfer reports emit a matrix instead). The `+∞` PSNR of identical
//! images serializes as `{"psnr": null, "identical": true}` in JSON and as
//! `inf` in CSV.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const REPORT_SCHEMA: &str = "srab-report/1";

/// A PSNR value with an explicit identical-images sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    /// Decibel value; `None` when the images are identical.
    pub psnr: Option<f64>,
    pub identical: bool,
}

impl Psnr {
    pub fn from_db(db: f64) -> Self {
        if db.is_infinite() {
            Self {
                psnr: None,
                identical: true,
            }
        } else {
            Self {
                psnr: Some(db),
                identical: false,
            }
        }
    }

    /// Back to an `f64`, with the sentinel mapping to `+∞`.
    pub fn db(&self) -> f64 {
        match self.psnr {
            Some(v) => v,
            None => f64::INFINITY,
        }
    }

    fn csv_cell(&self) -> String {
        match self.psnr {
            Some(v) => format!("{:.6}", v),
            None => "inf".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Attack,
    AlphaSweep,
    Transfer,
    RobustnessSweep,
    Defense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub kind: String,
    pub alpha: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    pub alpha: f64,
    pub lr_psnr: Option<Psnr>,
    pub sr_psnr: Option<Psnr>,
    pub outer_sr_psnr: Option<Psnr>,
    pub robustness_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub mean_lr_psnr: Psnr,
    pub mean_sr_psnr: Psnr,
    pub mean_outer_sr_psnr: Option<Psnr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// `mean_sr_psnr[s][t]`: target `t` on examples attacked against `s`.
    pub mean_sr_psnr: Vec<Vec<Psnr>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub n_samples: usize,
    pub alpha: f64,
    /// Spearman correlation between robustness index and SR PSNR; `None`
    /// (with `degenerate` set) when the ranks carry no variance.
    pub spearman: Option<f64>,
    pub degenerate: bool,
}

/// Top-level report record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub toolkit_version: String,
    /// Unix timestamp; populated from `SOURCE_DATE_EPOCH` by the CLI so
    /// identical invocations stay byte-identical.
    pub created_unix: Option<u64>,
    pub kind: ReportKind,
    pub models: Vec<String>,
    pub attack: Option<AttackSummary>,
    pub images: Vec<ImageRow>,
    pub summary: Vec<AlphaSummary>,
    pub transfer: Option<TransferMatrix>,
    pub robustness: Option<RobustnessSummary>,
}

impl EvalReport {
    pub fn new() -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: None,
            kind: ReportKind::Attack,
            models: Vec::new(),
            attack: None,
            images: Vec::new(),
            summary: Vec::new(),
            transfer: None,
            robustness: None,
        }
    }

    fn check_not_empty(&self) -> Result<()> {
        if self.images.is_empty() && self.transfer.is_none() && self.robustness.is_none() {
            return Err(Error::EmptyReport);
        }
        Ok(())
    }

    /// Pretty JSON under the `srab-report/1` schema.
    pub fn to_json(&self) -> Result<String> {
        self.check_not_empty()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Config(format!(
                "unknown report schema '{}'",
                report.schema
            )));
        }
        Ok(report)
    }

    /// CSV rendering: per-image rows, or the matrix for transfer reports.
    pub fn to_csv(&self) -> Result<String> {
        self.check_not_empty()?;
        let mut out = String::new();
        if let Some(matrix) = &self.transfer {
            write!(out, "source").unwrap();
            for t in &matrix.targets {
                write!(out, ",{}", t).unwrap();
            }
            out.push('\n');
            for (s, row) in matrix.sources.iter().zip(&matrix.mean_sr_psnr) {
                write!(out, "{}", s).unwrap();
                for cell in row {
                    write!(out, ",{}", cell.csv_cell()).unwrap();
                }
                out.push('\n');
            }
            return Ok(out);
        }

        out.push_str("image_id,alpha,lr_psnr,sr_psnr,outer_sr_psnr,robustness_index\n");
        for row in &self.images {
            let cell = |p: &Option<Psnr>| p.as_ref().map(Psnr::csv_cell).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.image_id,
                format_alpha(row.alpha),
                cell(&row.lr_psnr),
                cell(&row.sr_psnr),
                cell(&row.outer_sr_psnr),
                row.robustness_index
                    .map(|v| format!("{:.6}", v))
                    .unwrap_or_default(),
            )
            .unwrap();
        }
        Ok(out)
    }

    /// Writes the report in the requested format.
    pub fn emit(&self, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
        let text = match format {
            ReportFormat::Json => self.to_json()?,
            ReportFormat::Csv => self.to_csv()?,
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl Default for EvalReport {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Formats alpha in the paper's `k/255` units when it lies on that grid.
pub fn format_alpha(alpha: f64) -> String {
    let k = alpha * 255.0;
    if (k - k.round()).abs() < 1e-9 {
        format!("{}/255", k.round() as i64)
    } else {
        format!("{}", alpha)
    }
}
