use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::{Segment, SegmentMae};
use crate::error::{Error, Result};

/// Mean and population standard deviation of a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        // Offset by the first value so a constant slice has exactly zero spread.
        let mean = values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}±{:.2}", self.mean, self.std)
    }
}

/// Per-segment MAE aggregated across runs. A segment absent from every run
/// stays absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub angle: [Option<MeanStd>; 3],
    pub velocity: [Option<MeanStd>; 3],
}

impl SegmentReport {
    pub fn from_runs(runs: &[SegmentMae]) -> Self {
        let mut out = SegmentReport::default();
        for s in Segment::ALL {
            let i = s.index();
            let a: Vec<f64> = runs.iter().filter_map(|r| r.angle[i]).collect();
            let w: Vec<f64> = runs.iter().filter_map(|r| r.velocity[i]).collect();
            out.angle[i] = MeanStd::of(&a);
            out.velocity[i] = MeanStd::of(&w);
        }
        out
    }

    pub fn angle(&self, s: Segment) -> Option<MeanStd> {
        self.angle[s.index()]
    }

    pub fn velocity(&self, s: Segment) -> Option<MeanStd> {
        self.velocity[s.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Estimator tracking error per segment.
    pub tracking: SegmentReport,
    /// Target error over episodes that did not fail; `None` if all failed.
    pub target_error: Option<MeanStd>,
    /// Percentage of failed episodes.
    pub failure_rate: f64,
    pub episodes: usize,
}

/// Column headers shared by all segment tables.
pub fn segment_columns() -> Vec<String> {
    let mut cols = Vec::new();
    for s in Segment::ALL {
        for q in ["angle", "velocity"] {
            cols.push(format!("{}_{q}_mean", s.as_str()));
            cols.push(format!("{}_{q}_std", s.as_str()));
        }
    }
    cols
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Cells matching `segment_columns`; absent segments are left empty.
pub fn segment_cells(r: &SegmentReport) -> Vec<String> {
    let mut cells = Vec::new();
    for s in Segment::ALL {
        for m in [r.angle(s), r.velocity(s)] {
            cells.push(opt(m.map(|m| m.mean)));
            cells.push(opt(m.map(|m| m.std)));
        }
    }
    cells
}

/// A delimiter-separated table: header plus rows of equal width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Length {
                context: "table row vs header",
                left: row.len(),
                right: self.header.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let encode = |e: csv::Error| Error::invalid(format!("table encoding: {e}"));
        w.write_record(&self.header).map_err(encode)?;
        for r in &self.rows {
            w.write_record(r).map_err(encode)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("table encoding: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

impl MetricsReport {
    pub fn table(&self, label: &str) -> Result<Table> {
        let mut header = vec![
            "label".to_string(),
            "episodes".into(),
            "te_mean".into(),
            "te_std".into(),
            "fr".into(),
        ];
        header.extend(segment_columns());
        let mut t = Table::new(header);
        let mut row = vec![
            label.to_string(),
            self.episodes.to_string(),
            opt(self.target_error.map(|m| m.mean)),
            opt(self.target_error.map(|m| m.std)),
            self.failure_rate.to_string(),
        ];
        row.extend(segment_cells(&self.tracking));
        t.push(row)?;
        Ok(t)
    }
}
