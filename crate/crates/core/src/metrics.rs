//! Per-step training metrics as CSV, flushed after every row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const HEADER: &str = "meta_step,outer_loss,kl_value,mean_inner_loss,eval_accuracy,wallclock_seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub meta_step: u64,
    pub outer_loss: f64,
    pub kl_value: Option<f64>,
    pub mean_inner_loss: f64,
    pub eval_accuracy: Option<f64>,
    pub wallclock_seconds: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.meta_step,
            self.outer_loss,
            cell(self.kl_value),
            self.mean_inner_loss,
            cell(self.eval_accuracy),
            cell(self.wallclock_seconds)
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Format {
            what: "metrics row",
            reason: format!("cannot parse {line:?}"),
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(bad());
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        Ok(Self {
            meta_step: cells[0].parse().map_err(|_| bad())?,
            outer_loss: cells[1].parse().map_err(|_| bad())?,
            kl_value: opt(cells[2])?,
            mean_inner_loss: cells[3].parse().map_err(|_| bad())?,
            eval_accuracy: opt(cells[4])?,
            wallclock_seconds: opt(cells[5])?,
        })
    }
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            last_step: None,
        };
        w.line(HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    /// Appends a row; steps must strictly increase.
    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.meta_step <= s) {
            return Err(Error::validation(format!(
                "meta_step {} does not follow {}",
                row.meta_step,
                self.last_step.unwrap_or_default()
            )));
        }
        self.last_step = Some(row.meta_step);
        self.line(&row.to_csv())
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Format {
            what: "metrics file",
            reason: "missing header".into(),
        });
    }
    lines.map(MetricsRow::parse).collect()
}
