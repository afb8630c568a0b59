//! Newline-delimited batch-loss logs.
//!
//! One JSON object per line, one line per training step:
//!
//! ```text
//! {"step":0,"indices":[3,7],"mean_loss":1.5}
//! {"step":1,"indices":[1,4],"mean_loss":1.25,"per_sample_losses":[1.0,1.5]}
//! ```
//!
//! `per_sample_losses` is only present for instrumented runs.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{BatchRecord, SampleId, ScoreError};

/// Allowed gap between `mean_loss` and the mean of `per_sample_losses`.
pub const MEAN_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: step {step} does not follow step {prev}")]
    NonMonotoneStep { line: usize, prev: u64, step: u64 },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("line {line}: mean_loss {mean_loss} disagrees with per-sample mean {per_sample_mean}")]
    Inconsistent {
        line: usize,
        mean_loss: f64,
        per_sample_mean: f64,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub step: u64,
    pub indices: Vec<SampleId>,
    pub mean_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample_losses: Option<Vec<f64>>,
}

impl LogRecord {
    pub fn new(step: u64, indices: Vec<SampleId>, mean_loss: f64) -> Self {
        Self {
            step,
            indices,
            mean_loss,
            per_sample_losses: None,
        }
    }

    pub fn with_per_sample(mut self, losses: Vec<f64>) -> Self {
        self.per_sample_losses = Some(losses);
        self
    }

    /// Checks the record's own invariants. `line` is only used for messages.
    pub fn validate(&self, line: usize) -> Result<(), LogError> {
        if !self.mean_loss.is_finite() {
            return Err(LogError::Invalid {
                line,
                msg: format!("non-finite mean_loss {}", self.mean_loss),
            });
        }
        if let Err(e) = BatchRecord::new(self.step, self.indices.clone(), self.mean_loss) {
            return Err(LogError::Invalid {
                line,
                msg: e.to_string(),
            });
        }
        if let Some(per) = &self.per_sample_losses {
            if per.len() != self.indices.len() {
                return Err(LogError::Invalid {
                    line,
                    msg: format!(
                        "per_sample_losses has {} entries for {} indices",
                        per.len(),
                        self.indices.len()
                    ),
                });
            }
            let mean = per.iter().sum::<f64>() / per.len() as f64;
            let gap = (mean - self.mean_loss).abs();
            if gap.is_nan() || gap > MEAN_CONSISTENCY_TOL {
                return Err(LogError::Inconsistent {
                    line,
                    mean_loss: self.mean_loss,
                    per_sample_mean: mean,
                });
            }
        }
        Ok(())
    }

    pub fn to_batch(&self) -> Result<BatchRecord, ScoreError> {
        BatchRecord::new(self.step, self.indices.clone(), self.mean_loss)
    }
}

/// Streaming reader over a log. Yields validated records in file order and
/// enforces strictly increasing steps. Blank lines are skipped.
pub struct LogReader<R> {
    inner: R,
    line: usize,
    prev_step: Option<u64>,
    buf: String,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            prev_step: None,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<LogRecord, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let line = self.line;
            let rec: LogRecord = match serde_json::from_str(text) {
                Ok(r) => r,
                Err(source) => return Some(Err(LogError::Malformed { line, source })),
            };
            if let Some(prev) = self.prev_step {
                if rec.step <= prev {
                    return Some(Err(LogError::NonMonotoneStep {
                        line,
                        prev,
                        step: rec.step,
                    }));
                }
            }
            if let Err(e) = rec.validate(line) {
                return Some(Err(e));
            }
            self.prev_step = Some(rec.step);
            return Some(Ok(rec));
        }
    }
}

pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    LogReader::new(reader).collect()
}

pub fn read_log_file(path: impl AsRef<std::path::Path>) -> Result<Vec<LogRecord>, LogError> {
    let f = std::fs::File::open(path)?;
    parse_log(io::BufReader::new(f))
}

/// Writes one record as a single line. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_record<W: Write>(mut w: W, rec: &LogRecord) -> io::Result<()> {
    serde_json::to_writer(&mut w, rec)?;
    w.write_all(b"\n")
}

pub fn write_log<W: Write>(mut w: W, records: &[LogRecord]) -> io::Result<()> {
    for r in records {
        write_record(&mut w, r)?;
    }
    Ok(())
}
