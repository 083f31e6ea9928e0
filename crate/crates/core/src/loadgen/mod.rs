//! distwalk-style load generation over real TCP.
//!
//! A server burns a calibrated amount of CPU per request and echoes the
//! client's send timestamp; a multi-threaded client paces requests at the
//! trace's rate open-loop (send at the scheduled instant regardless of
//! outstanding replies), splitting its work into sessions that each open a
//! fresh connection. Round-trip times come out as [`crate::sim::ResponseRecord`]s,
//! so the live and simulated paths share reporting.

mod client;
mod proto;
mod server;

pub use client::{run_client, run_client_with_targets, ClientConfig, ClientReport, SharedTargets};
pub use proto::{read_frame, write_frame, Frame};
pub use server::Server;

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadGenError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("client has no targets")]
    NoTargets,
}

/// Request rates, one per trace segment. In the standard configuration each
/// rate is held for 60 seconds, so a trace's duration is `60 * len` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub rates: Vec<f64>,
}

impl WorkloadTrace {
    pub fn new(rates: Vec<f64>) -> Result<Self, LoadGenError> {
        if rates.is_empty() {
            return Err(LoadGenError::InvalidTrace("trace has no rates".into()));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(LoadGenError::InvalidTrace("rates must be finite and >= 0".into()));
        }
        Ok(Self { rates })
    }

    /// Parses the trace file format: one decimal rate per line.
    pub fn from_file(path: &Path) -> Result<Self, LoadGenError> {
        let body = std::fs::read_to_string(path)?;
        let mut rates = Vec::new();
        for (lineno, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rate: f64 = line.parse().map_err(|_| {
                LoadGenError::InvalidTrace(format!(
                    "{}:{}: not a number: {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            rates.push(rate);
        }
        Self::new(rates)
    }

    pub fn to_file(&self, path: &Path) -> Result<(), LoadGenError> {
        let mut body = String::new();
        for r in &self.rates {
            body.push_str(&format!("{r}\n"));
        }
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Duration at the standard 60 s per segment.
    pub fn duration_s(&self) -> i64 {
        self.rates.len() as i64 * 60
    }
}
