//! Data generation and ingestion, error metrics, and the sweep runner.

mod io;
mod sweep;
mod synthetic;

pub use io::{
    load_csv, read_column, write_audit_csv, write_sweep_csv, LoadedColumn, AUDIT_HEADER,
    SWEEP_HEADER,
};
pub use sweep::{run_sweep, NoiseRatio, ReferenceMode, SweepConfig, SweepRow};
pub use synthetic::{generate, SyntheticKind, SyntheticSpec};

use crate::domain::QuantileEstimate;
use crate::error::{Error, Result};

/// `(mean squared error, max absolute error)` between two quantile vectors.
pub fn metrics(q: &QuantileEstimate, reference: &QuantileEstimate) -> Result<(f64, f64)> {
    error_metrics(q.values(), reference.values())
}

/// [`metrics`] on plain slices.
pub fn error_metrics(q: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if q.len() != reference.len() || q.is_empty() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: reference.len(),
        });
    }
    let mut sq = 0.0;
    let mut linf: f64 = 0.0;
    for (a, b) in q.iter().zip(reference) {
        let d = (a - b).abs();
        sq += d * d;
        linf = linf.max(d);
    }
    Ok((sq / q.len() as f64, linf))
}
