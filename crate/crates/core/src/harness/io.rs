//! CSV ingestion and output.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;

use crate::audit::PrivacyLossReport;
use crate::domain::{Bounds, Dataset};
use crate::error::{Error, Result};
use crate::exec::stream_rng;

use super::sweep::SweepRow;

pub const SWEEP_HEADER: [&str; 10] = [
    "dataset_id",
    "mechanism",
    "noise_family",
    "noise_ratio",
    "m",
    "eps",
    "mse_mean",
    "mse_std",
    "linf_mean",
    "runtime_ms",
];

pub const AUDIT_HEADER: [&str; 7] = [
    "dataset_id",
    "mechanism",
    "eps",
    "epsilon_eff",
    "std_error",
    "argmax_neighbor",
    "argmax_output",
];

/// A loaded column and what had to be fixed along the way.
#[derive(Debug, Clone)]
pub struct LoadedColumn {
    pub data: Dataset,
    pub clamped: usize,
    pub skipped: usize,
}

/// Reads one numeric column. `column = None` takes the first column; a
/// non-numeric first row is then treated as a header. Non-numeric rows are
/// skipped and counted; values outside `bounds` are clamped and counted.
/// With `subsample = Some(k)`, returns `k` rows drawn without replacement.
pub fn load_csv(
    path: impl AsRef<Path>,
    column: Option<&str>,
    bounds: &Bounds,
    subsample: Option<usize>,
    seed: u64,
) -> Result<LoadedColumn> {
    let file = std::fs::File::open(path)?;
    read_column(file, column, bounds, subsample, seed)
}

pub fn read_column<R: Read>(
    reader: R,
    column: Option<&str>,
    bounds: &Bounds,
    subsample: Option<usize>,
    seed: u64,
) -> Result<LoadedColumn> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut values = Vec::new();
    let mut skipped = 0;
    let col = match column {
        Some(name) => {
            let header = records
                .next()
                .transpose()?
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?
        }
        None => 0,
    };
    let mut first = column.is_none();
    for record in records {
        let record = record?;
        match record.get(col).map(str::parse::<f64>) {
            Some(Ok(v)) if v.is_finite() => values.push(v),
            _ if first => {}
            _ => skipped += 1,
        }
        first = false;
    }
    if let Some(k) = subsample {
        if k > values.len() {
            return Err(Error::SubsampleTooLarge {
                requested: k,
                available: values.len(),
            });
        }
        let mut rng = stream_rng(seed, 0xfffd, 0);
        let picks = index::sample(&mut rng, values.len(), k);
        values = picks.into_iter().map(|i| values[i]).collect();
    }
    let mut clamped = 0;
    for v in &mut values {
        if !bounds.contains(*v) {
            *v = bounds.clamp(*v);
            clamped += 1;
        }
    }
    Ok(LoadedColumn {
        data: Dataset::new(values)?,
        clamped,
        skipped,
    })
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset_id.clone(),
            r.mechanism.clone(),
            r.noise_family.clone(),
            r.noise_ratio.to_string(),
            r.m.to_string(),
            r.eps.to_string(),
            r.mse_mean.to_string(),
            r.mse_std.to_string(),
            r.linf_mean.to_string(),
            r.runtime_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_audit_csv<W: Write>(
    rows: &[(String, String, f64, PrivacyLossReport)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AUDIT_HEADER)?;
    for (dataset_id, mechanism, eps, r) in rows {
        w.write_record([
            dataset_id.clone(),
            mechanism.clone(),
            eps.to_string(),
            r.epsilon_eff.to_string(),
            r.std_error.to_string(),
            fmt_values(r.argmax_neighbor.values()),
            fmt_values(r.argmax_output.values()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
