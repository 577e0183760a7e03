//! Evaluation quantities and result tables.

use std::io::{BufRead, Write};

use crate::attacks::InferredPairSet;
use crate::defenses::GroundTruth;
use crate::error::{Error, Result};
use crate::store::StoreReport;
use crate::trace::BackupTrace;

/// Correctly inferred and total unique ciphertext fingerprints of `target`.
pub fn inference_counts(t: &InferredPairSet, gt: &GroundTruth, target: &BackupTrace) -> (usize, usize) {
    let unique = target.unique_fingerprints();
    let correct = unique
        .iter()
        .filter(|c| matches!((t.get(c), gt.get(c)), (Some(m), Some(truth)) if m == *truth))
        .count();
    (correct, unique.len())
}

/// Fraction of unique ciphertext chunks of `target` whose plaintext is
/// correctly inferred. An empty target has rate 0.
pub fn inference_rate(t: &InferredPairSet, gt: &GroundTruth, target: &BackupTrace) -> f64 {
    match inference_counts(t, gt, target) {
        (_, 0) => 0.0,
        (hit, total) => hit as f64 / total as f64,
    }
}

pub fn saving_from_bytes(logical: u64, physical: u64) -> Result<f64> {
    if logical == 0 {
        return Err(Error::EmptyReport);
    }
    Ok(1.0 - physical as f64 / logical as f64)
}

pub fn storage_saving(report: &StoreReport) -> Result<f64> {
    saving_from_bytes(report.logical_bytes, report.physical_bytes)
}

pub fn dedup_ratio(report: &StoreReport) -> Result<f64> {
    if report.logical_bytes == 0 || report.physical_bytes == 0 {
        return Err(Error::EmptyReport);
    }
    Ok(report.logical_bytes as f64 / report.physical_bytes as f64)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalResult {
    pub attack: String,
    pub defense: String,
    pub aux: String,
    pub target: String,
    pub inference_rate: f64,
    pub leakage_rate: f64,
    pub storage_saving: f64,
    pub dedup_ratio: f64,
}

pub const EVAL_CSV_HEADER: &str =
    "attack,defense,aux,target,inference_rate,leakage_rate,storage_saving,dedup_ratio";

/// Writes results as CSV with a fixed column order.
pub fn compare_runs<W: Write>(results: &[EvalResult], mut sink: W) -> Result<()> {
    writeln!(sink, "{EVAL_CSV_HEADER}")?;
    for r in results {
        writeln!(
            sink,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.attack,
            r.defense,
            r.aux,
            r.target,
            r.inference_rate,
            r.leakage_rate,
            r.storage_saving,
            r.dedup_ratio
        )?;
    }
    sink.flush()?;
    Ok(())
}

/// Parses CSV produced by [`compare_runs`].
pub fn read_results<R: BufRead>(reader: R) -> Result<Vec<EvalResult>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == EVAL_CSV_HEADER) {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        out.push(EvalResult {
            attack: f[0].into(),
            defense: f[1].into(),
            aux: f[2].into(),
            target: f[3].into(),
            inference_rate: num(f[4])?,
            leakage_rate: num(f[5])?,
            storage_saving: num(f[6])?,
            dedup_ratio: num(f[7])?,
        });
    }
    Ok(out)
}

/// (auxiliary, target) index pairs where the target follows the auxiliary
/// backup by each gap in `gaps`, over `snapshots` backups.
pub fn sliding_window_cells(snapshots: usize, gaps: &[usize]) -> Vec<(usize, usize)> {
    gaps.iter()
        .filter(|&&g| g > 0)
        .flat_map(|&g| (0..snapshots.saturating_sub(g)).map(move |a| (a, a + g)))
        .collect()
}
