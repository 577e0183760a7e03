//! Backup chunk traces: the logical, pre-deduplication sequence of
//! `(fingerprint, size)` records making up one backup.
//!
//! On disk a trace is UTF-8 text with one `<lowercase hex>,<size>` record per
//! line. A corpus is a manifest file listing trace files in chronological
//! order, one path per line, resolved relative to the manifest.

mod chunker;
mod synth;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, MAX_WIDTH, MIN_WIDTH};

pub use chunker::{chunk_bytes, chunk_file, ChunkerParams};
pub use synth::{generate_synthetic, SyntheticCorpusParams};

/// One chunk occurrence in a backup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChunkRecord {
    pub fp: Fingerprint,
    pub size: u32,
}

impl ChunkRecord {
    pub fn new(fp: Fingerprint, size: u32) -> Self {
        ChunkRecord { fp, size }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackupTrace {
    pub label: String,
    pub chunks: Vec<ChunkRecord>,
}

impl BackupTrace {
    pub fn new(label: impl Into<String>, chunks: Vec<ChunkRecord>) -> Self {
        BackupTrace {
            label: label.into(),
            chunks,
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Fingerprint width, or `None` for an empty trace.
    pub fn width(&self) -> Option<usize> {
        self.chunks.first().map(|c| c.fp.width())
    }

    pub fn fingerprints(&self) -> impl Iterator<Item = Fingerprint> + '_ {
        self.chunks.iter().map(|c| c.fp)
    }

    pub fn logical_bytes(&self) -> u64 {
        self.chunks.iter().map(|c| c.size as u64).sum()
    }

    pub fn unique_fingerprints(&self) -> HashSet<Fingerprint> {
        self.fingerprints().collect()
    }

    pub fn unique_count(&self) -> usize {
        self.unique_fingerprints().len()
    }

    /// Bytes left after deduplicating this trace on its own.
    pub fn unique_bytes(&self) -> u64 {
        let mut seen = HashSet::with_capacity(self.chunks.len());
        self.chunks
            .iter()
            .filter(|c| seen.insert(c.fp))
            .map(|c| c.size as u64)
            .sum()
    }

    /// Checks the structural invariants: uniform width and sizes in `1..=max_chunk_size`.
    pub fn validate(&self, max_chunk_size: u32) -> Result<()> {
        let width = self.width();
        for (i, c) in self.chunks.iter().enumerate() {
            if Some(c.fp.width()) != width {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("fingerprint width {} differs from {:?}", c.fp.width(), width),
                });
            }
            if c.size == 0 || c.size > max_chunk_size {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("chunk size {} outside 1..={max_chunk_size}", c.size),
                });
            }
        }
        Ok(())
    }
}

/// Logical-over-physical ratio of a sequence of backups deduplicated together.
pub fn corpus_dedup_ratio<'a>(traces: impl IntoIterator<Item = &'a BackupTrace>) -> f64 {
    let mut seen = HashSet::new();
    let (mut logical, mut physical) = (0u64, 0u64);
    for t in traces {
        for c in &t.chunks {
            logical += c.size as u64;
            if seen.insert(c.fp) {
                physical += c.size as u64;
            }
        }
    }
    if physical == 0 {
        return 1.0;
    }
    logical as f64 / physical as f64
}

/// Parses a trace from line-oriented `<hex>,<size>` records.
///
/// With `width = None` the width of the first record is enforced on the rest.
/// Blank lines are skipped.
pub fn parse_trace<R: BufRead>(
    reader: R,
    label: impl Into<String>,
    width: Option<usize>,
) -> Result<BackupTrace> {
    if let Some(w) = width {
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&w) {
            return Err(Error::InvalidParam(format!(
                "fingerprint width {w} outside [{MIN_WIDTH}, {MAX_WIDTH}]"
            )));
        }
    }
    let mut width = width;
    let mut chunks = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let (hex_fp, size) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `<hex>,<size>`, got {line:?}")))?;
        let fp = Fingerprint::from_hex(hex_fp.trim()).map_err(|e| err(e.to_string()))?;
        match width {
            Some(w) if w != fp.width() => {
                return Err(err(format!(
                    "fingerprint width {} does not match expected {w}",
                    fp.width()
                )))
            }
            None => width = Some(fp.width()),
            _ => {}
        }
        let size: i64 = size
            .trim()
            .parse()
            .map_err(|e| err(format!("bad size {size:?}: {e}")))?;
        if size <= 0 || size > u32::MAX as i64 {
            return Err(err(format!("chunk size {size} must be in 1..=2^32-1")));
        }
        chunks.push(ChunkRecord::new(fp, size as u32));
    }
    Ok(BackupTrace::new(label, chunks))
}

pub fn write_trace<W: Write>(trace: &BackupTrace, mut out: W) -> Result<()> {
    for c in &trace.chunks {
        writeln!(out, "{},{}", c.fp, c.size)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_file(path: &Path, width: Option<usize>) -> Result<BackupTrace> {
    let file = File::open(path).map_err(Error::io_at(path))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trace(BufReader::new(file), label, width)
}

pub fn write_trace_file(path: &Path, trace: &BackupTrace) -> Result<()> {
    let file = File::create(path).map_err(Error::io_at(path))?;
    write_trace(trace, BufWriter::new(file))
}

/// Reads a corpus manifest; entries are resolved relative to the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn write_manifest(path: &Path, entries: &[PathBuf]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(Error::io_at(path))?);
    for e in entries {
        writeln!(out, "{}", e.display())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus(manifest: &Path, width: Option<usize>) -> Result<Vec<BackupTrace>> {
    read_manifest(manifest)?
        .iter()
        .map(|p| read_trace_file(p, width))
        .collect()
}

/// Writes one `<label>.trace` file per backup plus `manifest.txt` into `dir`.
/// Returns the manifest path.
pub fn write_corpus(dir: &Path, traces: &[BackupTrace]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
    let mut entries = Vec::with_capacity(traces.len());
    for t in traces {
        let name = PathBuf::from(format!("{}.trace", t.label));
        write_trace_file(&dir.join(&name), t)?;
        entries.push(name);
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
