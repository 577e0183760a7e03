//! Deduplicating store simulator in the style of DDFS.
//!
//! Chunk payloads are never materialized: containers hold fingerprints and
//! sizes only. Each chunk of a written backup goes through these steps:
//!
//! 1. A cache hit (or a hit in the still-open container) marks a duplicate
//!    with no disk traffic.
//! 2. A Bloom filter miss marks the chunk unique. It is buffered in the open
//!    container; when the container fills it is flushed and its entries are
//!    added to the on-disk index (update traffic).
//! 3. A Bloom filter hit costs one index lookup (index traffic). A miss there
//!    is a false positive and falls back to step 2.
//! 4. An index hit prefetches every fingerprint of the owning container into
//!    the cache (loading traffic) and marks a duplicate.

mod bloom;
mod cache;
mod container;
mod index;

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use bloom::BloomFilter;
pub use cache::FingerprintCache;
pub use container::Container;
pub use index::FingerprintIndex;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::trace::{BackupTrace, ChunkRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreParams {
    pub container_size: u64,
    /// Bytes of fingerprint metadata the cache may hold.
    pub cache_capacity: u64,
    pub bloom_fp_rate: f64,
    pub bloom_hashes: u32,
    pub fp_metadata_size: u64,
    /// Number of distinct fingerprints the Bloom filter is sized for.
    pub expected_fingerprints: u64,
}

impl Default for StoreParams {
    fn default() -> Self {
        StoreParams {
            container_size: 4 << 20,
            cache_capacity: 512 << 20,
            bloom_fp_rate: 0.01,
            bloom_hashes: 7,
            fp_metadata_size: 32,
            expected_fingerprints: 1 << 20,
        }
    }
}

impl StoreParams {
    pub fn validate(&self) -> Result<()> {
        if self.container_size == 0
            || self.fp_metadata_size == 0
            || self.bloom_hashes == 0
            || self.expected_fingerprints == 0
        {
            return Err(Error::InvalidParam(
                "container size, metadata size, Bloom hashes and expected fingerprints must be positive".into(),
            ));
        }
        if !(self.bloom_fp_rate > 0.0 && self.bloom_fp_rate < 1.0) {
            return Err(Error::InvalidParam(format!(
                "Bloom false-positive rate must be in (0, 1), got {}",
                self.bloom_fp_rate
            )));
        }
        Ok(())
    }

    pub fn cache_entries(&self) -> usize {
        (self.cache_capacity / self.fp_metadata_size) as usize
    }
}

/// Cumulative metadata traffic in bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetadataAccessStats {
    pub update_bytes: u64,
    pub index_bytes: u64,
    pub loading_bytes: u64,
}

impl MetadataAccessStats {
    pub fn total(&self) -> u64 {
        self.update_bytes + self.index_bytes + self.loading_bytes
    }

    pub fn add(&mut self, other: &MetadataAccessStats) {
        self.update_bytes += other.update_bytes;
        self.index_bytes += other.index_bytes;
        self.loading_bytes += other.loading_bytes;
    }

    pub fn loading_share(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.loading_bytes as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreReport {
    pub label: String,
    pub logical_bytes: u64,
    pub physical_bytes: u64,
    pub unique_chunks: u64,
    pub duplicate_chunks: u64,
    pub stats: MetadataAccessStats,
}

impl StoreReport {
    pub fn add(&mut self, other: &StoreReport) {
        self.logical_bytes += other.logical_bytes;
        self.physical_bytes += other.physical_bytes;
        self.unique_chunks += other.unique_chunks;
        self.duplicate_chunks += other.duplicate_chunks;
        self.stats.add(&other.stats);
    }
}

pub const REPORT_CSV_HEADER: &str = "backup,logical_bytes,physical_bytes,unique_chunks,duplicate_chunks,update_bytes,index_bytes,loading_bytes";

fn report_row(r: &StoreReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.label,
        r.logical_bytes,
        r.physical_bytes,
        r.unique_chunks,
        r.duplicate_chunks,
        r.stats.update_bytes,
        r.stats.index_bytes,
        r.stats.loading_bytes
    )
}

pub fn write_report_csv<W: Write>(reports: &[StoreReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", report_row(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report_csv<R: BufRead>(reader: R) -> Result<Vec<StoreReport>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line == REPORT_CSV_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", f.len())));
        }
        let n = |j: usize| f[j].parse::<u64>().map_err(|e| bad(format!("{:?}: {e}", f[j])));
        out.push(StoreReport {
            label: f[0].to_string(),
            logical_bytes: n(1)?,
            physical_bytes: n(2)?,
            unique_chunks: n(3)?,
            duplicate_chunks: n(4)?,
            stats: MetadataAccessStats {
                update_bytes: n(5)?,
                index_bytes: n(6)?,
                loading_bytes: n(7)?,
            },
        });
    }
    Ok(out)
}

/// Sums the byte counts of an event log.
pub fn replay_event_log(path: &Path) -> Result<MetadataAccessStats> {
    let file = File::open(path).map_err(Error::io_at(path))?;
    let mut s = MetadataAccessStats::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let (Some(kind), Some(bytes)) = (parts.next(), parts.next()) else {
            continue;
        };
        let bytes: u64 = bytes.parse().map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("bad byte count {bytes:?}: {e}"),
        })?;
        match kind {
            "update" => s.update_bytes += bytes,
            "index" => s.index_bytes += bytes,
            "load" => s.loading_bytes += bytes,
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown event {kind:?}"),
                })
            }
        }
    }
    Ok(s)
}

/// A store rooted in a directory holding `containers/`, `index/`,
/// `report.csv` and optionally `events.log`.
pub struct Store {
    dir: PathBuf,
    params: StoreParams,
    bloom: BloomFilter,
    cache: FingerprintCache,
    index: FingerprintIndex,
    /// Fingerprints of each flushed container, by id.
    containers: Vec<Vec<Fingerprint>>,
    open: Vec<ChunkRecord>,
    open_set: HashSet<Fingerprint>,
    open_bytes: u64,
    events: Option<BufWriter<File>>,
    totals: StoreReport,
}

impl Store {
    /// Creates a fresh store; fails if `dir` already holds one.
    pub fn create(dir: &Path, params: StoreParams) -> Result<Self> {
        params.validate()?;
        if dir.join("report.csv").exists() {
            return Err(Error::InvalidParam(format!(
                "{} already contains a store",
                dir.display()
            )));
        }
        fs::create_dir_all(dir.join("containers")).map_err(Error::io_at(dir))?;
        let mut report = File::create(dir.join("report.csv")).map_err(Error::io_at(dir))?;
        writeln!(report, "{REPORT_CSV_HEADER}")?;
        Self::open(dir, params)
    }

    /// Opens an existing store. The cache starts cold.
    pub fn open(dir: &Path, params: StoreParams) -> Result<Self> {
        params.validate()?;
        let cdir = dir.join("containers");
        let index = FingerprintIndex::open(&dir.join("index"))?;
        let mut containers = Vec::new();
        for (expect, id) in Container::list(&cdir)?.into_iter().enumerate() {
            if id != expect as u64 {
                return Err(Error::Corrupt {
                    path: cdir.clone(),
                    msg: format!("missing container {expect}"),
                });
            }
            let c = Container::read(&Container::path_in(&cdir, id))?;
            containers.push(c.entries.into_iter().map(|(fp, _)| fp).collect());
        }
        let mut bloom = BloomFilter::with_rate(
            params.expected_fingerprints,
            params.bloom_fp_rate,
            params.bloom_hashes,
        );
        for fp in index.fingerprints() {
            bloom.insert(fp);
        }
        let report_path = dir.join("report.csv");
        let rows = read_report_csv(BufReader::new(
            File::open(&report_path).map_err(Error::io_at(&report_path))?,
        ))?;
        let mut totals = StoreReport {
            label: "total".into(),
            ..Default::default()
        };
        for r in &rows {
            totals.add(r);
        }
        Ok(Store {
            dir: dir.to_path_buf(),
            params,
            bloom,
            cache: FingerprintCache::new(params.cache_entries()),
            index,
            containers,
            open: Vec::new(),
            open_set: HashSet::new(),
            open_bytes: 0,
            events: None,
            totals,
        })
    }

    /// Appends one line per metadata touch to `events.log`.
    pub fn with_event_log(mut self) -> Result<Self> {
        let path = self.event_log_path();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(Error::io_at(&path))?;
        self.events = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn event_log_path(&self) -> PathBuf {
        self.dir.join("events.log")
    }

    pub fn params(&self) -> &StoreParams {
        &self.params
    }

    pub fn index_len(&self) -> usize {
        self.index.len()
    }

    pub fn container_count(&self) -> usize {
        self.containers.len()
    }

    pub fn cache(&self) -> &FingerprintCache {
        &self.cache
    }

    /// Cumulative report over every backup written to this store.
    pub fn totals(&self) -> &StoreReport {
        &self.totals
    }

    fn event(&mut self, kind: &str, bytes: u64, detail: std::fmt::Arguments<'_>) -> Result<()> {
        if let Some(out) = self.events.as_mut() {
            writeln!(out, "{kind} {bytes} {detail}")?;
        }
        Ok(())
    }

    fn flush_container(&mut self, report: &mut StoreReport) -> Result<()> {
        if self.open.is_empty() {
            return Ok(());
        }
        let id = self.containers.len() as u64;
        let c = Container {
            id,
            entries: self.open.drain(..).map(|r| (r.fp, r.size)).collect(),
        };
        c.write(&self.dir.join("containers"))?;
        let fps: Vec<Fingerprint> = c.entries.iter().map(|(fp, _)| *fp).collect();
        self.index.insert_batch(id, &fps)?;
        let bytes = self.params.fp_metadata_size * fps.len() as u64;
        report.stats.update_bytes += bytes;
        self.event("update", bytes, format_args!("container={id} entries={}", fps.len()))?;
        self.containers.push(fps);
        self.open_set.clear();
        self.open_bytes = 0;
        Ok(())
    }

    fn is_duplicate(&mut self, fp: &Fingerprint, report: &mut StoreReport) -> Result<bool> {
        if self.cache.get(fp).is_some() || self.open_set.contains(fp) {
            return Ok(true);
        }
        if !self.bloom.query(fp) {
            return Ok(false);
        }
        let meta = self.params.fp_metadata_size;
        report.stats.index_bytes += meta;
        self.event("index", meta, format_args!("fp={fp}"))?;
        let Some(id) = self.index.get(fp) else {
            return Ok(false);
        };
        let fps = &self.containers[id as usize];
        let bytes = meta * fps.len() as u64;
        report.stats.loading_bytes += bytes;
        self.cache.load(id, fps);
        self.event("load", bytes, format_args!("container={id}"))?;
        Ok(true)
    }

    /// Deduplicates one backup stream. The open container is flushed at the end.
    pub fn write_backup(&mut self, trace: &BackupTrace) -> Result<StoreReport> {
        let mut report = StoreReport {
            label: trace.label.clone(),
            ..Default::default()
        };
        for c in &trace.chunks {
            report.logical_bytes += c.size as u64;
            if self.is_duplicate(&c.fp, &mut report)? {
                report.duplicate_chunks += 1;
                continue;
            }
            if !self.open.is_empty() && self.open_bytes + c.size as u64 > self.params.container_size {
                self.flush_container(&mut report)?;
            }
            self.open.push(*c);
            self.open_set.insert(c.fp);
            self.open_bytes += c.size as u64;
            self.bloom.insert(&c.fp);
            report.physical_bytes += c.size as u64;
            report.unique_chunks += 1;
        }
        self.flush_container(&mut report)?;
        self.index.maybe_compact()?;
        if let Some(out) = self.events.as_mut() {
            out.flush()?;
        }
        let path = self.dir.join("report.csv");
        let mut csv = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(Error::io_at(&path))?;
        writeln!(csv, "{}", report_row(&report))?;
        self.totals.add(&report);
        Ok(report)
    }

    /// Per-backup rows recorded in `report.csv`.
    pub fn reports(&self) -> Result<Vec<StoreReport>> {
        let path = self.dir.join("report.csv");
        read_report_csv(BufReader::new(File::open(&path).map_err(Error::io_at(&path))?))
    }

    /// Reads chunks back from container files in recipe order.
    pub fn restore(&self, recipe: &[Fingerprint], label: &str) -> Result<BackupTrace> {
        let cdir = self.dir.join("containers");
        let mut loaded: HashMap<u64, HashMap<Fingerprint, u32>> = HashMap::new();
        let mut chunks = Vec::with_capacity(recipe.len());
        for fp in recipe {
            let id = self.index.get(fp).ok_or(Error::MissingFingerprint(*fp))?;
            let entries = match loaded.entry(id) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let c = Container::read(&Container::path_in(&cdir, id))?;
                    e.insert(c.entries.into_iter().collect())
                }
            };
            let size = entries.get(fp).ok_or(Error::MissingFingerprint(*fp))?;
            chunks.push(ChunkRecord::new(*fp, *size));
        }
        Ok(BackupTrace::new(label, chunks))
    }

    /// Compacts the index and flushes the event log.
    pub fn close(mut self) -> Result<()> {
        self.index.compact()?;
        if let Some(out) = self.events.as_mut() {
            out.flush()?;
        }
        Ok(())
    }
}
