//! Frequency and neighbor co-occurrence tables, and rank-pairing frequency
//! analysis between a ciphertext and a plaintext table.
//!
//! Ranking sorts by frequency descending and breaks ties by fingerprint bytes
//! ascending, so every analysis is reproducible.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::trace::BackupTrace;

/// Cipher block size used to bucket chunk sizes.
pub const DEFAULT_BLOCK_SIZE: u32 = 16;

pub type SizeMap = HashMap<Fingerprint, u32>;

/// Occurrence count per fingerprint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<Fingerprint, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self, fp: Fingerprint) {
        *self.counts.entry(fp).or_insert(0) += 1;
    }

    pub fn insert(&mut self, fp: Fingerprint, count: u64) {
        self.counts.insert(fp, count);
    }

    pub fn get(&self, fp: &Fingerprint) -> u64 {
        self.counts.get(fp).copied().unwrap_or(0)
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.counts.contains_key(fp)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Fingerprint, &u64)> {
        self.counts.iter()
    }

    /// Entries in rank order.
    pub fn ranked(&self) -> Vec<(Fingerprint, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(f, c)| (*f, *c)).collect();
        sort_ranked(&mut v);
        v
    }

    /// The `k` highest-ranked entries, in rank order.
    pub fn top(&self, k: usize) -> Vec<(Fingerprint, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(f, c)| (*f, *c)).collect();
        if k < v.len() {
            v.select_nth_unstable_by(k, rank_cmp);
            v.truncate(k);
        }
        sort_ranked(&mut v);
        v
    }

    /// Writes `<hex fp> <count>` lines in rank order.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for (fp, c) in self.ranked() {
            writeln!(out, "{fp} {c}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = FrequencyTable::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (fp, c) = line
                .trim()
                .split_once(' ')
                .ok_or_else(|| err(format!("expected `<hex> <count>`, got {line:?}")))?;
            let fp = Fingerprint::from_hex(fp).map_err(|e| err(e.to_string()))?;
            let c: u64 = c.trim().parse().map_err(|e| err(format!("{e}")))?;
            if c == 0 {
                return Err(err("count must be positive".into()));
            }
            t.insert(fp, c);
        }
        Ok(t)
    }
}

impl FromIterator<Fingerprint> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = Fingerprint>>(iter: I) -> Self {
        let mut t = FrequencyTable::new();
        iter.into_iter().for_each(|fp| t.increment(fp));
        t
    }
}

fn rank_cmp(a: &(Fingerprint, u64), b: &(Fingerprint, u64)) -> std::cmp::Ordering {
    b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn sort_ranked(v: &mut [(Fingerprint, u64)]) {
    v.sort_unstable_by(rank_cmp);
}

/// Per-chunk co-occurrence counts with its left (or right) neighbors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborTable {
    co: HashMap<Fingerprint, FrequencyTable>,
}

impl NeighborTable {
    pub fn record(&mut self, chunk: Fingerprint, neighbor: Fingerprint) {
        self.co.entry(chunk).or_default().increment(neighbor);
    }

    /// Neighbor set of `chunk` with co-occurrence counts.
    pub fn get(&self, chunk: &Fingerprint) -> Option<&FrequencyTable> {
        self.co.get(chunk)
    }

    pub fn len(&self) -> usize {
        self.co.len()
    }

    pub fn is_empty(&self) -> bool {
        self.co.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Fingerprint, &FrequencyTable)> {
        self.co.iter()
    }
}

/// Everything one pass over a trace yields.
#[derive(Debug, Clone, Default)]
pub struct TraceTables {
    pub freq: FrequencyTable,
    pub left: NeighborTable,
    pub right: NeighborTable,
    pub sizes: SizeMap,
}

/// Builds the frequency table, left and right neighbor tables, and the size
/// of every chunk in a single pass.
pub fn count(trace: &BackupTrace) -> TraceTables {
    let mut t = TraceTables::default();
    let chunks = &trace.chunks;
    for (i, c) in chunks.iter().enumerate() {
        t.freq.increment(c.fp);
        t.sizes.entry(c.fp).or_insert(c.size);
        if i > 0 {
            t.left.record(c.fp, chunks[i - 1].fp);
        }
        if let Some(next) = chunks.get(i + 1) {
            t.right.record(c.fp, next.fp);
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InferredPair {
    pub cipher: Fingerprint,
    pub plain: Fingerprint,
}

impl InferredPair {
    pub fn new(cipher: Fingerprint, plain: Fingerprint) -> Self {
        InferredPair { cipher, plain }
    }
}

/// Pairs the i-th ranked ciphertext with the i-th ranked plaintext for
/// `i < min(x, |yc|, |ym|)`.
pub fn freq_analysis(yc: &FrequencyTable, ym: &FrequencyTable, x: usize) -> Vec<InferredPair> {
    let n = x.min(yc.len()).min(ym.len());
    if n == 0 {
        return Vec::new();
    }
    rank_pair(yc.top(n), ym.top(n))
}

fn rank_pair(c: Vec<(Fingerprint, u64)>, m: Vec<(Fingerprint, u64)>) -> Vec<InferredPair> {
    c.into_iter()
        .zip(m)
        .map(|((c, _), (m, _))| InferredPair::new(c, m))
        .collect()
}

/// Frequency tables bucketed by `ceil(size / block_size)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SizeClassTable {
    pub classes: BTreeMap<u64, FrequencyTable>,
}

impl SizeClassTable {
    /// Buckets every entry of `table`. Entries without a known size are
    /// skipped.
    pub fn classify(table: &FrequencyTable, sizes: &SizeMap, block_size: u32) -> Self {
        let mut classes: BTreeMap<u64, FrequencyTable> = BTreeMap::new();
        for (fp, &c) in table.iter() {
            let Some(&size) = sizes.get(fp) else {
                debug_assert!(false, "no size recorded for {fp}");
                continue;
            };
            classes
                .entry(block_count(size, block_size))
                .or_default()
                .insert(*fp, c);
        }
        SizeClassTable { classes }
    }
}

pub fn block_count(size: u32, block_size: u32) -> u64 {
    (size as u64).div_ceil(block_size as u64)
}

/// Size-aware analysis: for every block count present on both sides, pairs up
/// to `x` ranked entries within that class. Classes are visited in ascending
/// order, so the result may hold more than `x` pairs in total.
pub fn size_aware_freq_analysis(
    yc: &FrequencyTable,
    c_sizes: &SizeMap,
    ym: &FrequencyTable,
    m_sizes: &SizeMap,
    x: usize,
    block_size: u32,
) -> Vec<InferredPair> {
    if x == 0 || yc.is_empty() || ym.is_empty() {
        return Vec::new();
    }
    let bc = SizeClassTable::classify(yc, c_sizes, block_size);
    let mut bm = SizeClassTable::classify(ym, m_sizes, block_size);
    let mut out = Vec::new();
    for (s, c_class) in &bc.classes {
        if let Some(m_class) = bm.classes.remove(s) {
            out.extend(freq_analysis(c_class, &m_class, x));
        }
    }
    out
}
