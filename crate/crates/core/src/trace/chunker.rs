use std::io::Read;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

use super::{BackupTrace, ChunkRecord};

/// Irreducible polynomial of degree 53 over GF(2).
const POLYNOMIAL: u64 = 0x3DA3358B4DC173;
const WINDOW: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkerParams {
    pub min: usize,
    pub avg: usize,
    pub max: usize,
    /// Width of the truncated SHA-256 chunk fingerprint.
    pub width: usize,
}

impl Default for ChunkerParams {
    fn default() -> Self {
        ChunkerParams {
            min: 2 * 1024,
            avg: 8 * 1024,
            max: 64 * 1024,
            width: 20,
        }
    }
}

impl ChunkerParams {
    pub fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.avg || self.avg > self.max {
            return Err(Error::InvalidParam(format!(
                "chunk sizes must satisfy 0 < min <= avg <= max, got {}/{}/{}",
                self.min, self.avg, self.max
            )));
        }
        if self.max > u32::MAX as usize {
            return Err(Error::InvalidParam("max chunk size exceeds u32".into()));
        }
        Fingerprint::from_bytes(&vec![0; self.width])?;
        Ok(())
    }

    /// Cut mask selecting about one boundary per `avg - min` bytes after the minimum.
    fn mask(&self) -> u64 {
        let span = (self.avg - self.min).max(1) as u64;
        let bits = 63 - span.next_power_of_two().leading_zeros() as u64;
        (1u64 << bits) - 1
    }
}

fn degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn poly_mod(mut x: u128, p: u64) -> u64 {
    let p = p as u128;
    let dp = degree(p);
    while degree(x) >= dp {
        x ^= p << (degree(x) - dp);
    }
    x as u64
}

/// Rabin fingerprint over a sliding window of [`WINDOW`] bytes.
struct RabinHash {
    mod_table: [u64; 256],
    out_table: [u64; 256],
    shift: u32,
    window: [u8; WINDOW],
    pos: usize,
    digest: u64,
}

impl RabinHash {
    fn new() -> Self {
        let deg = degree(POLYNOMIAL as u128) as u32;
        let mut mod_table = [0u64; 256];
        let mut out_table = [0u64; 256];
        for b in 0..256u64 {
            let hi = (b as u128) << deg;
            mod_table[b as usize] = poly_mod(hi, POLYNOMIAL) | (b << deg);

            // contribution of byte `b` once it has travelled the full window
            let mut h = poly_mod(b as u128, POLYNOMIAL);
            for _ in 0..WINDOW - 1 {
                h = poly_mod((h as u128) << 8, POLYNOMIAL);
            }
            out_table[b as usize] = h;
        }
        RabinHash {
            mod_table,
            out_table,
            shift: deg - 8,
            window: [0; WINDOW],
            pos: 0,
            digest: 0,
        }
    }

    #[inline]
    fn slide(&mut self, b: u8) {
        let out = self.window[self.pos];
        self.window[self.pos] = b;
        self.pos = (self.pos + 1) % WINDOW;
        self.digest ^= self.out_table[out as usize];
        let idx = (self.digest >> self.shift) as usize;
        self.digest = ((self.digest << 8) | b as u64) ^ self.mod_table[idx];
    }
}

/// Splits `content` into content-defined chunks.
///
/// Boundaries are placed where the rolling Rabin hash matches the cut mask,
/// never before `min` bytes and always by `max` bytes. Empty input gives an
/// empty trace.
pub fn chunk_bytes(
    content: &[u8],
    params: &ChunkerParams,
    label: impl Into<String>,
) -> Result<BackupTrace> {
    params.validate()?;
    let mask = params.mask();
    let mut hash = RabinHash::new();
    let mut chunks = Vec::new();
    let mut start = 0;
    for (i, &b) in content.iter().enumerate() {
        hash.slide(b);
        let len = i + 1 - start;
        if (len >= params.min && hash.digest & mask == 0) || len >= params.max {
            chunks.push(record(&content[start..=i], params.width)?);
            start = i + 1;
        }
    }
    if start < content.len() {
        chunks.push(record(&content[start..], params.width)?);
    }
    Ok(BackupTrace::new(label, chunks))
}

/// Reads a byte stream to the end and chunks it with [`chunk_bytes`].
pub fn chunk_file<R: Read>(
    mut content: R,
    params: &ChunkerParams,
    label: impl Into<String>,
) -> Result<BackupTrace> {
    let mut buf = Vec::new();
    content.read_to_end(&mut buf)?;
    chunk_bytes(&buf, params, label)
}

fn record(data: &[u8], width: usize) -> Result<ChunkRecord> {
    Ok(ChunkRecord::new(
        Fingerprint::digest(data, width)?,
        data.len() as u32,
    ))
}
