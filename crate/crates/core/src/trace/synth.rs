//! Seeded synthetic backup corpora.
//!
//! A snapshot is an ordered list of files, each file an ordered list of chunk
//! records; no payload bytes exist. Snapshot `i + 1` is derived from snapshot
//! `i` by picking a fraction of files, overwriting a contiguous run of each
//! picked file's chunks with fresh chunks, and inserting new files.
//!
//! The initial image carries intra-snapshot redundancy from two sources: a
//! pool of shared chunks drawn with Zipf popularity (headers, padding, zero
//! blocks) and whole-file copies.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

use super::{BackupTrace, ChunkRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusParams {
    pub initial_file_count: usize,
    pub initial_total_size: u64,
    /// Total number of snapshots including the initial one.
    pub snapshots: usize,
    pub file_pick_fraction: f64,
    pub content_modify_fraction: f64,
    pub added_bytes_per_snapshot: u64,
    pub mean_chunk_size: u32,
    pub rng_seed: u64,
    pub fingerprint_width: usize,
    /// Probability that a chunk slot in new content starts a shared phrase.
    pub shared_chunk_fraction: f64,
    /// Number of shared phrases (short chunk sequences reused across files).
    pub shared_pool_size: usize,
    /// Distinct chunks that phrases are built from.
    pub shared_vocabulary_size: usize,
    /// Zipf exponent for both phrase popularity and vocabulary popularity.
    pub shared_zipf_exponent: f64,
    /// Probability that a new file is a copy of an earlier file.
    pub duplicate_file_fraction: f64,
}

impl Default for SyntheticCorpusParams {
    fn default() -> Self {
        SyntheticCorpusParams {
            initial_file_count: 2048,
            initial_total_size: 256 << 20,
            snapshots: 11,
            file_pick_fraction: 0.02,
            content_modify_fraction: 0.025,
            // 10 MiB per ~1 GiB of image data
            added_bytes_per_snapshot: (256 << 20) / 100,
            mean_chunk_size: 8192,
            rng_seed: 0,
            fingerprint_width: 8,
            shared_chunk_fraction: 0.01,
            shared_pool_size: 1000,
            shared_vocabulary_size: 300,
            shared_zipf_exponent: 1.1,
            duplicate_file_fraction: 0.05,
        }
    }
}

impl SyntheticCorpusParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.snapshots < 1 {
            return bad("snapshots must be >= 1".into());
        }
        if self.initial_file_count == 0 || self.initial_total_size == 0 {
            return bad("initial image must contain at least one file and one byte".into());
        }
        if self.mean_chunk_size < 16 {
            return bad(format!("mean chunk size {} too small", self.mean_chunk_size));
        }
        for (name, v) in [
            ("file_pick_fraction", self.file_pick_fraction),
            ("content_modify_fraction", self.content_modify_fraction),
            ("shared_chunk_fraction", self.shared_chunk_fraction),
            ("duplicate_file_fraction", self.duplicate_file_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1)"));
            }
        }
        if self.shared_chunk_fraction > 0.0
            && (self.shared_pool_size == 0 || self.shared_vocabulary_size == 0)
        {
            return bad("shared pool is empty".into());
        }
        if self.shared_zipf_exponent <= 0.0 {
            return bad("zipf exponent must be positive".into());
        }
        Fingerprint::from_bytes(&vec![0; self.fingerprint_width])?;
        Ok(())
    }

    pub fn max_chunk_size(&self) -> u32 {
        self.mean_chunk_size * 4
    }
}

type File = Vec<ChunkRecord>;

const MAX_PHRASE_LEN: usize = 4;

struct Generator<'a> {
    params: &'a SyntheticCorpusParams,
    rng: ChaCha8Rng,
    phrases: Vec<Vec<ChunkRecord>>,
    zipf: Option<Zipf<f64>>,
    size_tail: Exp<f64>,
    chunks_per_file: Exp<f64>,
}

impl<'a> Generator<'a> {
    fn new(params: &'a SyntheticCorpusParams) -> Result<Self> {
        let mean = params.mean_chunk_size as f64;
        let mean_chunks = (params.initial_total_size as f64
            / (mean * params.initial_file_count as f64))
            .max(1.0);
        let err = |e: rand_distr::ExpError| Error::InvalidParam(e.to_string());
        let mut gen = Generator {
            params,
            rng: ChaCha8Rng::seed_from_u64(params.rng_seed),
            phrases: Vec::new(),
            zipf: None,
            size_tail: Exp::new(1.0 / (0.75 * mean)).map_err(err)?,
            chunks_per_file: Exp::new(1.0 / mean_chunks).map_err(err)?,
        };
        if params.shared_chunk_fraction > 0.0 {
            let zerr = |e: rand_distr::ZipfError| Error::InvalidParam(e.to_string());
            let vocab: Vec<ChunkRecord> = (0..params.shared_vocabulary_size)
                .map(|_| gen.fresh_chunk())
                .collect();
            let vz = Zipf::new(vocab.len() as f64, params.shared_zipf_exponent).map_err(zerr)?;
            for _ in 0..params.shared_pool_size {
                let len = gen.rng.random_range(1..=MAX_PHRASE_LEN);
                let phrase = (0..len)
                    .map(|_| vocab[gen.sample_rank(&vz, vocab.len())])
                    .collect();
                gen.phrases.push(phrase);
            }
            gen.zipf = Some(
                Zipf::new(params.shared_pool_size as f64, params.shared_zipf_exponent)
                    .map_err(zerr)?,
            );
        }
        Ok(gen)
    }

    /// Shifted exponential around the mean, clamped to `[mean/4, 4 * mean]`.
    fn chunk_size(&mut self) -> u32 {
        let mean = self.params.mean_chunk_size;
        let lo = mean / 4;
        let tail = self.size_tail.sample(&mut self.rng) as u32;
        (lo + tail).min(4 * mean)
    }

    fn fresh_fingerprint(&mut self) -> Fingerprint {
        let mut buf = [0u8; crate::fingerprint::MAX_WIDTH];
        let w = self.params.fingerprint_width;
        self.rng.fill_bytes(&mut buf[..w]);
        Fingerprint::from_bytes(&buf[..w]).expect("width validated")
    }

    fn fresh_chunk(&mut self) -> ChunkRecord {
        let fp = self.fresh_fingerprint();
        let size = self.chunk_size();
        ChunkRecord::new(fp, size)
    }

    fn sample_rank(&mut self, zipf: &Zipf<f64>, n: usize) -> usize {
        (zipf.sample(&mut self.rng) as usize).clamp(1, n) - 1
    }

    fn new_content(&mut self, n: usize) -> File {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            match self.zipf {
                Some(z) if self.rng.random_bool(self.params.shared_chunk_fraction) => {
                    let i = self.sample_rank(&z, self.phrases.len());
                    out.extend_from_slice(&self.phrases[i]);
                }
                _ => out.push(self.fresh_chunk()),
            }
        }
        out
    }

    fn new_file(&mut self, existing: &[File]) -> File {
        if !existing.is_empty() && self.rng.random_bool(self.params.duplicate_file_fraction) {
            let src = self.rng.random_range(0..existing.len());
            return existing[src].clone();
        }
        let n = 1 + self.chunks_per_file.sample(&mut self.rng) as usize;
        self.new_content(n)
    }

    fn initial(&mut self) -> Vec<File> {
        let mut files = Vec::with_capacity(self.params.initial_file_count);
        for _ in 0..self.params.initial_file_count {
            let f = self.new_file(&files);
            files.push(f);
        }
        files
    }

    fn derive(&mut self, parent: &[File]) -> Vec<File> {
        let mut files = parent.to_vec();
        let picks = (self.params.file_pick_fraction * files.len() as f64).round() as usize;
        if picks > 0 {
            for i in index::sample(&mut self.rng, files.len(), picks.min(files.len())) {
                self.modify(&mut files[i]);
            }
        }
        let mut added = 0u64;
        while added < self.params.added_bytes_per_snapshot {
            let f = self.new_file(&files);
            added += f.iter().map(|c| c.size as u64).sum::<u64>();
            let at = self.rng.random_range(0..=files.len());
            files.insert(at, f);
        }
        files
    }

    /// Overwrites a contiguous run of chunks with fresh chunks of similar sizes.
    fn modify(&mut self, file: &mut File) {
        if file.is_empty() {
            return;
        }
        let run = ((self.params.content_modify_fraction * file.len() as f64).ceil() as usize)
            .clamp(1, file.len());
        let start = self.rng.random_range(0..=file.len() - run);
        let max = self.params.max_chunk_size();
        for slot in &mut file[start..start + run] {
            let scale = self.rng.random_range(0.75..1.25);
            let size = ((slot.size as f64 * scale) as u32).clamp(1, max);
            *slot = ChunkRecord::new(self.fresh_fingerprint(), size);
        }
    }
}

fn flatten(files: &[File], label: String) -> BackupTrace {
    BackupTrace::new(label, files.iter().flatten().copied().collect())
}

/// Generates `params.snapshots` backups; a pure function of `params`.
pub fn generate_synthetic(params: &SyntheticCorpusParams) -> Result<Vec<BackupTrace>> {
    params.validate()?;
    let digits = (params.snapshots.saturating_sub(1)).to_string().len().max(2);
    let label = |i: usize| format!("snap-{i:0digits$}");
    let mut gen = Generator::new(params)?;
    let mut files = gen.initial();
    let mut out = Vec::with_capacity(params.snapshots);
    out.push(flatten(&files, label(0)));
    for i in 1..params.snapshots {
        files = gen.derive(&files);
        out.push(flatten(&files, label(i)));
    }
    Ok(out)
}
