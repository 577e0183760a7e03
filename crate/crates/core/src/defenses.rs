//! Encryption transforms applied to plaintext traces.
//!
//! Encryption is simulated on fingerprints: a ciphertext chunk's fingerprint
//! is a truncated SHA-256 over the key material and the plaintext
//! fingerprint, and chunk sizes pass through unchanged. Each transform also
//! returns the cipher-to-plain ground truth so attacks can be scored.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::trace::{self, BackupTrace, ChunkRecord};

/// Ciphertext fingerprint to plaintext fingerprint.
pub type GroundTruth = HashMap<Fingerprint, Fingerprint>;

/// Secret mixed into every segment key; stands in for the key manager's key.
const KEY_MANAGER_SECRET: &[u8] = b"freqdedup/key-manager/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentParams {
    pub min: u64,
    pub avg: u64,
    pub max: u64,
    /// A boundary may follow a chunk whose fingerprint is `divisor - 1` modulo `divisor`.
    pub divisor: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams::for_mean_chunk(512 << 10, 1 << 20, 2 << 20, 8192)
    }
}

impl SegmentParams {
    /// Picks the divisor so that segments average `avg` bytes for chunks of
    /// `mean_chunk` bytes: after the minimum is met, a boundary is expected
    /// every `divisor` chunks.
    pub fn for_mean_chunk(min: u64, avg: u64, max: u64, mean_chunk: u64) -> Self {
        let divisor = (avg.saturating_sub(min) / mean_chunk.max(1)).max(1);
        SegmentParams {
            min,
            avg,
            max,
            divisor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.avg || self.avg > self.max || self.divisor == 0 {
            return Err(Error::InvalidParam(format!(
                "segment params need 0 < min <= avg <= max and divisor >= 1, got {}/{}/{} divisor {}",
                self.min, self.avg, self.max, self.divisor
            )));
        }
        Ok(())
    }
}

/// A contiguous run of chunks sharing one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment<'a> {
    /// Index of the first chunk in the source trace.
    pub start: usize,
    pub chunks: &'a [ChunkRecord],
    /// Bytewise-least fingerprint among `chunks`.
    pub h: Fingerprint,
}

impl Segment<'_> {
    pub fn size(&self) -> u64 {
        self.chunks.iter().map(|c| c.size as u64).sum()
    }
}

/// Splits a trace into variable-size segments.
///
/// A boundary follows chunk `X` when the segment has reached `min` bytes and
/// `fp(X) mod divisor == divisor - 1`, or when adding the next chunk would
/// push the segment past `max`. A single chunk larger than `max` forms its
/// own segment.
pub fn segment<'a>(trace: &'a BackupTrace, p: &SegmentParams) -> Result<Vec<Segment<'a>>> {
    p.validate()?;
    let chunks = &trace.chunks;
    let mut out = Vec::new();
    let mut start = 0;
    let mut size = 0u64;
    for (i, c) in chunks.iter().enumerate() {
        size += c.size as u64;
        let pattern = size >= p.min && c.fp.mod_u64(p.divisor) == p.divisor - 1;
        let overflow = chunks
            .get(i + 1)
            .is_some_and(|next| size + next.size as u64 > p.max);
        if pattern || overflow || i + 1 == chunks.len() {
            let run = &chunks[start..=i];
            let h = run.iter().map(|c| c.fp).min().expect("non-empty run");
            out.push(Segment {
                start,
                chunks: run,
                h,
            });
            start = i + 1;
            size = 0;
        }
    }
    Ok(out)
}

/// Opaque key derived from a segment's minimum fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentKey(pub [u8; 32]);

impl SegmentKey {
    pub fn derive(h: &Fingerprint) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(KEY_MANAGER_SECRET);
        hasher.update(h.as_bytes());
        SegmentKey(hasher.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let mut key = [0u8; 32];
        hex::decode_to_slice(s, &mut key)
            .map_err(|e| Error::InvalidParam(format!("bad segment key {s:?}: {e}")))?;
        Ok(SegmentKey(key))
    }
}

/// Key used for chunks `start..start + len` of the cipher trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyRecipeEntry {
    pub start: usize,
    pub len: usize,
    pub key: SegmentKey,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncryptionOutput {
    pub cipher_trace: BackupTrace,
    pub ground_truth: GroundTruth,
    pub key_recipe: Vec<KeyRecipeEntry>,
    /// Plaintext fingerprints in original (pre-scramble) order.
    pub file_recipe: Vec<Fingerprint>,
}

impl EncryptionOutput {
    /// Rebuilds the plaintext trace from restored cipher chunks: decrypts via
    /// the ground truth, then reorders by the file recipe.
    pub fn reconstruct(&self, restored: &BackupTrace) -> Result<BackupTrace> {
        let mut available: HashMap<Fingerprint, (u32, usize)> = HashMap::new();
        for c in &restored.chunks {
            let plain = self
                .ground_truth
                .get(&c.fp)
                .ok_or(Error::MissingGroundTruth(c.fp))?;
            available.entry(*plain).or_insert((c.size, 0)).1 += 1;
        }
        let mut chunks = Vec::with_capacity(self.file_recipe.len());
        for fp in &self.file_recipe {
            match available.get_mut(fp) {
                Some((size, n)) if *n > 0 => {
                    *n -= 1;
                    chunks.push(ChunkRecord::new(*fp, *size));
                }
                _ => return Err(Error::MissingFingerprint(*fp)),
            }
        }
        Ok(BackupTrace::new(restored.label.clone(), chunks))
    }

    /// Writes `<label>.trace`, `<label>.gt`, `<label>.recipe` and `<label>.keys`
    /// into `dir`; returns the cipher trace path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let label = &self.cipher_trace.label;
        let trace_path = dir.join(format!("{label}.trace"));
        trace::write_trace_file(&trace_path, &self.cipher_trace)?;

        let mut gt: Vec<_> = self.ground_truth.iter().collect();
        gt.sort_unstable();
        write_lines(&dir.join(format!("{label}.gt")), |out| {
            for (c, m) in &gt {
                writeln!(out, "{c},{m}")?;
            }
            Ok(())
        })?;
        write_lines(&dir.join(format!("{label}.recipe")), |out| {
            for fp in &self.file_recipe {
                writeln!(out, "{fp}")?;
            }
            Ok(())
        })?;
        write_lines(&dir.join(format!("{label}.keys")), |out| {
            for k in &self.key_recipe {
                writeln!(out, "{},{},{}", k.start, k.len, k.key.to_hex())?;
            }
            Ok(())
        })?;
        Ok(trace_path)
    }

    /// Reads the files written by [`EncryptionOutput::write`] for a cipher trace path.
    pub fn read(trace_path: &Path) -> Result<Self> {
        let cipher_trace = trace::read_trace_file(trace_path, None)?;
        let ground_truth = read_ground_truth(&trace_path.with_extension("gt"))?;
        let file_recipe = read_lines(&trace_path.with_extension("recipe"), |line, _| {
            Fingerprint::from_hex(line)
        })?;
        let key_recipe = read_lines(&trace_path.with_extension("keys"), |line, n| {
            let bad = || Error::Parse {
                line: n,
                msg: format!("expected `start,len,key`, got {line:?}"),
            };
            let mut parts = line.split(',');
            let start = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let len = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let key = SegmentKey::from_hex(parts.next().ok_or_else(bad)?)?;
            Ok(KeyRecipeEntry { start, len, key })
        })?;
        Ok(EncryptionOutput {
            cipher_trace,
            ground_truth,
            key_recipe,
            file_recipe,
        })
    }
}

fn write_lines(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(Error::io_at(path))?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn read_lines<T>(path: &Path, mut parse: impl FnMut(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    let file = File::open(path).map_err(Error::io_at(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() {
            out.push(parse(line, i + 1)?);
        }
    }
    Ok(out)
}

/// Reads a `cipher_hex,plain_hex` ground-truth file.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    Ok(read_lines(path, |line, n| {
        let (c, m) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: n,
            msg: format!("expected `cipher,plain`, got {line:?}"),
        })?;
        Ok((Fingerprint::from_hex(c)?, Fingerprint::from_hex(m)?))
    })?
    .into_iter()
    .collect())
}

fn minhash_cipher(h: &Fingerprint, plain: &Fingerprint) -> Fingerprint {
    let mut buf = Vec::with_capacity(h.width() + plain.width());
    buf.extend_from_slice(h.as_bytes());
    buf.extend_from_slice(plain.as_bytes());
    Fingerprint::digest(&buf, plain.width()).expect("width preserved")
}

/// Encrypts each segment under the key of its minimum fingerprint. `order`
/// supplies the chunk order inside each segment (identity or scrambled).
fn encrypt_segments(
    trace: &BackupTrace,
    segments: &[Segment<'_>],
    mut order: impl FnMut(&[ChunkRecord]) -> Vec<ChunkRecord>,
) -> EncryptionOutput {
    let mut out = EncryptionOutput {
        cipher_trace: BackupTrace::new(trace.label.clone(), Vec::with_capacity(trace.len())),
        file_recipe: trace.fingerprints().collect(),
        ..Default::default()
    };
    for seg in segments {
        out.key_recipe.push(KeyRecipeEntry {
            start: out.cipher_trace.len(),
            len: seg.chunks.len(),
            key: SegmentKey::derive(&seg.h),
        });
        for c in order(seg.chunks) {
            let cipher = minhash_cipher(&seg.h, &c.fp);
            out.ground_truth.insert(cipher, c.fp);
            out.cipher_trace.chunks.push(ChunkRecord::new(cipher, c.size));
        }
    }
    out
}

/// MinHash encryption: one key per segment, derived from the segment minimum.
pub fn minhash_encrypt(trace: &BackupTrace, p: &SegmentParams) -> Result<EncryptionOutput> {
    let segments = segment(trace, p)?;
    Ok(encrypt_segments(trace, &segments, <[ChunkRecord]>::to_vec))
}

/// Builds a scrambled copy of one segment: each chunk goes to the front when
/// its draw is odd and to the back otherwise.
pub fn scramble_segment(
    chunks: &[ChunkRecord],
    mut draw: impl FnMut() -> u32,
) -> Vec<ChunkRecord> {
    let mut out = VecDeque::with_capacity(chunks.len());
    for &c in chunks {
        if draw() % 2 == 1 {
            out.push_front(c);
        } else {
            out.push_back(c);
        }
    }
    out.into()
}

/// Per-segment scrambling with boundaries computed on the input order.
pub fn scramble(trace: &BackupTrace, p: &SegmentParams, seed: u64) -> Result<BackupTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunks = segment(trace, p)?
        .iter()
        .flat_map(|s| scramble_segment(s.chunks, || rng.next_u32()))
        .collect();
    Ok(BackupTrace::new(trace.label.clone(), chunks))
}

/// Deterministic per-chunk encryption: identical plaintexts give identical
/// ciphertexts.
pub fn mle_encrypt(trace: &BackupTrace) -> EncryptionOutput {
    let mut out = EncryptionOutput {
        cipher_trace: BackupTrace::new(trace.label.clone(), Vec::with_capacity(trace.len())),
        file_recipe: trace.fingerprints().collect(),
        ..Default::default()
    };
    for c in &trace.chunks {
        let cipher = Fingerprint::digest(c.fp.as_bytes(), c.fp.width()).expect("width preserved");
        out.ground_truth.insert(cipher, c.fp);
        out.cipher_trace.chunks.push(ChunkRecord::new(cipher, c.size));
    }
    out
}

/// Scrambling followed by MinHash encryption, sharing the segment boundaries
/// of the original order. The segment minimum does not depend on order, so
/// each segment keeps its key.
pub fn defend(trace: &BackupTrace, p: &SegmentParams, seed: u64) -> Result<EncryptionOutput> {
    let segments = segment(trace, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(encrypt_segments(trace, &segments, |chunks| {
        scramble_segment(chunks, || rng.next_u32())
    }))
}

/// The transforms selectable per experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Mle,
    MinHash,
    MinHashScramble,
}

impl Scheme {
    pub fn apply(&self, trace: &BackupTrace, p: &SegmentParams, seed: u64) -> Result<EncryptionOutput> {
        match self {
            Scheme::Mle => Ok(mle_encrypt(trace)),
            Scheme::MinHash => minhash_encrypt(trace, p),
            Scheme::MinHashScramble => defend(trace, p, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Mle => "mle",
            Scheme::MinHash => "minhash",
            Scheme::MinHashScramble => "minhash+scramble",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(Scheme::Mle),
            "minhash" => Ok(Scheme::MinHash),
            "minhash+scramble" | "defend" => Ok(Scheme::MinHashScramble),
            _ => Err(Error::InvalidParam(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Applies `scheme` to every backup of a corpus and writes the results plus a
/// manifest of cipher traces into `dir`.
pub fn write_defended_corpus(
    dir: &Path,
    outputs: &[EncryptionOutput],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
    let mut entries = Vec::with_capacity(outputs.len());
    for o in outputs {
        let path = o.write(dir)?;
        entries.push(PathBuf::from(path.file_name().expect("file name")));
    }
    let manifest = dir.join("manifest.txt");
    trace::write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::FrequencyTable;
    use crate::trace::{corpus_dedup_ratio, generate_synthetic, SyntheticCorpusParams};

    fn fp(n: u64) -> Fingerprint {
        Fingerprint::from_u64(n, 8).unwrap()
    }

    fn rec(n: u64, size: u32) -> ChunkRecord {
        ChunkRecord::new(fp(n), size)
    }

    fn small_params() -> SegmentParams {
        SegmentParams {
            min: 300,
            avg: 500,
            max: 1000,
            divisor: 4,
        }
    }

    #[test]
    fn divisor_for_defaults() {
        let p = SegmentParams::default();
        assert_eq!(p.divisor, 64);
        assert!(SegmentParams { min: 10, avg: 5, max: 20, divisor: 1 }.validate().is_err());
        assert!(SegmentParams { divisor: 0, ..p }.validate().is_err());
    }

    #[test]
    fn small_trace_is_one_segment() {
        let t = BackupTrace::new("t", (0..5).map(|i| rec(i * 4 + 3, 10)).collect());
        let segs = segment(&t, &small_params()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].h, fp(3));
        assert!(segment(&BackupTrace::default(), &small_params()).unwrap().is_empty());
    }

    #[test]
    fn boundaries_follow_pattern_and_limits() {
        // fp % 4 == 3 marks a candidate boundary
        let sizes = [100u32, 100, 100, 100, 100, 100, 100];
        let ids = [3u64, 8, 11, 12, 16, 7, 20];
        let t = BackupTrace::new(
            "t",
            ids.iter().zip(sizes).map(|(&i, s)| rec(i, s)).collect(),
        );
        let segs = segment(&t, &small_params()).unwrap();
        // 3 is below min; 11 closes at 300 bytes; 7 closes at 300 bytes
        let lens: Vec<_> = segs.iter().map(|s| s.chunks.len()).collect();
        assert_eq!(lens, vec![3, 3, 1]);

        // no pattern: max forces a cut before the segment would exceed 1000
        let t = BackupTrace::new("t", (0..25).map(|i| rec(i * 4, 100)).collect());
        let segs = segment(&t, &small_params()).unwrap();
        assert!(segs.iter().all(|s| s.size() <= 1000));
        assert_eq!(segs[0].size(), 1000);
    }

    #[test]
    fn oversized_chunk_stands_alone() {
        let t = BackupTrace::new("t", vec![rec(0, 100), rec(4, 5000), rec(8, 100)]);
        let segs = segment(&t, &small_params()).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1].size(), 5000);
    }

    fn synthetic(total: u64, snapshots: usize) -> Vec<BackupTrace> {
        generate_synthetic(&SyntheticCorpusParams {
            initial_file_count: (total / (128 << 10)) as usize,
            initial_total_size: total,
            snapshots,
            added_bytes_per_snapshot: total / 100,
            rng_seed: 5,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_segments_respect_bounds() {
        let trace = &synthetic(10 << 20, 1)[0];
        let p = SegmentParams::default();
        let segs = segment(trace, &p).unwrap();
        let last = segs.len() - 1;
        for (i, s) in segs.iter().enumerate() {
            assert!(s.size() <= p.max);
            if i != last {
                assert!(s.size() >= p.min, "segment {i} has {} bytes", s.size());
            }
        }
        let rebuilt: Vec<_> = segs.iter().flat_map(|s| s.chunks.iter().copied()).collect();
        assert_eq!(rebuilt, trace.chunks);
        assert_eq!(segs, segment(trace, &p).unwrap());
        let mean = trace.logical_bytes() as f64 / segs.len() as f64;
        assert!((700_000.0..1_400_000.0).contains(&mean), "mean segment {mean}");
    }

    #[test]
    fn equal_minimum_gives_equal_ciphers() {
        // two segments with the same chunk set, separated by a pattern chunk
        let p = SegmentParams { min: 100, avg: 200, max: 10_000, divisor: 1_000_000 };
        let t = BackupTrace::new(
            "t",
            vec![rec(5, 50), rec(9, 50), rec(5, 50), rec(9, 50)],
        );
        let segs = segment(&t, &SegmentParams { divisor: 1, ..p }).unwrap();
        assert_eq!(segs.len(), 2);
        let out = encrypt_segments(&t, &segs, <[ChunkRecord]>::to_vec);
        let c = &out.cipher_trace.chunks;
        assert_eq!(c[0].fp, c[2].fp);
        assert_eq!(c[1].fp, c[3].fp);
        assert_eq!(out.key_recipe[0].key, out.key_recipe[1].key);
    }

    #[test]
    fn different_minimum_splits_a_chunk() {
        let t = BackupTrace::new(
            "t",
            vec![rec(5, 50), rec(9, 50), rec(1, 50), rec(9, 50)],
        );
        let p = SegmentParams { min: 100, avg: 200, max: 10_000, divisor: 1 };
        let out = minhash_encrypt(&t, &p).unwrap();
        let c = &out.cipher_trace.chunks;
        assert_ne!(c[1].fp, c[3].fp);
        assert_eq!(out.ground_truth[&c[1].fp], fp(9));
        assert_eq!(out.ground_truth[&c[3].fp], fp(9));
    }

    #[test]
    fn single_chunk_minhash() {
        let t = BackupTrace::new("t", vec![ChunkRecord::new(Fingerprint::from_hex("0a0b0c0d0e0f").unwrap(), 7)]);
        let out = minhash_encrypt(&t, &SegmentParams::default()).unwrap();
        assert_eq!(out.key_recipe.len(), 1);
        assert_eq!(out.key_recipe[0].key, SegmentKey::derive(&t.chunks[0].fp));
        assert_eq!(out.cipher_trace.chunks[0].fp.width(), 6);
        assert_eq!(out.cipher_trace.chunks[0].size, 7);
        assert_eq!(
            out.cipher_trace.chunks[0].fp,
            minhash_cipher(&t.chunks[0].fp, &t.chunks[0].fp)
        );
    }

    #[test]
    fn scramble_by_hand() {
        let (a, b, c) = (rec(1, 1), rec(2, 1), rec(3, 1));
        let mut draws = [7u32, 1, 2].into_iter();
        let out = scramble_segment(&[a, b, c], || draws.next().unwrap());
        assert_eq!(out, vec![b, a, c]);
        let one = scramble_segment(&[a], || 1);
        assert_eq!(one, vec![a]);
    }

    #[test]
    fn scramble_and_defend_are_seeded() {
        let trace = &synthetic(4 << 20, 1)[0];
        let p = SegmentParams::default();
        assert_eq!(scramble(trace, &p, 3).unwrap(), scramble(trace, &p, 3).unwrap());
        assert_ne!(scramble(trace, &p, 3).unwrap(), scramble(trace, &p, 4).unwrap());
        assert_eq!(defend(trace, &p, 3).unwrap(), defend(trace, &p, 3).unwrap());
    }

    #[test]
    fn defend_encrypts_scrambled_chunks_under_original_segments() {
        let trace = &synthetic(4 << 20, 1)[0];
        let p = SegmentParams::default();
        let d = defend(trace, &p, 9).unwrap();
        let scrambled = scramble(trace, &p, 9).unwrap();
        let segs = segment(trace, &p).unwrap();
        let mut expected = Vec::new();
        for s in &segs {
            for c in &scrambled.chunks[s.start..s.start + s.chunks.len()] {
                expected.push(ChunkRecord::new(minhash_cipher(&s.h, &c.fp), c.size));
            }
        }
        assert_eq!(d.cipher_trace.chunks, expected);
        assert_eq!(d.file_recipe, trace.fingerprints().collect::<Vec<_>>());
        // scrambling alone leaves the MinHash ciphertext multiset unchanged
        let m = minhash_encrypt(trace, &p).unwrap();
        let mut a: Vec<_> = d.cipher_trace.fingerprints().collect();
        let mut b: Vec<_> = m.cipher_trace.fingerprints().collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert_eq!(d.ground_truth, m.ground_truth);
    }

    #[test]
    fn defend_keeps_minhash_storage_efficiency() {
        let snaps = synthetic(4 << 20, 3);
        let p = SegmentParams::default();
        let mh: Vec<_> = snaps.iter().map(|s| minhash_encrypt(s, &p).unwrap().cipher_trace).collect();
        let df: Vec<_> = snaps
            .iter()
            .enumerate()
            .map(|(i, s)| defend(s, &p, i as u64).unwrap().cipher_trace)
            .collect();
        let plain = corpus_dedup_ratio(&snaps);
        let r_mh = corpus_dedup_ratio(&mh);
        let r_df = corpus_dedup_ratio(&df);
        assert_eq!(r_mh, r_df);
        assert!(r_mh <= plain);
    }

    #[test]
    fn mle_preserves_histogram() {
        let trace = &synthetic(4 << 20, 1)[0];
        let out = mle_encrypt(trace);
        let hist = |t: &BackupTrace| {
            let f: FrequencyTable = t.fingerprints().collect();
            let mut v: Vec<u64> = f.iter().map(|(_, c)| *c).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(hist(trace), hist(&out.cipher_trace));
        assert_eq!(out.ground_truth.len(), trace.unique_count());
        for (p, c) in trace.chunks.iter().zip(&out.cipher_trace.chunks) {
            assert_eq!(out.ground_truth[&c.fp], p.fp);
            assert_eq!(p.size, c.size);
        }
    }

    #[test]
    fn reconstruct_from_recipe() {
        let trace = &synthetic(4 << 20, 1)[0];
        let out = defend(trace, &SegmentParams::default(), 1).unwrap();
        assert_ne!(out.cipher_trace.len(), 0);
        let back = out.reconstruct(&out.cipher_trace).unwrap();
        assert_eq!(&back.chunks, &trace.chunks);

        let mut short = out.cipher_trace.clone();
        short.chunks.pop();
        assert!(out.reconstruct(&short).is_err());
    }

    #[test]
    fn output_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trace = &synthetic(2 << 20, 1)[0];
        let out = defend(trace, &SegmentParams::default(), 1).unwrap();
        let path = out.write(dir.path()).unwrap();
        assert_eq!(EncryptionOutput::read(&path).unwrap(), out);
    }

    #[test]
    fn minimum_coincidence_rises_with_overlap() {
        // two 100-element sets sharing a fraction f of their elements
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut rates = Vec::new();
        for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let trials = 2000;
            let shared_n = (100.0 * f) as usize;
            let mut hits = 0;
            for _ in 0..trials {
                let mut fresh = || Fingerprint::from_u64(rng.next_u64(), 8).unwrap();
                let shared: Vec<_> = (0..shared_n).map(|_| fresh()).collect();
                let a = shared.iter().copied().chain((shared_n..100).map(|_| fresh())).min();
                let b = shared.iter().copied().chain((shared_n..100).map(|_| fresh())).min();
                hits += (a == b) as usize;
            }
            rates.push(hits as f64 / trials as f64);
        }
        assert!(rates.windows(2).all(|w| w[0] < w[1]), "{rates:?}");
    }
}
