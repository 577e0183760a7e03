//! Inference attacks against deterministic encrypted deduplication.
//!
//! All three attacks compare the ciphertext stream of a target backup with
//! the plaintext stream of an older (auxiliary) backup:
//!
//! - [`basic_attack`] rank-pairs global chunk frequencies.
//! - [`locality_attack`] seeds an inferred queue with a few high-confidence
//!   pairs (top frequency pairs, or leaked pairs in known-plaintext mode) and
//!   repeatedly rank-pairs the left and right neighbors of each dequeued pair.
//! - [`advanced_locality_attack`] is the same loop with every analysis done
//!   within chunk size classes.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::defenses::GroundTruth;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::freq::{
    count, freq_analysis, size_aware_freq_analysis, FrequencyTable, InferredPair, TraceTables,
    DEFAULT_BLOCK_SIZE,
};
use crate::trace::BackupTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    CiphertextOnly,
    KnownPlaintext,
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::CiphertextOnly => "ciphertext-only",
            AttackMode::KnownPlaintext => "known-plaintext",
        })
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ciphertext-only" => Ok(AttackMode::CiphertextOnly),
            "known-plaintext" => Ok(AttackMode::KnownPlaintext),
            _ => Err(Error::InvalidParam(format!("unknown attack mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Basic,
    Locality,
    Advanced,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Basic => "basic",
            AttackKind::Locality => "locality",
            AttackKind::Advanced => "advanced",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(AttackKind::Basic),
            "locality" => Ok(AttackKind::Locality),
            "advanced" => Ok(AttackKind::Advanced),
            _ => Err(Error::InvalidParam(format!("unknown attack kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackParams {
    /// Pairs taken from global frequency analysis to seed the queue.
    pub u: usize,
    /// Pairs taken from each neighbor analysis.
    pub v: usize,
    /// Queue capacity.
    pub w: usize,
    pub mode: AttackMode,
    pub size_aware: bool,
    pub block_size: u32,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            u: 1,
            v: 15,
            w: 200_000,
            mode: AttackMode::CiphertextOnly,
            size_aware: false,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        if self.u == 0 || self.v == 0 || self.w == 0 {
            return Err(Error::InvalidParam(format!(
                "u, v and w must be >= 1 (got {}, {}, {})",
                self.u, self.v, self.w
            )));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidParam("block size must be positive".into()));
        }
        Ok(())
    }
}

/// How a pair entered the inferred set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Seed,
    Leaked,
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Seed => "seed",
            Side::Leaked => "leaked",
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub pair: InferredPair,
    /// Ciphertext of the dequeued pair this one was inferred from.
    pub parent: Option<Fingerprint>,
    pub side: Side,
    /// Main-loop iteration that produced the pair; 0 for seeds.
    pub iteration: u64,
}

/// Attack output: at most one plaintext per ciphertext, first insertion wins.
/// Keeps insertion order and the provenance of every pair.
#[derive(Debug, Clone, Default)]
pub struct InferredPairSet {
    index: HashMap<Fingerprint, usize>,
    entries: Vec<Provenance>,
}

impl InferredPairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and changes nothing) if the ciphertext is already mapped.
    pub fn insert(&mut self, entry: Provenance) -> bool {
        if self.index.contains_key(&entry.pair.cipher) {
            return false;
        }
        self.index.insert(entry.pair.cipher, self.entries.len());
        self.entries.push(entry);
        true
    }

    pub fn get(&self, cipher: &Fingerprint) -> Option<Fingerprint> {
        self.index.get(cipher).map(|&i| self.entries[i].pair.plain)
    }

    pub fn contains(&self, cipher: &Fingerprint) -> bool {
        self.index.contains_key(cipher)
    }

    pub fn provenance(&self, cipher: &Fingerprint) -> Option<&Provenance> {
        self.index.get(cipher).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Provenance> {
        self.entries.iter()
    }

    pub fn pairs(&self) -> impl Iterator<Item = InferredPair> + '_ {
        self.entries.iter().map(|e| e.pair)
    }

    /// Writes `cipher_fp,plain_fp,parent_fp,side,iteration` rows with a header.
    pub fn write_report<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cipher_fp,plain_fp,parent_fp,side,iteration")?;
        for e in &self.entries {
            let parent = e.parent.map(|p| p.to_hex()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                e.pair.cipher, e.pair.plain, parent, e.side, e.iteration
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Bounded FIFO of pairs awaiting neighbor expansion.
#[derive(Debug, Clone)]
pub struct InferredQueue {
    queue: VecDeque<InferredPair>,
    capacity: usize,
}

impl InferredQueue {
    pub fn new(capacity: usize) -> Self {
        InferredQueue {
            queue: VecDeque::new(),
            capacity,
        }
    }

    /// Enqueues unless full; returns whether the pair was accepted.
    pub fn push(&mut self, pair: InferredPair) -> bool {
        if self.queue.len() >= self.capacity {
            return false;
        }
        self.queue.push_back(pair);
        true
    }

    pub fn pop(&mut self) -> Option<InferredPair> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.queue.len() >= self.capacity
    }
}

/// Ciphertext-plaintext pairs known to the adversary in advance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakageSet {
    pub pairs: Vec<InferredPair>,
    /// Leaked pairs over the ciphertext chunk count of the target backup.
    pub leakage_rate: f64,
}

/// Uniformly samples `floor(rate * target.len())` distinct pairs among the
/// ground-truth pairs whose ciphertext occurs in `target`.
pub fn sample_leakage(
    ground_truth: &GroundTruth,
    target: &BackupTrace,
    rate: f64,
    seed: u64,
) -> Result<LeakageSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidParam(format!(
            "leakage rate {rate} outside [0, 1]"
        )));
    }
    let needed = (rate * target.len() as f64 + 1e-9).floor() as usize;
    let mut candidates: Vec<Fingerprint> = target
        .unique_fingerprints()
        .into_iter()
        .filter(|c| ground_truth.contains_key(c))
        .collect();
    if needed > candidates.len() {
        return Err(Error::InsufficientGroundTruth {
            rate,
            needed,
            available: candidates.len(),
        });
    }
    candidates.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), needed).into_vec();
    picked.sort_unstable();
    let pairs = picked
        .into_iter()
        .map(|i| InferredPair::new(candidates[i], ground_truth[&candidates[i]]))
        .collect();
    let leakage_rate = if target.is_empty() {
        0.0
    } else {
        needed as f64 / target.len() as f64
    };
    Ok(LeakageSet {
        pairs,
        leakage_rate,
    })
}

/// Rank-pairs global frequencies of the two backups.
pub fn basic_attack(cipher: &BackupTrace, plain: &BackupTrace) -> InferredPairSet {
    let fc: FrequencyTable = cipher.fingerprints().collect();
    let fm: FrequencyTable = plain.fingerprints().collect();
    let mut t = InferredPairSet::new();
    for pair in freq_analysis(&fc, &fm, fc.len().min(fm.len())) {
        t.insert(Provenance {
            pair,
            parent: None,
            side: Side::Seed,
            iteration: 0,
        });
    }
    t
}

pub fn locality_attack(
    cipher: &BackupTrace,
    plain: &BackupTrace,
    params: &AttackParams,
    leak: Option<&LeakageSet>,
) -> Result<InferredPairSet> {
    locality_attack_with_tables(&count(cipher), &count(plain), params, leak)
}

/// [`locality_attack`] with size-aware analysis forced on.
pub fn advanced_locality_attack(
    cipher: &BackupTrace,
    plain: &BackupTrace,
    params: &AttackParams,
    leak: Option<&LeakageSet>,
) -> Result<InferredPairSet> {
    let params = AttackParams {
        size_aware: true,
        ..*params
    };
    locality_attack(cipher, plain, &params, leak)
}

/// The locality loop over pre-built tables, so a sweep can count each backup once.
pub fn locality_attack_with_tables(
    ct: &TraceTables,
    mt: &TraceTables,
    params: &AttackParams,
    leak: Option<&LeakageSet>,
) -> Result<InferredPairSet> {
    params.validate()?;
    let analyze = |yc: &FrequencyTable, ym: &FrequencyTable, x: usize| {
        if params.size_aware {
            size_aware_freq_analysis(yc, &ct.sizes, ym, &mt.sizes, x, params.block_size)
        } else {
            freq_analysis(yc, ym, x)
        }
    };

    let mut t = InferredPairSet::new();
    let mut g = InferredQueue::new(params.w);
    match (params.mode, leak) {
        (AttackMode::CiphertextOnly, None) => {
            for pair in analyze(&ct.freq, &mt.freq, params.u) {
                if t.insert(Provenance {
                    pair,
                    parent: None,
                    side: Side::Seed,
                    iteration: 0,
                }) {
                    g.push(pair);
                }
            }
        }
        (AttackMode::KnownPlaintext, Some(leak)) if !leak.pairs.is_empty() => {
            // every leaked pair about the target is known; only those whose
            // plaintext also occurs in the auxiliary backup can seed the queue
            for &pair in &leak.pairs {
                if !ct.freq.contains(&pair.cipher) {
                    continue;
                }
                if t.insert(Provenance {
                    pair,
                    parent: None,
                    side: Side::Leaked,
                    iteration: 0,
                }) && mt.freq.contains(&pair.plain)
                {
                    g.push(pair);
                }
            }
        }
        (mode, leak) => {
            return Err(Error::InvalidParam(format!(
                "{mode} mode with {} leaked pairs",
                leak.map_or(0, |l| l.pairs.len())
            )))
        }
    }

    let empty = FrequencyTable::new();
    let mut iteration = 0u64;
    while let Some(cur) = g.pop() {
        iteration += 1;
        let tl = analyze(
            ct.left.get(&cur.cipher).unwrap_or(&empty),
            mt.left.get(&cur.plain).unwrap_or(&empty),
            params.v,
        );
        let tr = analyze(
            ct.right.get(&cur.cipher).unwrap_or(&empty),
            mt.right.get(&cur.plain).unwrap_or(&empty),
            params.v,
        );
        let inferred = tl
            .into_iter()
            .map(|p| (p, Side::Left))
            .chain(tr.into_iter().map(|p| (p, Side::Right)));
        for (pair, side) in inferred {
            if t.insert(Provenance {
                pair,
                parent: Some(cur.cipher),
                side,
                iteration,
            }) {
                g.push(pair);
            }
        }
    }
    Ok(t)
}

/// Parameters and outcome of one attack run, written as the summary file.
#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub kind: AttackKind,
    pub params: AttackParams,
    pub aux: String,
    pub target: String,
    pub inferred_pairs: usize,
    pub leaked_pairs: usize,
    pub leakage_rate: f64,
    pub inference_rate: Option<f64>,
}

impl AttackSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ChunkRecord;

    fn fp(n: u64) -> Fingerprint {
        Fingerprint::from_u64(n, 8).unwrap()
    }

    fn trace_of(ids: &[u64]) -> BackupTrace {
        BackupTrace::new(
            "t",
            ids.iter().map(|&i| ChunkRecord::new(fp(i), 4096)).collect(),
        )
    }

    #[test]
    fn queue_is_bounded_fifo() {
        let mut q = InferredQueue::new(2);
        let p = |i| InferredPair::new(fp(i), fp(i));
        assert!(q.push(p(1)));
        assert!(q.push(p(2)));
        assert!(!q.push(p(3)));
        assert!(q.is_full());
        assert_eq!(q.pop(), Some(p(1)));
        assert_eq!(q.pop(), Some(p(2)));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn pair_set_first_wins() {
        let mut t = InferredPairSet::new();
        let e = |c, m| Provenance {
            pair: InferredPair::new(fp(c), fp(m)),
            parent: None,
            side: Side::Seed,
            iteration: 0,
        };
        assert!(t.insert(e(1, 10)));
        assert!(!t.insert(e(1, 11)));
        assert_eq!(t.get(&fp(1)), Some(fp(10)));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn basic_self_inference() {
        // distinct frequencies: 1 x1, 2 x2, 3 x3, 4 x4
        let tr = trace_of(&[4, 3, 4, 2, 4, 3, 1, 2, 3, 4]);
        let t = basic_attack(&tr, &tr);
        assert_eq!(t.len(), 4);
        assert!(t.pairs().all(|p| p.cipher == p.plain));
    }

    #[test]
    fn empty_inputs() {
        let tr = trace_of(&[1, 2, 3]);
        let empty = trace_of(&[]);
        assert!(basic_attack(&tr, &empty).is_empty());
        let p = AttackParams::default();
        assert!(locality_attack(&tr, &empty, &p, None).unwrap().is_empty());
        assert!(advanced_locality_attack(&tr, &empty, &p, None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn mode_and_leak_must_agree() {
        let tr = trace_of(&[1, 2, 3]);
        let kp = AttackParams {
            mode: AttackMode::KnownPlaintext,
            ..Default::default()
        };
        assert!(locality_attack(&tr, &tr, &kp, None).is_err());
        let leak = LeakageSet {
            pairs: vec![InferredPair::new(fp(1), fp(1))],
            leakage_rate: 1.0 / 3.0,
        };
        let co = AttackParams::default();
        assert!(locality_attack(&tr, &tr, &co, Some(&leak)).is_err());
        assert!(locality_attack(&tr, &tr, &kp, Some(&leak)).is_ok());
    }

    #[test]
    fn rejects_zero_params() {
        let tr = trace_of(&[1]);
        for p in [
            AttackParams { u: 0, ..Default::default() },
            AttackParams { v: 0, ..Default::default() },
            AttackParams { w: 0, ..Default::default() },
        ] {
            assert!(locality_attack(&tr, &tr, &p, None).is_err());
        }
    }

    #[test]
    fn known_plaintext_walks_from_leaked_pair() {
        // unique chunks with no frequency signal; a single leaked pair in the
        // middle recovers the whole chain
        let ids: Vec<u64> = (1..=50).collect();
        let tr = trace_of(&ids);
        let leak = LeakageSet {
            pairs: vec![InferredPair::new(fp(25), fp(25))],
            leakage_rate: 0.02,
        };
        let p = AttackParams {
            mode: AttackMode::KnownPlaintext,
            ..Default::default()
        };
        let t = locality_attack(&tr, &tr, &p, Some(&leak)).unwrap();
        assert_eq!(t.len(), 50);
        assert!(t.pairs().all(|p| p.cipher == p.plain));
        assert_eq!(t.provenance(&fp(25)).unwrap().side, Side::Leaked);
    }

    #[test]
    fn leaked_pair_absent_from_aux_is_known_but_not_expanded() {
        let c = trace_of(&[1, 2, 3]);
        let m = trace_of(&[7, 8, 9]);
        let leak = LeakageSet {
            pairs: vec![InferredPair::new(fp(2), fp(42))],
            leakage_rate: 1.0 / 3.0,
        };
        let p = AttackParams {
            mode: AttackMode::KnownPlaintext,
            ..Default::default()
        };
        let t = locality_attack(&c, &m, &p, Some(&leak)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(&fp(2)), Some(fp(42)));
    }

    #[test]
    fn sampling_leakage() {
        let tr = trace_of(&(0..1000).collect::<Vec<_>>());
        let gt: GroundTruth = tr.fingerprints().map(|f| (f, f)).collect();
        assert!(sample_leakage(&gt, &tr, 0.0, 1).unwrap().pairs.is_empty());
        let full = sample_leakage(&gt, &tr, 1.0, 1).unwrap();
        assert_eq!(full.pairs.len(), 1000);
        assert_eq!(full.leakage_rate, 1.0);
        let a = sample_leakage(&gt, &tr, 0.05, 9).unwrap();
        assert_eq!(a.pairs.len(), 50);
        assert_eq!(a, sample_leakage(&gt, &tr, 0.05, 9).unwrap());
        assert_ne!(a, sample_leakage(&gt, &tr, 0.05, 10).unwrap());
        assert!(sample_leakage(&gt, &tr, 1.5, 1).is_err());

        let half: GroundTruth = gt.iter().take(10).map(|(a, b)| (*a, *b)).collect();
        assert!(matches!(
            sample_leakage(&half, &tr, 0.5, 1),
            Err(Error::InsufficientGroundTruth { needed: 500, .. })
        ));
    }

    #[test]
    fn leakage_count_is_floor_of_rate_times_length() {
        let tr = trace_of(&(0..100_000).collect::<Vec<_>>());
        let gt: GroundTruth = tr.fingerprints().map(|f| (f, f)).collect();
        assert_eq!(sample_leakage(&gt, &tr, 0.002, 1).unwrap().pairs.len(), 200);
    }

    #[test]
    fn report_csv() {
        let tr = trace_of(&[1, 2, 1, 3]);
        let t = locality_attack(&tr, &tr, &AttackParams::default(), None).unwrap();
        let mut out = Vec::new();
        t.write_report(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("cipher_fp,plain_fp,parent_fp,side,iteration"));
        let seed = lines.next().unwrap();
        assert_eq!(seed, format!("{0},{0},,seed,0", fp(1)));
        assert_eq!(text.lines().count(), t.len() + 1);
    }
}
