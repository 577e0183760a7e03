//! Flat `key = value` experiment configuration.
//!
//! Every experiment is driven by a single root seed; per-stage seeds are
//! derived from it by hashing a label, so changing one stage never perturbs
//! another.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::attacks::{AttackKind, AttackMode, AttackParams};
use crate::defenses::{Scheme, SegmentParams};
use crate::error::{Error, Result};
use crate::store::StoreParams;
use crate::trace::SyntheticCorpusParams;

/// Seed for the stage named `label` under `root`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_be_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpus: SyntheticCorpusParams,
    pub scheme: Scheme,
    pub segment: SegmentParams,
    pub attack_kind: AttackKind,
    pub attack: AttackParams,
    pub leakage_rate: f64,
    /// Auxiliary and target snapshot indices.
    pub aux: usize,
    pub target: usize,
    pub store: StoreParams,
    /// Cache sizes for the small/large store replay, in bytes. The defaults
    /// bracket the fingerprint metadata of the default corpus (about 1.5 MB):
    /// roughly a quarter of it and a few times it.
    pub small_cache: u64,
    pub large_cache: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            corpus: SyntheticCorpusParams::default(),
            scheme: Scheme::Mle,
            segment: SegmentParams::default(),
            attack_kind: AttackKind::Locality,
            attack: AttackParams::default(),
            leakage_rate: 0.0,
            aux: 9,
            target: 10,
            store: StoreParams::default(),
            small_cache: 384 << 10,
            large_cache: 4 << 20,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::InvalidParam(format!("config key {key}: {v:?}: {e}")))
}

impl ExperimentConfig {
    /// Derived seed for a named stage.
    pub fn stage_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let c = &mut self.corpus;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "corpus.initial_file_count" => c.initial_file_count = parse(key, v)?,
            "corpus.initial_total_size" => c.initial_total_size = parse(key, v)?,
            "corpus.snapshots" => c.snapshots = parse(key, v)?,
            "corpus.file_pick_fraction" => c.file_pick_fraction = parse(key, v)?,
            "corpus.content_modify_fraction" => c.content_modify_fraction = parse(key, v)?,
            "corpus.added_bytes_per_snapshot" => c.added_bytes_per_snapshot = parse(key, v)?,
            "corpus.mean_chunk_size" => c.mean_chunk_size = parse(key, v)?,
            "corpus.fingerprint_width" => c.fingerprint_width = parse(key, v)?,
            "corpus.shared_chunk_fraction" => c.shared_chunk_fraction = parse(key, v)?,
            "corpus.shared_pool_size" => c.shared_pool_size = parse(key, v)?,
            "corpus.shared_vocabulary_size" => c.shared_vocabulary_size = parse(key, v)?,
            "corpus.shared_zipf_exponent" => c.shared_zipf_exponent = parse(key, v)?,
            "corpus.duplicate_file_fraction" => c.duplicate_file_fraction = parse(key, v)?,
            "scheme" => self.scheme = parse(key, v)?,
            "segment.min" => self.segment.min = parse(key, v)?,
            "segment.avg" => self.segment.avg = parse(key, v)?,
            "segment.max" => self.segment.max = parse(key, v)?,
            "segment.divisor" => self.segment.divisor = parse(key, v)?,
            "attack.kind" => self.attack_kind = parse(key, v)?,
            "attack.mode" => self.attack.mode = parse::<AttackMode>(key, v)?,
            "attack.u" => self.attack.u = parse(key, v)?,
            "attack.v" => self.attack.v = parse(key, v)?,
            "attack.w" => self.attack.w = parse(key, v)?,
            "attack.block_size" => self.attack.block_size = parse(key, v)?,
            "attack.leakage_rate" => self.leakage_rate = parse(key, v)?,
            "attack.aux" => self.aux = parse(key, v)?,
            "attack.target" => self.target = parse(key, v)?,
            "store.container_size" => self.store.container_size = parse(key, v)?,
            "store.cache_capacity" => self.store.cache_capacity = parse(key, v)?,
            "store.bloom_fp_rate" => self.store.bloom_fp_rate = parse(key, v)?,
            "store.bloom_hashes" => self.store.bloom_hashes = parse(key, v)?,
            "store.fp_metadata_size" => self.store.fp_metadata_size = parse(key, v)?,
            "store.expected_fingerprints" => self.store.expected_fingerprints = parse(key, v)?,
            "store.small_cache" => self.small_cache = parse(key, v)?,
            "store.large_cache" => self.large_cache = parse(key, v)?,
            _ => return Err(Error::InvalidParam(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let c = &self.corpus;
        let mut m = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("output_dir", self.output_dir.display().to_string());
        m.insert("corpus.initial_file_count", c.initial_file_count.to_string());
        m.insert("corpus.initial_total_size", c.initial_total_size.to_string());
        m.insert("corpus.snapshots", c.snapshots.to_string());
        m.insert("corpus.file_pick_fraction", c.file_pick_fraction.to_string());
        m.insert("corpus.content_modify_fraction", c.content_modify_fraction.to_string());
        m.insert("corpus.added_bytes_per_snapshot", c.added_bytes_per_snapshot.to_string());
        m.insert("corpus.mean_chunk_size", c.mean_chunk_size.to_string());
        m.insert("corpus.fingerprint_width", c.fingerprint_width.to_string());
        m.insert("corpus.shared_chunk_fraction", c.shared_chunk_fraction.to_string());
        m.insert("corpus.shared_pool_size", c.shared_pool_size.to_string());
        m.insert("corpus.shared_vocabulary_size", c.shared_vocabulary_size.to_string());
        m.insert("corpus.shared_zipf_exponent", c.shared_zipf_exponent.to_string());
        m.insert("corpus.duplicate_file_fraction", c.duplicate_file_fraction.to_string());
        m.insert("scheme", self.scheme.to_string());
        m.insert("segment.min", self.segment.min.to_string());
        m.insert("segment.avg", self.segment.avg.to_string());
        m.insert("segment.max", self.segment.max.to_string());
        m.insert("segment.divisor", self.segment.divisor.to_string());
        m.insert("attack.kind", self.attack_kind.to_string());
        m.insert("attack.mode", self.attack.mode.to_string());
        m.insert("attack.u", self.attack.u.to_string());
        m.insert("attack.v", self.attack.v.to_string());
        m.insert("attack.w", self.attack.w.to_string());
        m.insert("attack.block_size", self.attack.block_size.to_string());
        m.insert("attack.leakage_rate", self.leakage_rate.to_string());
        m.insert("attack.aux", self.aux.to_string());
        m.insert("attack.target", self.target.to_string());
        m.insert("store.container_size", self.store.container_size.to_string());
        m.insert("store.cache_capacity", self.store.cache_capacity.to_string());
        m.insert("store.bloom_fp_rate", self.store.bloom_fp_rate.to_string());
        m.insert("store.bloom_hashes", self.store.bloom_hashes.to_string());
        m.insert("store.fp_metadata_size", self.store.fp_metadata_size.to_string());
        m.insert("store.expected_fingerprints", self.store.expected_fingerprints.to_string());
        m.insert("store.small_cache", self.small_cache.to_string());
        m.insert("store.large_cache", self.large_cache.to_string());
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io_at(path))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(Error::io_at(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.segment.validate()?;
        self.attack.validate()?;
        self.store.validate()?;
        if !(0.0..1.0).contains(&self.leakage_rate) {
            return Err(Error::InvalidParam(format!(
                "leakage rate must be in [0, 1), got {}",
                self.leakage_rate
            )));
        }
        Ok(())
    }
}
