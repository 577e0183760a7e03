//! Frequency-analysis attacks against encrypted deduplication, the MinHash
//! encryption and scrambling defenses, and a DDFS-style deduplicating store
//! simulator for measuring storage efficiency and metadata access overhead.
//!
//! The crate is organised by stage of an experiment:
//!
//! - [`trace`]: backup chunk traces (parsing, writing, synthetic corpora and
//!   content-defined chunking of real files).
//! - [`freq`]: frequency and neighbor tables plus rank-pairing frequency
//!   analysis.
//! - [`attacks`]: the basic, locality-based and advanced locality-based
//!   inference attacks.
//! - [`defenses`]: segmentation, MLE, MinHash encryption and scrambling.
//! - [`store`]: the deduplicating store simulator.
//! - [`metrics`]: inference rate, storage saving and result tables.
//! - [`config`]: flat key=value experiment configuration and seed derivation.

pub mod attacks;
pub mod config;
pub mod defenses;
pub mod error;
pub mod fingerprint;
pub mod freq;
pub mod metrics;
pub mod store;
pub mod trace;

pub use attacks::{
    advanced_locality_attack, basic_attack, locality_attack, sample_leakage, AttackKind,
    AttackMode, AttackParams, InferredPairSet, InferredQueue, LeakageSet, Provenance, Side,
};
pub use defenses::{
    defend, minhash_encrypt, mle_encrypt, scramble, segment, EncryptionOutput, GroundTruth,
    Segment, SegmentKey, SegmentParams,
};
pub use error::{Error, Result};
pub use fingerprint::Fingerprint;
pub use freq::{
    count, freq_analysis, size_aware_freq_analysis, FrequencyTable, InferredPair, NeighborTable,
    SizeClassTable, TraceTables,
};
pub use metrics::{inference_rate, storage_saving, EvalResult};
pub use store::{MetadataAccessStats, Store, StoreParams, StoreReport};
pub use trace::{BackupTrace, ChunkRecord, SyntheticCorpusParams};
