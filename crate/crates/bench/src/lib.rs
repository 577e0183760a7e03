//! Shared fixtures for the criterion benchmarks.

use freqdedup_core::{mle_encrypt, trace::generate_synthetic, BackupTrace, SyntheticCorpusParams};

/// A small seeded corpus: `snapshots` backups of roughly `bytes` each.
pub fn corpus(bytes: u64, snapshots: usize, seed: u64) -> Vec<BackupTrace> {
    generate_synthetic(&SyntheticCorpusParams {
        initial_file_count: (bytes / (128 << 10)).max(1) as usize,
        initial_total_size: bytes,
        added_bytes_per_snapshot: bytes / 100,
        snapshots,
        rng_seed: seed,
        ..Default::default()
    })
    .expect("valid corpus params")
}

/// MLE-encrypted auxiliary/target pair taken from the last two snapshots.
pub fn mle_pair(bytes: u64, seed: u64) -> (BackupTrace, BackupTrace, BackupTrace) {
    let mut snaps = corpus(bytes, 2, seed);
    let target = snaps.pop().expect("two snapshots");
    let aux = snaps.pop().expect("two snapshots");
    let cipher = mle_encrypt(&target).cipher_trace;
    (aux, target, cipher)
}
