use std::num::NonZeroUsize;

use lru::LruCache;

use crate::fingerprint::Fingerprint;

/// In-memory fingerprint to container map with per-entry LRU eviction.
/// A zero capacity disables caching.
pub struct FingerprintCache {
    inner: Option<LruCache<Fingerprint, u64>>,
}

impl FingerprintCache {
    pub fn new(entries: usize) -> Self {
        FingerprintCache {
            inner: NonZeroUsize::new(entries).map(LruCache::new),
        }
    }

    pub fn capacity(&self) -> usize {
        self.inner.as_ref().map_or(0, |c| c.cap().get())
    }

    pub fn len(&self) -> usize {
        self.inner.as_ref().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up and refreshes recency.
    pub fn get(&mut self, fp: &Fingerprint) -> Option<u64> {
        self.inner.as_mut()?.get(fp).copied()
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.inner.as_ref().is_some_and(|c| c.contains(fp))
    }

    /// Admits every fingerprint of a container.
    pub fn load<'a>(&mut self, container: u64, fps: impl IntoIterator<Item = &'a Fingerprint>) {
        if let Some(c) = self.inner.as_mut() {
            for fp in fps {
                c.put(*fp, container);
            }
        }
    }
}
