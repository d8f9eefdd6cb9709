use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::text;

/// One cached (speech, transcript) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub features: Tensor,
    pub transcript: String,
    pub labels: Vec<usize>,
    pub source: String,
}

/// Bounded, append-only store of training examples with FIFO eviction.
#[derive(Clone, Debug)]
pub struct TrainingCache {
    capacity: usize,
    entries: VecDeque<Arc<CacheEntry>>,
    evicted: usize,
}

impl TrainingCache {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("cache capacity must be positive".into()));
        }
        Ok(Self { capacity, entries: VecDeque::new(), evicted: 0 })
    }

    /// Appends an example. Returns the id of the entry evicted to make
    /// room, if any.
    pub fn append(
        &mut self,
        id: impl Into<String>,
        features: Tensor,
        transcript: &str,
        source: impl Into<String>,
    ) -> Result<Option<String>> {
        let id = id.into();
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::InvalidArgument(format!("duplicate cache id {id:?}")));
        }
        let transcript = text::normalize(transcript);
        let labels = text::to_labels(&transcript)?;
        let evicted = if self.entries.len() == self.capacity {
            self.evicted += 1;
            self.entries.pop_front().map(|e| e.id.clone())
        } else {
            None
        };
        self.entries.push_back(Arc::new(CacheEntry { id, features, transcript, labels, source: source.into() }));
        Ok(evicted)
    }

    /// Immutable view of the current contents; later appends do not show.
    pub fn snapshot(&self) -> CacheSnapshot {
        CacheSnapshot { entries: self.entries.iter().cloned().collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries dropped by FIFO eviction so far.
    pub fn evicted(&self) -> usize {
        self.evicted
    }
}

/// Frozen dataset consumed by a training session.
#[derive(Clone, Debug)]
pub struct CacheSnapshot {
    entries: Arc<[Arc<CacheEntry>]>,
}

impl CacheSnapshot {
    pub fn entries(&self) -> &[Arc<CacheEntry>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats() -> Tensor {
        Tensor::zeros(&[6, 8])
    }

    #[test]
    fn snapshot_sees_only_prior_appends() {
        let mut cache = TrainingCache::new(10).unwrap();
        cache.append("u0", feats(), "dan", "supervised").unwrap();
        let before = cache.snapshot();
        cache.append("u1", feats(), "zhuge", "supervised").unwrap();
        assert_eq!(before.ids(), ["u0"]);
        assert_eq!(cache.snapshot().ids(), ["u0", "u1"]);
        assert_eq!(before.entries()[0].labels, text::to_labels("dan").unwrap());
    }

    #[test]
    fn evicts_oldest_beyond_capacity() {
        let mut cache = TrainingCache::new(50).unwrap();
        let mut evicted = Vec::new();
        for i in 0..60 {
            evicted.extend(cache.append(format!("u{i}"), feats(), "a", "t").unwrap());
        }
        let want: Vec<String> = (10..60).map(|i| format!("u{i}")).collect();
        assert_eq!(cache.snapshot().ids(), want);
        assert_eq!(evicted, (0..10).map(|i| format!("u{i}")).collect::<Vec<_>>());
        assert_eq!(cache.evicted(), 10);
    }

    #[test]
    fn rejects_duplicates_and_bad_text() {
        let mut cache = TrainingCache::new(4).unwrap();
        cache.append("u0", feats(), "a", "t").unwrap();
        assert!(cache.append("u0", feats(), "b", "t").is_err());
        assert!(cache.append("u1", feats(), "b\u{e9}", "t").is_err());
        assert!(TrainingCache::new(0).is_err());
    }
}
