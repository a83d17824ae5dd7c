//! In-memory ordered key-value store backing the booking service.
//!
//! Keys and values are opaque byte strings. Keys are kept in lexicographic
//! order so entity kinds can be enumerated with a prefix scan
//! (`airport/`, `flight/`, `seats/`, ...).

use std::collections::BTreeMap;
use std::ops::Bound;
use std::sync::{Arc, RwLock};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("store keys must be non-empty")]
    EmptyKey,
}

/// Outcome of [`KvStore::compare_and_swap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CasOutcome {
    Swapped,
    /// The stored value differed from the expected one; carries the current
    /// value (`None` when the key is absent).
    Conflict(Option<Vec<u8>>),
}

/// Thread-safe ordered map. Cloning the handle shares the underlying data;
/// use [`KvStore::deep_clone`] for an independent copy.
#[derive(Debug, Clone, Default)]
pub struct KvStore {
    inner: Arc<RwLock<BTreeMap<Vec<u8>, Vec<u8>>>>,
}

impl KvStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Result<(), StoreError> {
        let key = key.into();
        if key.is_empty() {
            return Err(StoreError::EmptyKey);
        }
        self.inner
            .write()
            .expect("store lock poisoned")
            .insert(key, value.into());
        Ok(())
    }

    /// Returns `None` for an absent key. An empty stored value is `Some(vec![])`.
    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.inner.read().expect("store lock poisoned").get(key).cloned()
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.inner.read().expect("store lock poisoned").contains_key(key)
    }

    /// Atomically replaces the value at `key` with `new` iff the current
    /// value equals `expected` (`None` meaning "absent").
    pub fn compare_and_swap(
        &self,
        key: &[u8],
        expected: Option<&[u8]>,
        new: Vec<u8>,
    ) -> Result<CasOutcome, StoreError> {
        if key.is_empty() {
            return Err(StoreError::EmptyKey);
        }
        let mut map = self.inner.write().expect("store lock poisoned");
        let current = map.get(key).map(Vec::as_slice);
        if current != expected {
            return Ok(CasOutcome::Conflict(current.map(<[u8]>::to_vec)));
        }
        map.insert(key.to_vec(), new);
        Ok(CasOutcome::Swapped)
    }

    /// All entries whose key starts with `prefix`, in ascending key order.
    pub fn scan_prefix(&self, prefix: &[u8]) -> Vec<(Vec<u8>, Vec<u8>)> {
        let map = self.inner.read().expect("store lock poisoned");
        map.range::<[u8], _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn count_prefix(&self, prefix: &[u8]) -> usize {
        let map = self.inner.read().expect("store lock poisoned");
        map.range::<[u8], _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .count()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn deep_clone(&self) -> Self {
        let map = self.inner.read().expect("store lock poisoned").clone();
        Self {
            inner: Arc::new(RwLock::new(map)),
        }
    }

    /// Full contents in key order; used for determinism checks and dumps.
    pub fn snapshot(&self) -> Vec<(Vec<u8>, Vec<u8>)> {
        self.scan_prefix(b"")
    }
}
