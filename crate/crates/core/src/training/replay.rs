use std::collections::BTreeMap;

use rand::Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::games::{ClusterKey, Level, Size};

/// A playable level with its measured properties and normalized controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub level: Level,
    pub properties: Vec<f64>,
    pub controls: Vec<f64>,
    pub key: ClusterKey,
}

/// Replay levels of one size, grouped by cluster key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Entry>", into = "Vec<Entry>")]
pub struct SizeBuffer {
    clusters: BTreeMap<ClusterKey, Vec<Entry>>,
    seen: FxHashSet<Vec<u8>>,
    len: usize,
}

impl From<Vec<Entry>> for SizeBuffer {
    fn from(entries: Vec<Entry>) -> Self {
        let mut b = SizeBuffer::default();
        for e in entries {
            b.insert(e);
        }
        b
    }
}

impl From<SizeBuffer> for Vec<Entry> {
    fn from(b: SizeBuffer) -> Self {
        b.clusters.into_values().flatten().collect()
    }
}

impl SizeBuffer {
    /// Adds `entry` unless an identical grid is already stored.
    pub fn insert(&mut self, entry: Entry) -> bool {
        if !self.seen.insert(entry.level.cells().to_vec()) {
            return false;
        }
        self.clusters.entry(entry.key.clone()).or_default().push(entry);
        self.len += 1;
        true
    }

    pub fn contains(&self, level: &Level) -> bool {
        self.seen.contains(level.cells())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_size(&self, key: &ClusterKey) -> usize {
        self.clusters.get(key).map_or(0, Vec::len)
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn clusters(&self) -> impl Iterator<Item = (&ClusterKey, &[Entry])> {
        self.clusters.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.clusters.values().flatten()
    }

    /// Uniform cluster, then a uniform entry inside it.
    pub fn diversity_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Entry> {
        if self.is_empty() {
            return None;
        }
        let c = rng.random_range(0..self.clusters.len());
        let cluster = self.clusters.values().nth(c)?;
        cluster.get(rng.random_range(0..cluster.len()))
    }

    /// Uniform over all stored entries.
    pub fn uniform_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Entry> {
        if self.is_empty() {
            return None;
        }
        self.entries().nth(rng.random_range(0..self.len))
    }

    pub fn sample<R: Rng + ?Sized>(&self, diversity: bool, rng: &mut R) -> Option<&Entry> {
        if diversity {
            self.diversity_sample(rng)
        } else {
            self.uniform_sample(rng)
        }
    }
}

/// Per-size replay buffers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    sizes: BTreeMap<Size, SizeBuffer>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, size: Size) -> Option<&SizeBuffer> {
        self.sizes.get(&size)
    }

    pub fn insert(&mut self, entry: Entry) -> bool {
        self.sizes.entry(entry.level.size()).or_default().insert(entry)
    }

    pub fn len(&self, size: Size) -> usize {
        self.get(size).map_or(0, SizeBuffer::len)
    }

    pub fn total_len(&self) -> usize {
        self.sizes.values().map(SizeBuffer::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    pub fn sizes(&self) -> impl Iterator<Item = (Size, &SizeBuffer)> {
        self.sizes.iter().map(|(s, b)| (*s, b))
    }

    /// The populated buffer closest to `size` (itself if populated).
    pub fn closest_populated(&self, size: Size) -> Option<Size> {
        let populated: Vec<Size> = self.sizes().filter(|(_, b)| !b.is_empty()).map(|(s, _)| s).collect();
        size.closest(&populated)
    }
}
