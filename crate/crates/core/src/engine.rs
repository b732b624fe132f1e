//! In-process data-parallel execution core.
//!
//! A [`DistributedDataset`] is an immutable partitioned collection; partitions
//! stand in for workers. All cross-partition data movement goes through
//! [`Engine::tree_aggregate`] and [`Engine::broadcast`], which charge the
//! [`CommLedger`] so communication claims are testable.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic serialized-size estimate: element count times canonical
/// element width. The ledger must be reproducible, not physically exact.
pub trait PayloadSize {
    fn payload_bytes(&self) -> u64;
}

macro_rules! fixed_width {
    ($($t:ty => $w:expr),* $(,)?) => {
        $(impl PayloadSize for $t { fn payload_bytes(&self) -> u64 { $w } })*
    };
}
fixed_width!(f64 => 8, f32 => 4, i64 => 8, u64 => 8, i32 => 4, u32 => 4, usize => 8, bool => 1, () => 0);

impl<T: PayloadSize> PayloadSize for Vec<T> {
    fn payload_bytes(&self) -> u64 {
        self.iter().map(|x| x.payload_bytes()).sum()
    }
}

impl<T: PayloadSize> PayloadSize for &T {
    fn payload_bytes(&self) -> u64 {
        (*self).payload_bytes()
    }
}

impl<A: PayloadSize, B: PayloadSize> PayloadSize for (A, B) {
    fn payload_bytes(&self) -> u64 {
        self.0.payload_bytes() + self.1.payload_bytes()
    }
}

impl<A: PayloadSize, B: PayloadSize, C: PayloadSize> PayloadSize for (A, B, C) {
    fn payload_bytes(&self) -> u64 {
        self.0.payload_bytes() + self.1.payload_bytes() + self.2.payload_bytes()
    }
}

impl<S: crate::linalg::Scalar> PayloadSize for crate::linalg::DenseVector<S> {
    fn payload_bytes(&self) -> u64 {
        8 * self.len() as u64
    }
}

impl<S: crate::linalg::Scalar> PayloadSize for crate::linalg::DenseMatrix<S> {
    fn payload_bytes(&self) -> u64 {
        8 * self.values.len() as u64
    }
}

/// Per-run accounting of bytes moved between partitions and to/from the
/// driver. Counters only ever increase during a run.
#[derive(Debug, Default)]
pub struct CommLedger {
    driver_in: AtomicU64,
    driver_out: AtomicU64,
    inter_partition: AtomicU64,
    max_driver_in_degree: AtomicU64,
}

/// Point-in-time copy of the ledger counters, serializable for run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    #[serde(rename = "driverInBytes")]
    pub driver_in_bytes: u64,
    #[serde(rename = "driverOutBytes")]
    pub driver_out_bytes: u64,
    #[serde(rename = "interPartitionBytes")]
    pub inter_partition_bytes: u64,
    #[serde(rename = "maxDriverInDegree")]
    pub max_driver_in_degree: u64,
}

impl LedgerSnapshot {
    pub fn total_bytes(&self) -> u64 {
        self.driver_in_bytes + self.driver_out_bytes + self.inter_partition_bytes
    }
}

impl CommLedger {
    pub fn add_driver_in(&self, bytes: u64) {
        self.driver_in.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_driver_out(&self, bytes: u64) {
        self.driver_out.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_inter_partition(&self, bytes: u64) {
        self.inter_partition.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn observe_driver_in_degree(&self, degree: u64) {
        self.max_driver_in_degree.fetch_max(degree, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            driver_in_bytes: self.driver_in.load(Ordering::Relaxed),
            driver_out_bytes: self.driver_out.load(Ordering::Relaxed),
            inter_partition_bytes: self.inter_partition.load(Ordering::Relaxed),
            max_driver_in_degree: self.max_driver_in_degree.load(Ordering::Relaxed),
        }
    }
}

/// Immutable handle to a partitioned in-memory collection.
#[derive(Debug, Clone)]
pub struct DistributedDataset<T> {
    partitions: Arc<Vec<Vec<T>>>,
    seed: u64,
}

impl<T> DistributedDataset<T> {
    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition(&self, i: usize) -> &[T] {
        &self.partitions[i]
    }

    pub fn partitions(&self) -> &[Vec<T>] {
        &self.partitions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.partitions.iter().flat_map(|p| p.iter())
    }

    /// Global row index of the first element of each partition.
    pub fn partition_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.partitions.len());
        let mut acc = 0usize;
        for p in self.partitions.iter() {
            offsets.push(acc);
            acc += p.len();
        }
        offsets
    }
}

impl<T: Clone> DistributedDataset<T> {
    pub fn collect(&self) -> Vec<T> {
        self.iter().cloned().collect()
    }
}

/// Read-only handle to a value visible from every partition task.
#[derive(Debug, Clone)]
pub struct Broadcast<T> {
    value: Arc<T>,
    byte_size: u64,
}

impl<T> Broadcast<T> {
    pub fn value(&self) -> &T {
        &self.value
    }

    pub fn byte_size(&self) -> u64 {
        self.byte_size
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Worker thread count; `None` uses the process default. Independent of
    /// numPartitions — partitions are the logical unit.
    pub workers: Option<usize>,
    pub default_depth: usize,
    pub default_partitions: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { workers: None, default_depth: 2, default_partitions: 4 }
    }
}

/// Execution core: owns the worker pool and the communication ledger.
pub struct Engine {
    ledger: Arc<CommLedger>,
    pool: rayon::ThreadPool,
    config: EngineConfig,
    aggregations: AtomicU64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = config.workers {
            builder = builder.num_threads(w);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {}", e)))?;
        Ok(Engine { ledger: Arc::new(CommLedger::default()), pool, config, aggregations: AtomicU64::new(0) })
    }

    pub fn with_defaults() -> Self {
        Self::new(EngineConfig::default()).expect("default engine")
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Total tree_aggregate calls so far; used by tests that pin the number
    /// of aggregation passes an algorithm performs.
    pub fn aggregation_count(&self) -> u64 {
        self.aggregations.load(Ordering::Relaxed)
    }

    /// Split items into contiguous runs of size floor(n/P) or ceil(n/P), in
    /// input order. Deterministic given (input order, numPartitions, seed).
    pub fn parallelize<T>(
        &self,
        items: Vec<T>,
        num_partitions: usize,
        seed: u64,
    ) -> Result<DistributedDataset<T>> {
        if num_partitions < 1 {
            return Err(Error::InvalidArgument(format!(
                "numPartitions must be >= 1, got {}",
                num_partitions
            )));
        }
        let n = items.len();
        let base = n / num_partitions;
        let extra = n % num_partitions;
        let mut partitions = Vec::with_capacity(num_partitions);
        let mut it = items.into_iter();
        for p in 0..num_partitions {
            let size = base + if p < extra { 1 } else { 0 };
            partitions.push(it.by_ref().take(size).collect());
        }
        Ok(DistributedDataset { partitions: Arc::new(partitions), seed })
    }

    /// Partition i of the output is f(partition i of the input); partition
    /// count preserved. f must be pure.
    pub fn map_partitions<T, U, F>(
        &self,
        ds: &DistributedDataset<T>,
        f: F,
    ) -> DistributedDataset<U>
    where
        T: Send + Sync,
        U: Send,
        F: Fn(usize, &[T]) -> Vec<U> + Sync,
    {
        use rayon::prelude::*;
        let partitions: Vec<Vec<U>> = self.pool.install(|| {
            ds.partitions()
                .par_iter()
                .enumerate()
                .map(|(i, p)| f(i, p))
                .collect()
        });
        DistributedDataset { partitions: Arc::new(partitions), seed: ds.seed }
    }

    /// Distribute an immutable value to all partitions; charges
    /// byteSize × numPartitions to driverOutBytes. No dedup across calls.
    pub fn broadcast<T: PayloadSize>(&self, value: T, num_partitions: usize) -> Broadcast<T> {
        let byte_size = value.payload_bytes();
        self.ledger.add_driver_out(byte_size * num_partitions as u64);
        Broadcast { value: Arc::new(value), byte_size }
    }

    /// Fold every partition with `seq_op` from `zero`, then combine partials
    /// in a tree of the given depth. Grouping is by contiguous partition
    /// index and merge order is fixed, so concurrency never changes results.
    pub fn tree_aggregate<T, A, F, G>(
        &self,
        ds: &DistributedDataset<T>,
        zero: A,
        seq_op: F,
        comb_op: G,
        depth: usize,
    ) -> Result<A>
    where
        T: Send + Sync,
        A: Clone + Send + Sync + PayloadSize,
        F: Fn(A, &T) -> A + Sync,
        G: Fn(A, A) -> A + Sync + Send,
    {
        use rayon::prelude::*;
        if depth < 1 {
            return Err(Error::InvalidArgument(format!(
                "aggregation depth must be >= 1, got {}",
                depth
            )));
        }
        self.aggregations.fetch_add(1, Ordering::Relaxed);

        let mut partials: Vec<A> = self.pool.install(|| {
            ds.partitions()
                .par_iter()
                .map(|p| p.iter().fold(zero.clone(), |acc, x| seq_op(acc, x)))
                .collect()
        });

        let p = ds.num_partitions();
        let scale = aggregation_scale(p, depth);

        while partials.len() > scale {
            // every partial after the first in a group crosses a boundary
            for chunk in partials.chunks(scale) {
                for partial in &chunk[1..] {
                    self.ledger.add_inter_partition(partial.payload_bytes());
                }
            }
            partials = self.pool.install(|| {
                partials
                    .par_chunks(scale)
                    .map(|chunk| {
                        let mut it = chunk.iter().cloned();
                        let first = it.next().expect("non-empty chunk");
                        it.fold(first, |a, b| comb_op(a, b))
                    })
                    .collect()
            });
        }

        let degree = partials.len() as u64;
        self.ledger.observe_driver_in_degree(degree);
        for partial in &partials {
            self.ledger.add_driver_in(partial.payload_bytes());
        }
        let mut it = partials.into_iter();
        let first = it.next().unwrap_or(zero);
        Ok(it.fold(first, comb_op))
    }
}

/// scale = max(2, ceil(P^(1/depth))). depth 1 degenerates to flat
/// aggregation with all P partials merged at the driver.
pub fn aggregation_scale(num_partitions: usize, depth: usize) -> usize {
    if num_partitions <= 1 {
        return 2;
    }
    let root = (num_partitions as f64).powf(1.0 / depth as f64);
    // guard powf wobble on exact roots (e.g. 64^(1/3))
    let scale = (root - 1e-9).ceil() as usize;
    scale.max(2)
}
