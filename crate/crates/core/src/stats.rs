//! Distributed column summary statistics via one-pass mergeable accumulators.

use serde::{Deserialize, Serialize};

use crate::engine::{DistributedDataset, Engine, PayloadSize};
use crate::error::{Error, Result};
use crate::Vector;

/// Per-column running moments over explicitly stored entries. Implicit zeros
/// from sparse rows are folded in at finalize, so sparse data never gets
/// densified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsAccumulator {
    dim: usize,
    rows: u64,
    // per column, over explicit entries only
    n: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
    nnz: Vec<u64>,
}

impl PayloadSize for StatsAccumulator {
    fn payload_bytes(&self) -> u64 {
        // six arrays of canonical 8-byte entries plus the row counter
        8 + 6 * 8 * self.dim as u64
    }
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        StatsAccumulator {
            dim,
            rows: 0,
            n: vec![0; dim],
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            min: vec![f64::INFINITY; dim],
            max: vec![f64::NEG_INFINITY; dim],
            nnz: vec![0; dim],
        }
    }

    pub fn add(mut self, v: &Vector) -> Result<Self> {
        if v.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "colStats: vector of dim {} in dim-{} dataset",
                v.dim(),
                self.dim
            )));
        }
        self.rows += 1;
        for (j, x) in v.iter_nonzero() {
            self.n[j] += 1;
            let delta = x - self.mean[j];
            self.mean[j] += delta / self.n[j] as f64;
            self.m2[j] += delta * (x - self.mean[j]);
            if x < self.min[j] {
                self.min[j] = x;
            }
            if x > self.max[j] {
                self.max[j] = x;
            }
            if x != 0.0 {
                self.nnz[j] += 1;
            }
        }
        Ok(self)
    }

    /// Chan-style pairwise merge.
    pub fn merge(mut self, other: &StatsAccumulator) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        self.rows += other.rows;
        for j in 0..self.dim {
            let (na, nb) = (self.n[j] as f64, other.n[j] as f64);
            if nb == 0.0 {
                continue;
            }
            if na == 0.0 {
                self.n[j] = other.n[j];
                self.mean[j] = other.mean[j];
                self.m2[j] = other.m2[j];
            } else {
                let n = na + nb;
                let delta = other.mean[j] - self.mean[j];
                self.mean[j] += delta * nb / n;
                self.m2[j] += other.m2[j] + delta * delta * na * nb / n;
                self.n[j] += other.n[j];
            }
            self.min[j] = self.min[j].min(other.min[j]);
            self.max[j] = self.max[j].max(other.max[j]);
            self.nnz[j] += other.nnz[j];
        }
        self
    }

    /// Fold in the implicit zeros of sparse rows and produce final stats.
    pub fn finalize(&self) -> Result<SummaryStats> {
        if self.rows == 0 {
            return Err(Error::EmptyInput("colStats on empty dataset".into()));
        }
        let n = self.rows;
        let mut mean = vec![0.0; self.dim];
        let mut variance = vec![0.0; self.dim];
        let mut min = vec![0.0; self.dim];
        let mut max = vec![0.0; self.dim];
        for j in 0..self.dim {
            let ne = self.n[j] as f64;
            let zeros = (n - self.n[j]) as f64;
            let total = ne + zeros;
            // merge explicit stats with a block of `zeros` exact zeros
            let (mj, m2j) = if ne == 0.0 {
                (0.0, 0.0)
            } else if zeros == 0.0 {
                (self.mean[j], self.m2[j])
            } else {
                let delta = 0.0 - self.mean[j];
                (
                    self.mean[j] + delta * zeros / total,
                    self.m2[j] + delta * delta * ne * zeros / total,
                )
            };
            mean[j] = mj;
            variance[j] = if n >= 2 { (m2j / (total - 1.0)).max(0.0) } else { 0.0 };
            min[j] = if zeros > 0.0 { self.min[j].min(0.0) } else { self.min[j] };
            max[j] = if zeros > 0.0 { self.max[j].max(0.0) } else { self.max[j] };
        }
        Ok(SummaryStats {
            count: n,
            mean,
            variance,
            min,
            max,
            nnz: self.nnz.clone(),
        })
    }
}

/// Final per-column summary of a dataset of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub nnz: Vec<u64>,
}

impl SummaryStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One distributed pass over the dataset; mean/variance use pairwise merge.
pub fn col_stats(engine: &Engine, ds: &DistributedDataset<Vector>) -> Result<SummaryStats> {
    let dim = match ds.iter().next() {
        Some(v) => v.dim(),
        None => return Err(Error::EmptyInput("colStats on empty dataset".into())),
    };
    for v in ds.iter() {
        if v.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "colStats: mixed dimensions {} and {}",
                dim,
                v.dim()
            )));
        }
    }
    let acc = engine.tree_aggregate(
        ds,
        StatsAccumulator::new(dim),
        |a: StatsAccumulator, v| a.add(v).expect("dimensions validated"),
        |a, b| a.merge(&b),
        engine.config().default_depth,
    )?;
    acc.finalize()
}
