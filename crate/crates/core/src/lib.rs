//! deskml: a single-process, desk-scale data-parallel machine learning
//! library. Datasets are partitioned in memory, iterative algorithms move
//! models and statistics through an instrumented aggregation/broadcast core,
//! and a communication ledger makes the data-movement costs of each
//! algorithm measurable and testable.

pub mod als;
pub mod bayes;
pub mod cluster;
pub mod engine;
pub mod error;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};

/// Concrete `f64` aliases for the generic linalg types; the algorithm
/// modules are written against these.
pub type DenseVector = linalg::DenseVector<f64>;
pub type SparseVector = linalg::SparseVector<f64>;
pub type Vector = linalg::Vector<f64>;
pub type DenseMatrix = linalg::DenseMatrix<f64>;

/// A supervised training example: label plus feature vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabeledPoint {
    pub label: f64,
    pub features: Vector,
}

impl LabeledPoint {
    pub fn new(label: f64, features: Vector) -> Self {
        LabeledPoint { label, features }
    }
}

impl engine::PayloadSize for LabeledPoint {
    fn payload_bytes(&self) -> u64 {
        8 + 8 * self.features.dim() as u64
    }
}

impl engine::PayloadSize for Vector {
    fn payload_bytes(&self) -> u64 {
        8 * self.dim() as u64
    }
}

/// A collaborative-filtering observation: (user, item, value). For explicit
/// feedback the value is the rating; for implicit feedback it is a
/// non-negative observation strength.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: f64,
}

impl Rating {
    pub fn new(user: u32, item: u32, value: f64) -> Self {
        Rating { user, item, value }
    }
}

impl engine::PayloadSize for Rating {
    fn payload_bytes(&self) -> u64 {
        16
    }
}
