//! Multinomial naive Bayes trained in one distributed pass of per-class
//! count aggregation.

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::engine::{DistributedDataset, Engine, PayloadSize};
use crate::error::{Error, Result};
use crate::{LabeledPoint, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub class_labels: Vec<f64>,
    pub log_priors: Vec<f64>,
    /// class x feature, row-major per class
    pub log_cond_prob: Vec<Vec<f64>>,
}

impl NaiveBayesModel {
    pub fn num_features(&self) -> usize {
        self.log_cond_prob.first().map_or(0, |r| r.len())
    }

    /// argmax over classes of logPrior + sum_j x_j * logCondProb; ties break
    /// to the lowest class label.
    pub fn predict(&self, x: &Vector) -> Result<f64> {
        if x.dim() != self.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "predictNB: model dim {} vs input dim {}",
                self.num_features(),
                x.dim()
            )));
        }
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (c, (&prior, probs)) in self.log_priors.iter().zip(&self.log_cond_prob).enumerate() {
            let mut score = prior;
            for (j, v) in x.iter_nonzero() {
                score += v * probs[j];
            }
            // class_labels is sorted ascending, so strict > keeps the lowest
            // label on ties
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        Ok(self.class_labels[best])
    }
}

#[derive(Debug, Clone, Default)]
struct ClassCounts {
    // label -> (example count, per-feature sums)
    by_class: BTreeMap<OrderedFloat<f64>, (u64, Vec<f64>)>,
}

impl ClassCounts {
    fn add(mut self, dim: usize, p: &LabeledPoint) -> Self {
        let entry = self
            .by_class
            .entry(OrderedFloat(p.label))
            .or_insert_with(|| (0, vec![0.0; dim]));
        entry.0 += 1;
        for (j, v) in p.features.iter_nonzero() {
            entry.1[j] += v;
        }
        self
    }

    fn merge(mut self, other: ClassCounts) -> Self {
        for (label, (n, sums)) in other.by_class {
            match self.by_class.entry(label) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert((n, sums));
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let (en, esums) = e.get_mut();
                    *en += n;
                    for (a, b) in esums.iter_mut().zip(sums) {
                        *a += b;
                    }
                }
            }
        }
        self
    }
}

impl PayloadSize for ClassCounts {
    fn payload_bytes(&self) -> u64 {
        self.by_class
            .values()
            .map(|(_, sums)| 8 + 8 + 8 * sums.len() as u64)
            .sum()
    }
}

/// logPrior(c) = log(n_c/n); logCondProb(c,j) = log((S_cj + lambda) /
/// (sum_j S_cj + lambda d)). With lambda = 0 a zero count yields -inf.
pub fn train_naive_bayes(
    engine: &Engine,
    ds: &DistributedDataset<LabeledPoint>,
    smoothing: f64,
) -> Result<NaiveBayesModel> {
    if smoothing < 0.0 {
        return Err(Error::InvalidArgument("smoothing must be >= 0".into()));
    }
    if ds.is_empty() {
        return Err(Error::EmptyInput("trainNaiveBayes on empty dataset".into()));
    }
    let dim = ds.iter().next().unwrap().features.dim();
    for p in ds.iter() {
        if p.features.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "trainNaiveBayes: mixed feature dimensions {} and {}",
                dim,
                p.features.dim()
            )));
        }
        for (j, v) in p.features.iter_nonzero() {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "trainNaiveBayes: negative feature {} at index {}",
                    v, j
                )));
            }
        }
    }

    let counts = engine.tree_aggregate(
        ds,
        ClassCounts::default(),
        |acc, p| acc.add(dim, p),
        |a, b| a.merge(b),
        engine.config().default_depth,
    )?;

    let n: u64 = counts.by_class.values().map(|(c, _)| c).sum();
    let mut class_labels = Vec::new();
    let mut log_priors = Vec::new();
    let mut log_cond_prob = Vec::new();
    for (label, (nc, sums)) in &counts.by_class {
        class_labels.push(label.0);
        log_priors.push((*nc as f64 / n as f64).ln());
        let total: f64 = sums.iter().sum();
        let denom = total + smoothing * dim as f64;
        log_cond_prob.push(sums.iter().map(|&s| ((s + smoothing) / denom).ln()).collect());
    }
    Ok(NaiveBayesModel { class_labels, log_priors, log_cond_prob })
}
