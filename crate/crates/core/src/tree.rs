//! Distributed decision trees and forests: quantile feature binning computed
//! once from a sample, level-wise growth driven by a single aggregation of
//! per-(tree, node, feature, bin) sufficient statistics per level, and
//! ensembles trained in lockstep so one pass per level covers every tree.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::{DistributedDataset, Engine, PayloadSize};
use crate::error::{Error, Result};
use crate::{LabeledPoint, Vector};

const BIN_SAMPLE_CAP: usize = 10_000;
const MAX_SUPPORTED_DEPTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Impurity {
    Gini,
    Entropy,
    Variance,
}

impl Impurity {
    pub fn is_classification(self) -> bool {
        !matches!(self, Impurity::Variance)
    }
}

/// Per-feature sorted thresholds; maxBins-1 thresholds define maxBins
/// intervals. The bin index of x is the count of thresholds < x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub thresholds: Vec<Vec<f64>>,
}

impl BinSpec {
    pub fn num_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn num_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn bin_index(&self, feature: usize, x: f64) -> usize {
        self.thresholds[feature].partition_point(|&t| t < x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// `x[feature] <= threshold` goes left; equals one of the feature's bin
    /// boundaries
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        prediction: f64,
        impurity: f64,
        count: f64,
    },
    Internal {
        split: Split,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &Vector) -> f64 {
        match self {
            TreeNode::Leaf { prediction, .. } => *prediction,
            TreeNode::Internal { split, left, right, .. } => {
                if x.get(split.feature) <= split.threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: TreeNode,
    pub impurity: Impurity,
    pub num_features: usize,
    /// sorted distinct training labels (classification only)
    pub class_labels: Vec<f64>,
}

impl TreeModel {
    pub fn predict(&self, x: &Vector) -> f64 {
        self.root.predict(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub impurity: Impurity,
    pub num_features: usize,
    pub class_labels: Vec<f64>,
}

impl ForestModel {
    /// Majority vote (classification, ties to the lowest label) or mean
    /// (regression) over the trees.
    pub fn predict(&self, x: &Vector) -> f64 {
        if self.impurity.is_classification() {
            let mut votes: HashMap<u64, (f64, usize)> = HashMap::new();
            for t in &self.trees {
                let p = t.predict(x);
                let e = votes.entry(p.to_bits()).or_insert((p, 0));
                e.1 += 1;
            }
            let mut best: Option<(f64, usize)> = None;
            for (_, (label, n)) in votes {
                best = Some(match best {
                    None => (label, n),
                    Some((bl, bn)) => {
                        if n > bn || (n == bn && label < bl) {
                            (label, n)
                        } else {
                            (bl, bn)
                        }
                    }
                });
            }
            best.map(|(l, _)| l).unwrap_or(0.0)
        } else {
            let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
            sum / self.trees.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub max_bins: usize,
    pub impurity: Impurity,
    pub feature_subset_fraction: f64,
    pub bootstrap: bool,
    pub min_info_gain: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 1,
            max_depth: 5,
            max_bins: 32,
            impurity: Impurity::Gini,
            feature_subset_fraction: 1.0,
            bootstrap: false,
            min_info_gain: 0.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.num_trees < 1
            || self.max_bins < 2
            || !(self.feature_subset_fraction > 0.0 && self.feature_subset_fraction <= 1.0)
            || self.min_info_gain < 0.0
        {
            return Err(Error::InvalidArgument(format!("bad forest config: {:?}", self)));
        }
        if self.max_depth > MAX_SUPPORTED_DEPTH {
            return Err(Error::InvalidArgument(format!(
                "maxDepth {} exceeds supported {}",
                self.max_depth, MAX_SUPPORTED_DEPTH
            )));
        }
        Ok(())
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Quantile thresholds per feature from a seeded sample. Features with fewer
/// than maxBins distinct sampled values get thresholds at midpoints between
/// consecutive distinct values; otherwise thresholds sit at the
/// (i/maxBins)-quantile boundaries, deduplicated.
pub fn find_split_bins(
    ds: &DistributedDataset<LabeledPoint>,
    max_bins: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<BinSpec> {
    if max_bins < 2 {
        return Err(Error::InvalidArgument(format!("maxBins must be >= 2, got {}", max_bins)));
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::InvalidArgument("sampleFraction must be in (0,1]".into()));
    }
    if ds.is_empty() {
        return Err(Error::EmptyInput("findSplitBins on empty dataset".into()));
    }
    let d = ds.iter().next().unwrap().features.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6b15, 0));
    let mut sample: Vec<Vec<f64>> = Vec::new();
    for p in ds.iter() {
        let take = if sample_fraction >= 1.0 { true } else { rng.gen_bool(sample_fraction) };
        if take && sample.len() < BIN_SAMPLE_CAP {
            sample.push((0..d).map(|j| p.features.get(j)).collect());
        }
    }
    if sample.is_empty() {
        return Err(Error::EmptyInput("findSplitBins: sample came up empty".into()));
    }

    let mut thresholds = Vec::with_capacity(d);
    for f in 0..d {
        let mut values: Vec<f64> = sample.iter().map(|r| r[f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct: Vec<f64> = Vec::new();
        for &v in &values {
            if distinct.last() != Some(&v) {
                distinct.push(v);
            }
        }
        let mut ts: Vec<f64> = Vec::new();
        if distinct.len() >= 2 {
            if distinct.len() < max_bins {
                for w in distinct.windows(2) {
                    ts.push((w[0] + w[1]) / 2.0);
                }
            } else {
                let m = values.len();
                for i in 1..max_bins {
                    let idx = i * m / max_bins;
                    if idx == 0 || idx >= m {
                        continue;
                    }
                    let t = (values[idx - 1] + values[idx]) / 2.0;
                    if ts.last().map_or(true, |&last| t > last) {
                        ts.push(t);
                    }
                }
            }
        }
        thresholds.push(ts);
    }
    Ok(BinSpec { thresholds })
}

// ---------------------------------------------------------------------------
// level-wise growth

#[derive(Debug, Clone)]
struct BinnedRow {
    bins: Vec<u32>,
    /// class index (classification) or label value (regression)
    target: f64,
    /// per-tree bootstrap weight
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
struct FrontierEntry {
    tree: usize,
    node_id: u64,
    subset: Vec<usize>,
    offset: usize,
    /// per subset position, offset of that feature's bin block
    feat_offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
struct LevelPlan {
    /// per tree, decided splits for routing: node_id -> (feature, max left bin)
    routes: Vec<HashMap<u64, (usize, u32)>>,
    entries: Vec<FrontierEntry>,
    index: HashMap<(usize, u64), usize>,
    total_len: usize,
    stat_width: usize,
    regression: bool,
}

impl PayloadSize for LevelPlan {
    fn payload_bytes(&self) -> u64 {
        let routes: u64 = self.routes.iter().map(|m| 16 * m.len() as u64).sum();
        let entries: u64 = self
            .entries
            .iter()
            .map(|e| 16 + 8 * e.subset.len() as u64)
            .sum();
        routes + entries
    }
}

fn route(routes: &HashMap<u64, (usize, u32)>, bins: &[u32]) -> u64 {
    let mut id = 1u64;
    while let Some(&(feature, max_left_bin)) = routes.get(&id) {
        id = if bins[feature] <= max_left_bin { 2 * id } else { 2 * id + 1 };
    }
    id
}

fn node_impurity(stats: &[f64], impurity: Impurity) -> (f64, f64) {
    match impurity {
        Impurity::Gini => {
            let n: f64 = stats.iter().sum();
            if n <= 0.0 {
                return (0.0, 0.0);
            }
            let mut acc = 1.0;
            for &c in stats {
                let p = c / n;
                acc -= p * p;
            }
            (acc, n)
        }
        Impurity::Entropy => {
            let n: f64 = stats.iter().sum();
            if n <= 0.0 {
                return (0.0, 0.0);
            }
            let mut acc = 0.0;
            for &c in stats {
                if c > 0.0 {
                    let p = c / n;
                    acc -= p * p.log2();
                }
            }
            (acc, n)
        }
        Impurity::Variance => {
            let n = stats[0];
            if n <= 0.0 {
                return (0.0, 0.0);
            }
            let mean = stats[1] / n;
            ((stats[2] / n - mean * mean).max(0.0), n)
        }
    }
}

fn leaf_prediction(stats: &[f64], impurity: Impurity, class_labels: &[f64]) -> f64 {
    if impurity.is_classification() {
        let mut best = 0usize;
        for (c, &count) in stats.iter().enumerate() {
            // strict > keeps the lowest label on ties
            if count > stats[best] {
                best = c;
            }
        }
        class_labels[best]
    } else if stats[0] > 0.0 {
        stats[1] / stats[0]
    } else {
        0.0
    }
}

struct Grower<'a> {
    bins: &'a BinSpec,
    config: &'a ForestConfig,
    class_labels: Vec<f64>,
    stat_width: usize,
    num_features: usize,
    /// (tree, node_id) -> (split, gain, max left bin)
    splits: HashMap<(usize, u64), (Split, f64, u32)>,
    /// (tree, node_id) -> (prediction, impurity, count)
    leaves: HashMap<(usize, u64), (f64, f64, f64)>,
}

impl<'a> Grower<'a> {
    fn feature_subset(&self, tree: usize, node_id: u64) -> Vec<usize> {
        let d = self.num_features;
        let take = ((self.config.feature_subset_fraction * d as f64).round() as usize)
            .clamp(1, d);
        if take == d {
            return (0..d).collect();
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, tree as u64 + 1, node_id));
        let mut idx: Vec<usize> = (0..d).collect();
        for i in 0..take {
            let j = rng.gen_range(i..d);
            idx.swap(i, j);
        }
        let mut subset = idx[..take].to_vec();
        subset.sort_unstable();
        subset
    }

    fn make_plan(&self, frontier: &[(usize, u64)]) -> LevelPlan {
        let mut entries = Vec::with_capacity(frontier.len());
        let mut index = HashMap::new();
        let mut offset = 0usize;
        for &(tree, node_id) in frontier {
            let subset = self.feature_subset(tree, node_id);
            let mut feat_offsets = Vec::with_capacity(subset.len());
            let mut local = 0usize;
            for &f in &subset {
                feat_offsets.push(local);
                local += self.bins.num_bins(f) * self.stat_width;
            }
            index.insert((tree, node_id), entries.len());
            entries.push(FrontierEntry { tree, node_id, subset, offset, feat_offsets });
            offset += local;
        }
        let mut routes = vec![HashMap::new(); self.config.num_trees];
        for (&(tree, node_id), &(ref split, _, max_left_bin)) in &self.splits {
            routes[tree].insert(node_id, (split.feature, max_left_bin));
        }
        LevelPlan {
            routes,
            entries,
            index,
            total_len: offset,
            stat_width: self.stat_width,
            regression: !self.config.impurity.is_classification(),
        }
    }

    /// Decide split-or-leaf for one frontier node from its aggregated stats.
    /// Returns the children to activate next level.
    fn decide(
        &mut self,
        entry: &FrontierEntry,
        stats: &[f64],
        depth: usize,
    ) -> Vec<(usize, u64)> {
        let impurity = self.config.impurity;
        let sw = self.stat_width;

        // parent stats from the first subset feature's bins
        let f0 = entry.subset[0];
        let mut parent = vec![0.0; sw];
        let nb0 = self.bins.num_bins(f0);
        for b in 0..nb0 {
            let base = entry.offset + entry.feat_offsets[0] + b * sw;
            for s in 0..sw {
                parent[s] += stats[base + s];
            }
        }
        let (parent_imp, n) = node_impurity(&parent, impurity);
        let prediction = leaf_prediction(&parent, impurity, &self.class_labels);

        let mut make_leaf = || {
            self.leaves.insert((entry.tree, entry.node_id), (prediction, parent_imp, n));
        };

        if n <= 0.0 || parent_imp <= 0.0 || depth >= self.config.max_depth {
            make_leaf();
            return Vec::new();
        }

        // scan features ascending, thresholds ascending; strict > keeps the
        // (lowest feature, lowest threshold) winner on ties
        let mut best: Option<(f64, usize, usize, Vec<f64>)> = None; // gain, subset pos, thr idx, left stats
        for (si, &f) in entry.subset.iter().enumerate() {
            let nbins = self.bins.num_bins(f);
            let mut left = vec![0.0; sw];
            for j in 0..nbins.saturating_sub(1) {
                let base = entry.offset + entry.feat_offsets[si] + j * sw;
                for s in 0..sw {
                    left[s] += stats[base + s];
                }
                let (left_imp, nl) = node_impurity(&left, impurity);
                if nl <= 0.0 {
                    continue;
                }
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let (right_imp, nr) = node_impurity(&right, impurity);
                if nr <= 0.0 {
                    continue;
                }
                let gain = parent_imp - (nl / n) * left_imp - (nr / n) * right_imp;
                if best.as_ref().map_or(true, |(bg, _, _, _)| gain > *bg) {
                    best = Some((gain, si, j, left.clone()));
                }
            }
        }

        match best {
            Some((gain, si, j, _left)) if gain >= self.config.min_info_gain => {
                let feature = entry.subset[si];
                let threshold = self.bins.thresholds[feature][j];
                self.splits.insert(
                    (entry.tree, entry.node_id),
                    (Split { feature, threshold }, gain, j as u32),
                );
                vec![
                    (entry.tree, 2 * entry.node_id),
                    (entry.tree, 2 * entry.node_id + 1),
                ]
            }
            _ => {
                make_leaf();
                Vec::new()
            }
        }
    }

    fn assemble(&self, tree: usize, node_id: u64) -> TreeNode {
        if let Some((split, gain, _)) = self.splits.get(&(tree, node_id)) {
            TreeNode::Internal {
                split: split.clone(),
                gain: *gain,
                left: Box::new(self.assemble(tree, 2 * node_id)),
                right: Box::new(self.assemble(tree, 2 * node_id + 1)),
            }
        } else {
            let (prediction, impurity, count) = self.leaves[&(tree, node_id)];
            TreeNode::Leaf { prediction, impurity, count }
        }
    }
}

/// Train an ensemble level-wise: all trees grow in lockstep so each level
/// uses one aggregation pass covering every (tree, node) pair.
pub fn train_forest(
    engine: &Engine,
    ds: &DistributedDataset<LabeledPoint>,
    bins: &BinSpec,
    config: &ForestConfig,
) -> Result<ForestModel> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("trainForest on empty dataset".into()));
    }
    let d = bins.num_features();
    for p in ds.iter() {
        if p.features.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "trainForest: feature dim {} does not match bin spec dim {}",
                p.features.dim(),
                d
            )));
        }
    }

    // classification label table
    let class_labels: Vec<f64> = if config.impurity.is_classification() {
        let mut labels: Vec<f64> = ds.iter().map(|p| p.label).collect();
        labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        labels.dedup();
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("non-finite classification label".into()));
        }
        labels
    } else {
        Vec::new()
    };
    let stat_width = if config.impurity.is_classification() { class_labels.len() } else { 3 };
    let class_index: HashMap<u64, usize> =
        class_labels.iter().enumerate().map(|(i, &l)| (l.to_bits(), i)).collect();

    // per-tree Poisson(1) bootstrap weights in global row order
    let n = ds.len();
    let num_trees = config.num_trees;
    let weights: Vec<Vec<f64>> = if config.bootstrap {
        (0..num_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0xb007, t as u64));
                let pois = Poisson::new(1.0).unwrap();
                (0..n).map(|_| pois.sample(&mut rng)).collect()
            })
            .collect()
    } else {
        vec![vec![1.0; n]; num_trees]
    };

    let offsets = ds.partition_offsets();
    let binned = engine.map_partitions(ds, |pi, part| {
        part.iter()
            .enumerate()
            .map(|(i, p)| {
                let row = offsets[pi] + i;
                let bin_row: Vec<u32> =
                    (0..d).map(|f| bins.bin_index(f, p.features.get(f)) as u32).collect();
                let target = if config.impurity.is_classification() {
                    class_index[&p.label.to_bits()] as f64
                } else {
                    p.label
                };
                BinnedRow {
                    bins: bin_row,
                    target,
                    weights: (0..num_trees).map(|t| weights[t][row]).collect(),
                }
            })
            .collect::<Vec<_>>()
    });

    let mut grower = Grower {
        bins,
        config,
        class_labels: class_labels.clone(),
        stat_width,
        num_features: d,
        splits: HashMap::new(),
        leaves: HashMap::new(),
    };

    let num_partitions = ds.num_partitions();
    let depth_cfg = engine.config().default_depth;
    let mut frontier: Vec<(usize, u64)> = (0..num_trees).map(|t| (t, 1u64)).collect();
    let mut level = 0usize;

    while !frontier.is_empty() {
        let plan = grower.make_plan(&frontier);
        let total_len = plan.total_len;
        let bc = engine.broadcast(plan, num_partitions);
        let stats = engine.tree_aggregate(
            &binned,
            vec![0.0f64; total_len],
            |mut acc: Vec<f64>, row: &BinnedRow| {
                let plan = bc.value();
                for tree in 0..plan.routes.len() {
                    let w = row.weights[tree];
                    if w == 0.0 {
                        continue;
                    }
                    let node = route(&plan.routes[tree], &row.bins);
                    if let Some(&ei) = plan.index.get(&(tree, node)) {
                        let entry = &plan.entries[ei];
                        for (si, &f) in entry.subset.iter().enumerate() {
                            let b = row.bins[f] as usize;
                            let base = entry.offset + entry.feat_offsets[si] + b * plan.stat_width;
                            accumulate_stats(&mut acc, base, plan.regression, row.target, w);
                        }
                    }
                }
                acc
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
            depth_cfg,
        )?;

        let entries: Vec<FrontierEntry> = bc.value().entries.clone();
        let mut next = Vec::new();
        for entry in &entries {
            next.extend(grower.decide(entry, &stats, level));
        }
        frontier = next;
        level += 1;
    }

    let trees: Vec<TreeNode> = (0..num_trees).map(|t| grower.assemble(t, 1)).collect();
    Ok(ForestModel { trees, impurity: config.impurity, num_features: d, class_labels })
}

fn accumulate_stats(acc: &mut [f64], base: usize, regression: bool, target: f64, w: f64) {
    if regression {
        acc[base] += w;
        acc[base + 1] += w * target;
        acc[base + 2] += w * target * target;
    } else {
        acc[base + target as usize] += w;
    }
}

/// Single tree: the degenerate ensemble with one tree, no bootstrap, full
/// feature set honored from the caller's config.
pub fn train_tree(
    engine: &Engine,
    ds: &DistributedDataset<LabeledPoint>,
    bins: &BinSpec,
    config: &ForestConfig,
) -> Result<TreeModel> {
    let cfg = ForestConfig { num_trees: 1, ..config.clone() };
    let forest = train_forest(engine, ds, bins, &cfg)?;
    Ok(TreeModel {
        root: forest.trees.into_iter().next().unwrap(),
        impurity: forest.impurity,
        num_features: forest.num_features,
        class_labels: forest.class_labels,
    })
}
