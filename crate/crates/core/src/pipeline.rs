//! Multi-stage pipelines over a minimal named-column table: transformers,
//! estimators, parameter maps, evaluators, and grid-search cross-validation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bayes::{train_naive_bayes, NaiveBayesModel};
use crate::cluster::{train_kmeans, KMeansModel};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::glm::{train_glm, GdConfig, GlmKind, GlmModel};
use crate::{LabeledPoint, Vector};

// ---------------------------------------------------------------------------
// tables

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float(Vec<f64>),
    Int(Vec<i64>),
    Vector(Vec<Vector>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float(v) => v.len(),
            ColumnData::Int(v) => v.len(),
            ColumnData::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_float(&self) -> Result<&[f64]> {
        match self {
            ColumnData::Float(v) => Ok(v),
            _ => Err(Error::Schema("expected a float column".into())),
        }
    }

    pub fn as_vector(&self) -> Result<&[Vector]> {
        match self {
            ColumnData::Vector(v) => Ok(v),
            _ => Err(Error::Schema("expected a vector column".into())),
        }
    }
}

/// Named columns of uniform type sharing one row count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnTable {
    names: Vec<String>,
    columns: Vec<ColumnData>,
}

impl ColumnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    fn require(&self, stage: &str, name: &str) -> Result<&ColumnData> {
        self.column(name).ok_or_else(|| {
            Error::Schema(format!("stage '{}': missing input column '{}'", stage, name))
        })
    }

    pub fn with_column(mut self, name: &str, data: ColumnData) -> Result<Self> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Schema(format!("column '{}' already exists", name)));
        }
        if !self.columns.is_empty() && data.len() != self.num_rows() {
            return Err(Error::DimensionMismatch(format!(
                "column '{}' has {} rows, table has {}",
                name,
                data.len(),
                self.num_rows()
            )));
        }
        self.names.push(name.to_string());
        self.columns.push(data);
        Ok(self)
    }

    pub fn select_rows(&self, rows: &[usize]) -> ColumnTable {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Float(v) => ColumnData::Float(rows.iter().map(|&i| v[i]).collect()),
                ColumnData::Int(v) => ColumnData::Int(rows.iter().map(|&i| v[i]).collect()),
                ColumnData::Vector(v) => {
                    ColumnData::Vector(rows.iter().map(|&i| v[i].clone()).collect())
                }
            })
            .collect();
        ColumnTable { names: self.names.clone(), columns }
    }

    fn labeled_points(&self, stage: &str, features: &str, label: &str) -> Result<Vec<LabeledPoint>> {
        let xs = self.require(stage, features)?.as_vector()?;
        let ys = self.require(stage, label)?.as_float()?;
        Ok(xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| LabeledPoint::new(y, x.clone()))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// params

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Float(f64),
    Int(i64),
    Bool(bool),
}

impl ParamValue {
    fn as_float(&self, stage: &str, name: &str) -> Result<f64> {
        match self {
            ParamValue::Float(v) => Ok(*v),
            ParamValue::Int(v) => Ok(*v as f64),
            _ => Err(Error::Param(format!("stage '{}': param '{}' must be a float", stage, name))),
        }
    }

    fn as_int(&self, stage: &str, name: &str) -> Result<i64> {
        match self {
            ParamValue::Int(v) => Ok(*v),
            _ => Err(Error::Param(format!(
                "stage '{}': param '{}' must be an integer",
                stage, name
            ))),
        }
    }
}

/// (stageId, paramName) -> value; overrides stage defaults at fit time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamMap {
    entries: HashMap<(String, String), ParamValue>,
}

impl ParamMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(mut self, stage_id: &str, name: &str, value: ParamValue) -> Self {
        self.entries.insert((stage_id.to_string(), name.to_string()), value);
        self
    }

    pub fn get(&self, stage_id: &str, name: &str) -> Option<&ParamValue> {
        self.entries.get(&(stage_id.to_string(), name.to_string()))
    }

    fn params_for(&self, stage_id: &str) -> Vec<(&str, &ParamValue)> {
        self.entries
            .iter()
            .filter(|((s, _), _)| s == stage_id)
            .map(|((_, n), v)| (n.as_str(), v))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// stages

#[derive(Debug, Clone)]
pub enum Stage {
    /// pure transformer: output = [input > threshold]
    Binarizer { input: String, output: String, threshold: f64 },
    /// pure transformer: concatenates float/vector columns into one vector
    VectorAssembler { inputs: Vec<String>, output: String },
    /// estimator: learns per-dimension mean and standard deviation
    StandardScaler { input: String, output: String },
    /// estimator: gradient-descent GLM; adds a prediction column
    Glm { kind: GlmKind, features: String, label: String, output: String, config: GdConfig },
    /// estimator: k-means; adds a cluster-index column
    KMeans { features: String, output: String, k: usize, max_iters: usize, tol: f64, seed: u64 },
    /// estimator: multinomial naive Bayes; adds a predicted-label column
    NaiveBayes { features: String, label: String, output: String, smoothing: f64 },
}

/// A stage plus the id used by ParamMap overrides.
#[derive(Debug, Clone)]
pub struct PipelineStage {
    pub id: String,
    pub stage: Stage,
}

impl PipelineStage {
    pub fn new(id: &str, stage: Stage) -> Self {
        PipelineStage { id: id.to_string(), stage }
    }

    /// Apply ParamMap overrides, type-checked against the stage's schema.
    fn resolved(&self, params: &ParamMap) -> Result<Stage> {
        let mut stage = self.stage.clone();
        for (name, value) in params.params_for(&self.id) {
            match (&mut stage, name) {
                (Stage::Binarizer { threshold, .. }, "threshold") => {
                    *threshold = value.as_float(&self.id, name)?;
                }
                (Stage::Glm { config, .. }, "stepSize") => {
                    config.step_size = value.as_float(&self.id, name)?;
                }
                (Stage::Glm { config, .. }, "numIters") => {
                    config.num_iters = value.as_int(&self.id, name)? as usize;
                }
                (Stage::Glm { config, .. }, "regParam") => {
                    config.reg_param = value.as_float(&self.id, name)?;
                }
                (Stage::Glm { config, .. }, "miniBatchFraction") => {
                    config.mini_batch_fraction = value.as_float(&self.id, name)?;
                }
                (Stage::Glm { config, .. }, "seed") => {
                    config.seed = value.as_int(&self.id, name)? as u64;
                }
                (Stage::KMeans { k, .. }, "k") => {
                    *k = value.as_int(&self.id, name)? as usize;
                }
                (Stage::KMeans { max_iters, .. }, "maxIters") => {
                    *max_iters = value.as_int(&self.id, name)? as usize;
                }
                (Stage::KMeans { seed, .. }, "seed") => {
                    *seed = value.as_int(&self.id, name)? as u64;
                }
                (Stage::NaiveBayes { smoothing, .. }, "smoothing") => {
                    *smoothing = value.as_float(&self.id, name)?;
                }
                _ => {
                    return Err(Error::Param(format!(
                        "stage '{}': unknown param '{}'",
                        self.id, name
                    )));
                }
            }
        }
        Ok(stage)
    }
}

// ---------------------------------------------------------------------------
// fitted stages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedStage {
    Binarizer { input: String, output: String, threshold: f64 },
    VectorAssembler { inputs: Vec<String>, output: String },
    StandardScaler { input: String, output: String, mean: Vec<f64>, std: Vec<f64> },
    Glm { features: String, output: String, model: GlmModel },
    KMeans { features: String, output: String, model: KMeansModel },
    NaiveBayes { features: String, output: String, model: NaiveBayesModel },
}

impl FittedStage {
    pub fn transform(&self, table: &ColumnTable) -> Result<ColumnTable> {
        match self {
            FittedStage::Binarizer { input, output, threshold } => {
                let xs = table.require("binarizer", input)?.as_float()?;
                let out: Vec<f64> =
                    xs.iter().map(|&x| if x > *threshold { 1.0 } else { 0.0 }).collect();
                table.clone().with_column(output, ColumnData::Float(out))
            }
            FittedStage::VectorAssembler { inputs, output } => {
                let n = table.num_rows();
                let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
                for input in inputs {
                    match table.require("vector-assembler", input)? {
                        ColumnData::Float(v) => {
                            for (r, &x) in rows.iter_mut().zip(v) {
                                r.push(x);
                            }
                        }
                        ColumnData::Int(v) => {
                            for (r, &x) in rows.iter_mut().zip(v) {
                                r.push(x as f64);
                            }
                        }
                        ColumnData::Vector(v) => {
                            for (r, x) in rows.iter_mut().zip(v) {
                                for j in 0..x.dim() {
                                    r.push(x.get(j));
                                }
                            }
                        }
                    }
                }
                let out = rows.into_iter().map(Vector::dense).collect();
                table.clone().with_column(output, ColumnData::Vector(out))
            }
            FittedStage::StandardScaler { input, output, mean, std } => {
                let xs = table.require("standard-scaler", input)?.as_vector()?;
                let out: Result<Vec<Vector>> = xs
                    .iter()
                    .map(|x| {
                        if x.dim() != mean.len() {
                            return Err(Error::DimensionMismatch(format!(
                                "standard-scaler: fit dim {} vs input dim {}",
                                mean.len(),
                                x.dim()
                            )));
                        }
                        Ok(Vector::dense(
                            (0..x.dim()).map(|j| (x.get(j) - mean[j]) / std[j]).collect(),
                        ))
                    })
                    .collect();
                table.clone().with_column(output, ColumnData::Vector(out?))
            }
            FittedStage::Glm { features, output, model } => {
                let xs = table.require("glm", features)?.as_vector()?;
                let out: Result<Vec<f64>> = xs
                    .iter()
                    .map(|x| match model.kind {
                        GlmKind::Linear => model.predict(x),
                        GlmKind::Logistic => model.classify(x),
                    })
                    .collect();
                table.clone().with_column(output, ColumnData::Float(out?))
            }
            FittedStage::KMeans { features, output, model } => {
                let xs = table.require("kmeans", features)?.as_vector()?;
                let out: Result<Vec<f64>> =
                    xs.iter().map(|x| model.predict(x).map(|c| c as f64)).collect();
                table.clone().with_column(output, ColumnData::Float(out?))
            }
            FittedStage::NaiveBayes { features, output, model } => {
                let xs = table.require("naive-bayes", features)?.as_vector()?;
                let out: Result<Vec<f64>> = xs.iter().map(|x| model.predict(x)).collect();
                table.clone().with_column(output, ColumnData::Float(out?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub stages: Vec<FittedStage>,
}

impl PipelineModel {
    pub fn transform(&self, table: &ColumnTable) -> Result<ColumnTable> {
        let mut t = table.clone();
        for stage in &self.stages {
            t = stage.transform(&t)?;
        }
        Ok(t)
    }
}

fn parallelize_points(
    engine: &Engine,
    points: Vec<LabeledPoint>,
) -> Result<crate::engine::DistributedDataset<LabeledPoint>> {
    let p = engine.config().default_partitions;
    engine.parallelize(points, p, 0)
}

/// Fit left to right: transformers pass through, estimators fit on the
/// current table and are replaced by their fitted transformer.
pub fn fit_pipeline(
    engine: &Engine,
    stages: &[PipelineStage],
    table: &ColumnTable,
    params: &ParamMap,
) -> Result<PipelineModel> {
    let mut current = table.clone();
    let mut fitted = Vec::with_capacity(stages.len());
    for ps in stages {
        let stage = ps.resolved(params)?;
        let f = match stage {
            Stage::Binarizer { input, output, threshold } => {
                FittedStage::Binarizer { input, output, threshold }
            }
            Stage::VectorAssembler { inputs, output } => {
                FittedStage::VectorAssembler { inputs, output }
            }
            Stage::StandardScaler { input, output } => {
                let xs = current.require(&ps.id, &input)?.as_vector()?;
                if xs.is_empty() {
                    return Err(Error::EmptyInput(format!("stage '{}': empty column", ps.id)));
                }
                let ds = engine.parallelize(
                    xs.to_vec(),
                    engine.config().default_partitions,
                    0,
                )?;
                let stats = crate::stats::col_stats(engine, &ds)?;
                let std: Vec<f64> = stats
                    .variance
                    .iter()
                    .map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 })
                    .collect();
                FittedStage::StandardScaler { input, output, mean: stats.mean.clone(), std }
            }
            Stage::Glm { kind, features, label, output, config } => {
                let points = current.labeled_points(&ps.id, &features, &label)?;
                let ds = parallelize_points(engine, points)?;
                let (model, _) = train_glm(engine, &ds, kind, &config)?;
                FittedStage::Glm { features, output, model }
            }
            Stage::KMeans { features, output, k, max_iters, tol, seed } => {
                let xs = current.require(&ps.id, &features)?.as_vector()?;
                let ds = engine.parallelize(
                    xs.to_vec(),
                    engine.config().default_partitions,
                    0,
                )?;
                let (model, _) = train_kmeans(engine, &ds, k, max_iters, tol, seed)?;
                FittedStage::KMeans { features, output, model }
            }
            Stage::NaiveBayes { features, label, output, smoothing } => {
                let points = current.labeled_points(&ps.id, &features, &label)?;
                let ds = parallelize_points(engine, points)?;
                let model = train_naive_bayes(engine, &ds, smoothing)?;
                FittedStage::NaiveBayes { features, output, model }
            }
        };
        current = f.transform(&current)?;
        fitted.push(f);
    }
    Ok(PipelineModel { stages: fitted })
}

// ---------------------------------------------------------------------------
// cross-validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evaluator {
    Rmse,
    Accuracy,
    Wsse,
}

impl Evaluator {
    fn lower_is_better(self) -> bool {
        !matches!(self, Evaluator::Accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct CrossValidatorConfig {
    pub stages: Vec<PipelineStage>,
    pub param_grid: Vec<ParamMap>,
    pub evaluator: Evaluator,
    pub num_folds: usize,
    pub seed: u64,
    /// column holding ground truth (rmse/accuracy)
    pub label_col: String,
    /// column the fitted pipeline writes (rmse/accuracy); cluster index for wsse
    pub prediction_col: String,
    /// feature column used by the wsse evaluator
    pub features_col: String,
}

pub struct CrossValidatorResult {
    pub best_index: usize,
    pub best_params: ParamMap,
    pub best_model: PipelineModel,
    /// one averaged held-out metric per grid cell
    pub metrics_per_cell: Vec<f64>,
}

fn hash_row(seed: u64, row: usize) -> u64 {
    let mut z = seed.wrapping_add((row as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Balanced (±1) seeded fold assignment: rows ordered by a seeded hash, then
/// dealt round-robin into folds.
pub fn fold_assignment(n: usize, num_folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&r| (hash_row(seed, r), r));
    let mut fold = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % num_folds;
    }
    fold
}

fn evaluate_metric(
    evaluator: Evaluator,
    config: &CrossValidatorConfig,
    model: &PipelineModel,
    transformed: &ColumnTable,
) -> Result<f64> {
    match evaluator {
        Evaluator::Rmse => {
            let labels = transformed
                .column(&config.label_col)
                .ok_or_else(|| Error::Schema(format!("missing label column '{}'", config.label_col)))?
                .as_float()?;
            let preds = transformed
                .column(&config.prediction_col)
                .ok_or_else(|| {
                    Error::Schema(format!("missing prediction column '{}'", config.prediction_col))
                })?
                .as_float()?;
            let mse: f64 = labels
                .iter()
                .zip(preds)
                .map(|(l, p)| (l - p) * (l - p))
                .sum::<f64>()
                / labels.len() as f64;
            Ok(mse.sqrt())
        }
        Evaluator::Accuracy => {
            let labels = transformed
                .column(&config.label_col)
                .ok_or_else(|| Error::Schema(format!("missing label column '{}'", config.label_col)))?
                .as_float()?;
            let preds = transformed
                .column(&config.prediction_col)
                .ok_or_else(|| {
                    Error::Schema(format!("missing prediction column '{}'", config.prediction_col))
                })?
                .as_float()?;
            let hits = labels.iter().zip(preds).filter(|(l, p)| l == p).count();
            Ok(hits as f64 / labels.len() as f64)
        }
        Evaluator::Wsse => {
            let kmeans = model
                .stages
                .iter()
                .rev()
                .find_map(|s| match s {
                    FittedStage::KMeans { model, .. } => Some(model),
                    _ => None,
                })
                .ok_or_else(|| Error::Schema("wsse evaluator needs a k-means stage".into()))?;
            let xs = transformed
                .column(&config.features_col)
                .ok_or_else(|| {
                    Error::Schema(format!("missing features column '{}'", config.features_col))
                })?
                .as_vector()?;
            let mut total = 0.0;
            for x in xs {
                let mut best = f64::INFINITY;
                for c in &kmeans.centers {
                    let mut d = 0.0;
                    for j in 0..c.len() {
                        let diff = x.get(j) - c.values[j];
                        d += diff * diff;
                    }
                    best = best.min(d);
                }
                total += best;
            }
            Ok(total)
        }
    }
}

/// Grid search: average held-out metric over folds per cell; best cell
/// (ties to the earliest) is refit on the full table.
pub fn cross_validate(
    engine: &Engine,
    config: &CrossValidatorConfig,
    table: &ColumnTable,
) -> Result<CrossValidatorResult> {
    if config.param_grid.is_empty() {
        return Err(Error::InvalidArgument("crossValidate: empty param grid".into()));
    }
    if config.num_folds < 2 {
        return Err(Error::InvalidArgument("crossValidate: numFolds must be >= 2".into()));
    }
    let n = table.num_rows();
    if n < config.num_folds {
        return Err(Error::InvalidArgument(format!(
            "crossValidate: {} rows < {} folds",
            n, config.num_folds
        )));
    }

    let folds = fold_assignment(n, config.num_folds, config.seed);
    let mut metrics_per_cell = Vec::with_capacity(config.param_grid.len());
    for params in &config.param_grid {
        let mut total = 0.0;
        for fold in 0..config.num_folds {
            let train_rows: Vec<usize> = (0..n).filter(|&r| folds[r] != fold).collect();
            let valid_rows: Vec<usize> = (0..n).filter(|&r| folds[r] == fold).collect();
            let train = table.select_rows(&train_rows);
            let valid = table.select_rows(&valid_rows);
            let model = fit_pipeline(engine, &config.stages, &train, params)?;
            let transformed = model.transform(&valid)?;
            total += evaluate_metric(config.evaluator, config, &model, &transformed)?;
        }
        metrics_per_cell.push(total / config.num_folds as f64);
    }

    let mut best_index = 0usize;
    for (i, &m) in metrics_per_cell.iter().enumerate().skip(1) {
        let better = if config.evaluator.lower_is_better() {
            m < metrics_per_cell[best_index]
        } else {
            m > metrics_per_cell[best_index]
        };
        if better {
            best_index = i;
        }
    }

    let best_params = config.param_grid[best_index].clone();
    let best_model = fit_pipeline(engine, &config.stages, table, &best_params)?;
    Ok(CrossValidatorResult { best_index, best_params, best_model, metrics_per_cell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine() -> Engine {
        Engine::with_defaults()
    }

    fn linear_table(n: usize, seed: u64, noise: f64) -> ColumnTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x1 = rng.gen_range(-1.0..1.0);
            let x2 = rng.gen_range(-1.0..1.0);
            ys.push(2.0 * x1 - x2 + noise * rng.gen_range(-1.0..1.0));
            xs.push(Vector::dense(vec![x1, x2]));
        }
        ColumnTable::new()
            .with_column("features", ColumnData::Vector(xs))
            .unwrap()
            .with_column("label", ColumnData::Float(ys))
            .unwrap()
    }

    #[test]
    fn empty_pipeline_is_identity() {
        let e = engine();
        let t = linear_table(10, 1, 0.0);
        let m = fit_pipeline(&e, &[], &t, &ParamMap::new()).unwrap();
        assert_eq!(m.transform(&t).unwrap(), t);
    }

    #[test]
    fn transform_does_not_mutate_input() {
        let e = engine();
        let t = linear_table(20, 2, 0.1);
        let before = t.clone();
        let stages = [PipelineStage::new(
            "scaler",
            Stage::StandardScaler { input: "features".into(), output: "scaled".into() },
        )];
        let m = fit_pipeline(&e, &stages, &t, &ParamMap::new()).unwrap();
        let _ = m.transform(&t).unwrap();
        assert_eq!(t, before);
    }

    #[test]
    fn scaler_then_glm_adds_prediction_column() {
        let e = engine();
        let t = linear_table(60, 3, 0.05);
        let stages = [
            PipelineStage::new(
                "scaler",
                Stage::StandardScaler { input: "features".into(), output: "scaled".into() },
            ),
            PipelineStage::new(
                "glm",
                Stage::Glm {
                    kind: GlmKind::Linear,
                    features: "scaled".into(),
                    label: "label".into(),
                    output: "prediction".into(),
                    config: GdConfig { num_iters: 50, step_size: 0.5, ..Default::default() },
                },
            ),
        ];
        let m = fit_pipeline(&e, &stages, &t, &ParamMap::new()).unwrap();
        let out = m.transform(&t).unwrap();
        let preds = out.column("prediction").unwrap().as_float().unwrap();
        assert_eq!(preds.len(), 60);
    }

    #[test]
    fn pipeline_equals_manual_chaining() {
        let e = engine();
        let t = linear_table(40, 4, 0.1);
        let stages = [
            PipelineStage::new(
                "scaler",
                Stage::StandardScaler { input: "features".into(), output: "scaled".into() },
            ),
            PipelineStage::new(
                "glm",
                Stage::Glm {
                    kind: GlmKind::Linear,
                    features: "scaled".into(),
                    label: "label".into(),
                    output: "prediction".into(),
                    config: GdConfig { num_iters: 20, ..Default::default() },
                },
            ),
        ];
        let m = fit_pipeline(&e, &stages, &t, &ParamMap::new()).unwrap();
        let chained = m.transform(&t).unwrap();
        let mut manual = t.clone();
        for s in &m.stages {
            manual = s.transform(&manual).unwrap();
        }
        assert_eq!(chained, manual);
    }

    #[test]
    fn prescaled_glm_equals_scaler_stage() {
        // pipeline [scaler, glm] must equal glm fit on the manually scaled
        // table (same engine settings, same seed)
        let e = engine();
        let t = linear_table(50, 5, 0.1);
        let scaler = PipelineStage::new(
            "scaler",
            Stage::StandardScaler { input: "features".into(), output: "scaled".into() },
        );
        let glm_stage = |features: &str| {
            PipelineStage::new(
                "glm",
                Stage::Glm {
                    kind: GlmKind::Linear,
                    features: features.into(),
                    label: "label".into(),
                    output: "prediction".into(),
                    config: GdConfig { num_iters: 30, ..Default::default() },
                },
            )
        };
        let piped = fit_pipeline(
            &e,
            &[scaler.clone(), glm_stage("scaled")],
            &t,
            &ParamMap::new(),
        )
        .unwrap();
        // manual two-step: fit scaler alone, transform, then fit glm on that
        let scaler_model = fit_pipeline(&e, &[scaler], &t, &ParamMap::new()).unwrap();
        let scaled = scaler_model.transform(&t).unwrap();
        let glm_model =
            fit_pipeline(&e, &[glm_stage("scaled")], &scaled, &ParamMap::new()).unwrap();
        let a = piped.transform(&t).unwrap();
        let b = glm_model.transform(&scaled).unwrap();
        let pa = a.column("prediction").unwrap().as_float().unwrap();
        let pb = b.column("prediction").unwrap().as_float().unwrap();
        for (x, y) in pa.iter().zip(pb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_column_names_stage() {
        let e = engine();
        let t = linear_table(10, 6, 0.0);
        let stages = [PipelineStage::new(
            "scaler",
            Stage::StandardScaler { input: "nope".into(), output: "scaled".into() },
        )];
        match fit_pipeline(&e, &stages, &t, &ParamMap::new()) {
            Err(Error::Schema(msg)) => {
                assert!(msg.contains("scaler") && msg.contains("nope"), "{}", msg);
            }
            other => panic!("expected schema error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn duplicate_output_column_rejected() {
        let e = engine();
        let t = linear_table(10, 7, 0.0);
        let stages = [PipelineStage::new(
            "scaler",
            Stage::StandardScaler { input: "features".into(), output: "label".into() },
        )];
        assert!(matches!(
            fit_pipeline(&e, &stages, &t, &ParamMap::new()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn param_override_and_type_mismatch() {
        let e = engine();
        let t = ColumnTable::new()
            .with_column("x", ColumnData::Float(vec![1.0, 3.0, 5.0]))
            .unwrap();
        let stages = [PipelineStage::new(
            "bin",
            Stage::Binarizer { input: "x".into(), output: "b".into(), threshold: 0.0 },
        )];
        let params = ParamMap::new().put("bin", "threshold", ParamValue::Float(4.0));
        let m = fit_pipeline(&e, &stages, &t, &params).unwrap();
        let out = m.transform(&t).unwrap();
        assert_eq!(out.column("b").unwrap().as_float().unwrap(), &[0.0, 0.0, 1.0]);
        // integer column where a float param is not the issue: unknown param
        let bad = ParamMap::new().put("bin", "bogus", ParamValue::Bool(true));
        assert!(matches!(fit_pipeline(&e, &stages, &t, &bad), Err(Error::Param(_))));
        // type mismatch on an int-typed param
        let glm = [PipelineStage::new(
            "g",
            Stage::Glm {
                kind: GlmKind::Linear,
                features: "x".into(),
                label: "x".into(),
                output: "p".into(),
                config: GdConfig::default(),
            },
        )];
        let bad_type = ParamMap::new().put("g", "numIters", ParamValue::Float(1.5));
        assert!(matches!(fit_pipeline(&e, &glm, &t, &bad_type), Err(Error::Param(_))));
    }

    #[test]
    fn vector_assembler_concatenates() {
        let t = ColumnTable::new()
            .with_column("a", ColumnData::Float(vec![1.0, 2.0]))
            .unwrap()
            .with_column("v", ColumnData::Vector(vec![
                Vector::dense(vec![3.0, 4.0]),
                Vector::dense(vec![5.0, 6.0]),
            ]))
            .unwrap();
        let stage = FittedStage::VectorAssembler {
            inputs: vec!["a".into(), "v".into()],
            output: "out".into(),
        };
        let out = stage.transform(&t).unwrap();
        let v = out.column("out").unwrap().as_vector().unwrap();
        assert_eq!(v[0].to_dense().values, vec![1.0, 3.0, 4.0]);
        assert_eq!(v[1].to_dense().values, vec![2.0, 5.0, 6.0]);
    }

    #[test]
    fn fold_assignment_is_balanced_partition() {
        for (n, k) in [(10usize, 3usize), (25, 5), (7, 7), (100, 4)] {
            let folds = fold_assignment(n, k, 42);
            assert_eq!(folds.len(), n);
            let mut counts = vec![0usize; k];
            for &f in &folds {
                counts[f] += 1;
            }
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "unbalanced: {:?}", counts);
            assert_eq!(counts.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn single_cell_grid_is_best() {
        let e = engine();
        let t = linear_table(30, 8, 0.1);
        let config = CrossValidatorConfig {
            stages: vec![PipelineStage::new(
                "glm",
                Stage::Glm {
                    kind: GlmKind::Linear,
                    features: "features".into(),
                    label: "label".into(),
                    output: "prediction".into(),
                    config: GdConfig { num_iters: 10, ..Default::default() },
                },
            )],
            param_grid: vec![ParamMap::new()],
            evaluator: Evaluator::Rmse,
            num_folds: 3,
            seed: 0,
            label_col: "label".into(),
            prediction_col: "prediction".into(),
            features_col: "features".into(),
        };
        let r = cross_validate(&e, &config, &t).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.metrics_per_cell.len(), 1);
    }

    #[test]
    fn cv_selects_unregularized_cell_on_linear_data() {
        let e = engine();
        let t = linear_table(80, 9, 0.05);
        let grid = vec![
            ParamMap::new().put("glm", "regParam", ParamValue::Float(0.0)),
            ParamMap::new().put("glm", "regParam", ParamValue::Float(1e3)),
        ];
        let config = CrossValidatorConfig {
            stages: vec![PipelineStage::new(
                "glm",
                Stage::Glm {
                    kind: GlmKind::Linear,
                    features: "features".into(),
                    label: "label".into(),
                    output: "prediction".into(),
                    config: GdConfig { num_iters: 40, step_size: 0.5, ..Default::default() },
                },
            )],
            param_grid: grid,
            evaluator: Evaluator::Rmse,
            num_folds: 3,
            seed: 1,
            label_col: "label".into(),
            prediction_col: "prediction".into(),
            features_col: "features".into(),
        };
        let r = cross_validate(&e, &config, &t).unwrap();
        assert_eq!(r.best_index, 0, "metrics {:?}", r.metrics_per_cell);
        assert!(r.metrics_per_cell[0] < r.metrics_per_cell[1]);
    }

    #[test]
    fn cv_errors() {
        let e = engine();
        let t = linear_table(3, 10, 0.0);
        let base = CrossValidatorConfig {
            stages: vec![],
            param_grid: vec![ParamMap::new()],
            evaluator: Evaluator::Rmse,
            num_folds: 4,
            seed: 0,
            label_col: "label".into(),
            prediction_col: "prediction".into(),
            features_col: "features".into(),
        };
        // n < numFolds
        assert!(matches!(cross_validate(&e, &base, &t), Err(Error::InvalidArgument(_))));
        // empty grid
        let cfg = CrossValidatorConfig { param_grid: vec![], num_folds: 2, ..base };
        assert!(matches!(cross_validate(&e, &cfg, &t), Err(Error::InvalidArgument(_))));
    }
}
