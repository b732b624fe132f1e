//! Generalized linear models (squared-loss linear regression, binary
//! logistic regression) trained by mini-batch gradient descent. The model is
//! broadcast each iteration; per-partition gradients are combined with
//! tree-structured aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{DistributedDataset, Engine, PayloadSize};
use crate::error::{Error, Result};
use crate::{DenseVector, LabeledPoint, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlmKind {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub kind: GlmKind,
    pub weights: DenseVector,
    pub intercept: f64,
}

impl GlmModel {
    /// Linear: w^T x + b. Logistic: sigma(w^T x + b), a probability.
    pub fn predict(&self, x: &Vector) -> Result<f64> {
        if x.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "predict: model dim {} vs input dim {}",
                self.weights.len(),
                x.dim()
            )));
        }
        let z = dot_vec(&self.weights, x) + self.intercept;
        Ok(match self.kind {
            GlmKind::Linear => z,
            GlmKind::Logistic => sigmoid(z),
        })
    }

    /// Logistic classification at threshold 0.5.
    pub fn classify(&self, x: &Vector) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(match self.kind {
            GlmKind::Linear => p,
            GlmKind::Logistic => {
                if p >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct GdConfig {
    pub step_size: f64,
    pub num_iters: usize,
    pub mini_batch_fraction: f64,
    pub reg_param: f64,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            step_size: 1.0,
            num_iters: 100,
            mini_batch_fraction: 1.0,
            reg_param: 0.0,
            convergence_tol: 0.0,
            seed: 0,
        }
    }
}

impl GdConfig {
    fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0
            || self.num_iters < 1
            || !(self.mini_batch_fraction > 0.0 && self.mini_batch_fraction <= 1.0)
            || self.reg_param < 0.0
            || self.convergence_tol < 0.0
        {
            return Err(Error::InvalidArgument(format!("bad gradient-descent config: {:?}", self)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Average sampled loss per executed iteration, pre-update.
    pub losses: Vec<f64>,
    /// Iterations whose sample came up empty (no update applied).
    pub skipped: Vec<usize>,
    pub iterations_run: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot_vec(w: &DenseVector, x: &Vector) -> f64 {
    let mut acc = 0.0;
    for (i, v) in x.iter_nonzero() {
        acc += w.values[i] * v;
    }
    acc
}

/// log(1 + exp(z)), guarded against overflow for large |z|.
fn log1p_exp(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-example loss and gradient over (weights, intercept).
///
/// Linear: loss (w^T x + b - y)^2 / 2. Logistic (labels in {0,1}):
/// loss log(1+exp(z)) - y z with z = w^T x + b.
pub fn loss_gradient(
    kind: GlmKind,
    weights: &DenseVector,
    intercept: f64,
    example: &LabeledPoint,
) -> Result<(DenseVector, f64, f64)> {
    if example.features.dim() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "lossGradient: weights dim {} vs features dim {}",
            weights.len(),
            example.features.dim()
        )));
    }
    let z = dot_vec(weights, &example.features) + intercept;
    let y = example.label;
    let (coef, loss) = match kind {
        GlmKind::Linear => {
            let err = z - y;
            (err, err * err / 2.0)
        }
        GlmKind::Logistic => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "logistic label must be 0 or 1, got {}",
                    y
                )));
            }
            (sigmoid(z) - y, log1p_exp(z) - y * z)
        }
    };
    let mut grad = DenseVector::zeros(weights.len());
    grad.axpy_vec(coef, &example.features)?;
    Ok((grad, coef, loss))
}

#[derive(Debug, Clone)]
struct GradAcc {
    grad: DenseVector,
    grad_b: f64,
    loss: f64,
    count: u64,
}

impl GradAcc {
    fn zero(d: usize) -> Self {
        GradAcc { grad: DenseVector::zeros(d), grad_b: 0.0, loss: 0.0, count: 0 }
    }

    fn merge(mut self, other: &GradAcc) -> Self {
        self.grad.axpy(1.0, &other.grad).expect("same dim");
        self.grad_b += other.grad_b;
        self.loss += other.loss;
        self.count += other.count;
        self
    }
}

impl PayloadSize for GradAcc {
    fn payload_bytes(&self) -> u64 {
        8 * self.grad.len() as u64 + 24
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined stream id
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mini-batch gradient descent with step schedule step_size / sqrt(t) and L2
/// regularization that excludes the intercept. Logistic labels in {-1,1} are
/// mapped to {0,1} on ingest.
pub fn train_glm(
    engine: &Engine,
    ds: &DistributedDataset<LabeledPoint>,
    kind: GlmKind,
    config: &GdConfig,
) -> Result<(GlmModel, TrainHistory)> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("trainGLM on empty dataset".into()));
    }
    let d = ds.iter().next().unwrap().features.dim();
    for p in ds.iter() {
        if p.features.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "trainGLM: mixed feature dimensions {} and {}",
                d,
                p.features.dim()
            )));
        }
    }

    let ds = if kind == GlmKind::Logistic {
        let has_negative = ds.iter().any(|p| p.label == -1.0);
        let mapped = if has_negative {
            engine.map_partitions(ds, |_, part| {
                part.iter()
                    .map(|p| {
                        let label = if p.label == -1.0 { 0.0 } else { p.label };
                        LabeledPoint::new(label, p.features.clone())
                    })
                    .collect()
            })
        } else {
            ds.clone()
        };
        for p in mapped.iter() {
            if p.label != 0.0 && p.label != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "logistic label must be in {{0,1}} (or {{-1,1}}), got {}",
                    p.label
                )));
            }
        }
        mapped
    } else {
        ds.clone()
    };

    let num_partitions = ds.num_partitions();
    let depth = engine.config().default_depth;
    let f = config.mini_batch_fraction;
    let mut weights = DenseVector::zeros(d);
    let mut intercept = 0.0f64;
    let mut history = TrainHistory::default();

    for t in 1..=config.num_iters {
        let bc = engine.broadcast((weights.clone(), intercept), num_partitions);
        let partials = engine.map_partitions(&ds, |pi, part| {
            let (w, b) = bc.value();
            let mut rng = mix_and_seed(config.seed, t as u64, pi as u64);
            let mut acc = GradAcc::zero(d);
            for ex in part {
                let take = if f >= 1.0 { true } else { rng.gen_bool(f) };
                if take {
                    let (g, gb, loss) =
                        loss_gradient(kind, w, *b, ex).expect("dims and labels validated");
                    acc.grad.axpy(1.0, &g).expect("same dim");
                    acc.grad_b += gb;
                    acc.loss += loss;
                    acc.count += 1;
                }
            }
            vec![acc]
        });
        let total = engine.tree_aggregate(
            &partials,
            GradAcc::zero(d),
            |a, x| a.merge(x),
            |a, b| a.merge(&b),
            depth,
        )?;

        if total.count == 0 {
            history.skipped.push(t);
            history.iterations_run = t;
            continue;
        }

        let m = total.count as f64;
        history.losses.push(total.loss / m);
        let step = config.step_size / (t as f64).sqrt();
        let old = weights.clone();
        let old_b = intercept;
        for j in 0..d {
            let g = total.grad.values[j] / m + config.reg_param * weights.values[j];
            weights.values[j] -= step * g;
        }
        intercept -= step * (total.grad_b / m);
        history.iterations_run = t;

        if config.convergence_tol > 0.0 {
            let mut diff = (intercept - old_b).powi(2);
            let mut norm = old_b * old_b;
            for j in 0..d {
                diff += (weights.values[j] - old.values[j]).powi(2);
                norm += old.values[j] * old.values[j];
            }
            if diff.sqrt() < config.convergence_tol * norm.sqrt().max(1.0) {
                break;
            }
        }
    }

    Ok((GlmModel { kind, weights, intercept }, history))
}

fn mix_and_seed(seed: u64, t: u64, pi: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, t, pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;

    fn engine() -> Engine {
        Engine::with_defaults()
    }

    fn engine_with(partial: impl FnOnce(&mut EngineConfig)) -> Engine {
        let mut cfg = EngineConfig::default();
        partial(&mut cfg);
        Engine::new(cfg).unwrap()
    }

    #[test]
    fn linear_gradient_at_zero() {
        let w = DenseVector::zeros(1);
        let ex = LabeledPoint::new(2.0, Vector::dense(vec![1.0]));
        let (g, gb, loss) = loss_gradient(GlmKind::Linear, &w, 0.0, &ex).unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(g.values, vec![-2.0]);
        assert_eq!(gb, -2.0);
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let w = DenseVector::zeros(2);
        let ex = LabeledPoint::new(0.0, Vector::dense(vec![3.0, -1.0]));
        let (g, gb, loss) = loss_gradient(GlmKind::Logistic, &w, 0.0, &ex).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-15);
        assert!((g.values[0] - 1.5).abs() < 1e-15);
        assert!((g.values[1] + 0.5).abs() < 1e-15);
        assert!((gb - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_rejects_bad_label() {
        let w = DenseVector::zeros(1);
        let ex = LabeledPoint::new(0.5, Vector::dense(vec![1.0]));
        assert!(loss_gradient(GlmKind::Logistic, &w, 0.0, &ex).is_err());
    }

    /// Central finite differences as the independent gradient oracle.
    fn finite_difference_check(kind: GlmKind, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        for _ in 0..100 {
            let w = DenseVector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let b: f64 = rng.gen_range(-2.0..2.0);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = match kind {
                GlmKind::Linear => rng.gen_range(-2.0..2.0),
                GlmKind::Logistic => {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            let ex = LabeledPoint::new(y, Vector::dense(x));
            let (g, gb, _) = loss_gradient(kind, &w, b, &ex).unwrap();
            let h = 1e-6;
            let loss_at = |w: &DenseVector, b: f64| {
                loss_gradient(kind, w, b, &ex).unwrap().2
            };
            for j in 0..d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp.values[j] += h;
                wm.values[j] -= h;
                let fd = (loss_at(&wp, b) - loss_at(&wm, b)) / (2.0 * h);
                let scale = fd.abs().max(g.values[j].abs()).max(1e-3);
                assert!(
                    (fd - g.values[j]).abs() <= 1e-5 * scale,
                    "{:?} dim {}: fd {} vs grad {}",
                    kind,
                    j,
                    fd,
                    g.values[j]
                );
            }
            let fdb = (loss_at(&w, b + h) - loss_at(&w, b - h)) / (2.0 * h);
            let scale = fdb.abs().max(gb.abs()).max(1e-3);
            assert!((fdb - gb).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        finite_difference_check(GlmKind::Linear, 101);
    }

    #[test]
    fn gradient_matches_finite_differences_logistic() {
        finite_difference_check(GlmKind::Logistic, 202);
    }

    #[test]
    fn recovers_noise_free_linear() {
        // y = 3 x1, closed-form least squares is exactly w = [3]
        let e = engine();
        let points: Vec<LabeledPoint> = (0..50)
            .map(|i| {
                let x = (i as f64 - 25.0) / 25.0;
                LabeledPoint::new(3.0 * x, Vector::dense(vec![x]))
            })
            .collect();
        let ds = e.parallelize(points, 4, 0).unwrap();
        let cfg = GdConfig { step_size: 1.0, num_iters: 500, ..Default::default() };
        let (model, _) = train_glm(&e, &ds, GlmKind::Linear, &cfg).unwrap();
        assert!((model.weights.values[0] - 3.0).abs() < 1e-2, "{:?}", model.weights);
    }

    #[test]
    fn huge_regularization_kills_weights() {
        let e = engine();
        let (points, _) =
            crate::io::gen_linear(&crate::io::LinearGenParams { n: 100, d: 3, noise: 0.1, seed: 4 })
                .unwrap();
        let ds = e.parallelize(points, 4, 0).unwrap();
        let cfg = GdConfig { reg_param: 1e9, num_iters: 50, step_size: 1e-9, ..Default::default() };
        let (model, _) = train_glm(&e, &ds, GlmKind::Linear, &cfg).unwrap();
        assert!(model.weights.norm2() < 1e-3);
    }

    #[test]
    fn separable_logistic_high_accuracy() {
        use rand::{Rng, SeedableRng};
        let e = engine();
        // deterministic labels with a margin: linearly separable by design
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut points = Vec::new();
        while points.len() < 1000 {
            let x1: f64 = rng.gen_range(-1.0..1.0);
            let x2: f64 = rng.gen_range(-1.0..1.0);
            let z = 2.0 * x1 - x2 + 0.3;
            if z.abs() < 0.1 {
                continue;
            }
            points.push(LabeledPoint::new(
                if z > 0.0 { 1.0 } else { 0.0 },
                Vector::dense(vec![x1, x2]),
            ));
        }
        let ds = e.parallelize(points.clone(), 4, 0).unwrap();
        let cfg = GdConfig { step_size: 4.0, num_iters: 100, ..Default::default() };
        let (model, _) = train_glm(&e, &ds, GlmKind::Logistic, &cfg).unwrap();
        let correct = points
            .iter()
            .filter(|p| model.classify(&p.features).unwrap() == p.label)
            .count();
        assert!(correct as f64 / points.len() as f64 >= 0.99, "accuracy {}", correct);
    }

    #[test]
    fn full_batch_invariant_across_partitions_and_depths() {
        let (points, _) =
            crate::io::gen_linear(&crate::io::LinearGenParams { n: 200, d: 3, noise: 0.2, seed: 8 })
                .unwrap();
        let cfg = GdConfig { num_iters: 20, step_size: 0.5, ..Default::default() };
        let mut reference: Option<GlmModel> = None;
        for p in [1usize, 4, 16] {
            for depth in [1usize, 2, 3] {
                let e = engine_with(|c| c.default_depth = depth);
                let ds = e.parallelize(points.clone(), p, 0).unwrap();
                let (model, _) = train_glm(&e, &ds, GlmKind::Linear, &cfg).unwrap();
                match &reference {
                    None => reference = Some(model),
                    Some(r) => {
                        for j in 0..3 {
                            assert!(
                                (model.weights.values[j] - r.weights.values[j]).abs() < 1e-9,
                                "P={} depth={}",
                                p,
                                depth
                            );
                        }
                        assert!((model.intercept - r.intercept).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn full_batch_loss_non_increasing() {
        let e = engine();
        let (points, _) =
            crate::io::gen_linear(&crate::io::LinearGenParams { n: 300, d: 4, noise: 0.0, seed: 15 })
                .unwrap();
        // L for squared loss is bounded by max eigenvalue of the Gram/n;
        // features are in [-1,1]^4 so a small fixed step is safely below 1/L.
        let ds = e.parallelize(points, 4, 0).unwrap();
        let cfg = GdConfig { step_size: 0.2, num_iters: 50, ..Default::default() };
        let (_, history) = train_glm(&e, &ds, GlmKind::Linear, &cfg).unwrap();
        for w in history.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn maps_negative_one_labels() {
        let e = engine();
        let points = vec![
            LabeledPoint::new(-1.0, Vector::dense(vec![-1.0])),
            LabeledPoint::new(1.0, Vector::dense(vec![1.0])),
        ];
        let ds = e.parallelize(points, 1, 0).unwrap();
        let cfg = GdConfig { num_iters: 30, ..Default::default() };
        let (model, _) = train_glm(&e, &ds, GlmKind::Logistic, &cfg).unwrap();
        assert!(model.weights.values[0] > 0.0);
    }

    #[test]
    fn empty_dataset_errors() {
        let e = engine();
        let ds = e.parallelize(Vec::<LabeledPoint>::new(), 2, 0).unwrap();
        assert!(matches!(
            train_glm(&e, &ds, GlmKind::Linear, &GdConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn predict_contracts() {
        let m = GlmModel {
            kind: GlmKind::Logistic,
            weights: DenseVector::zeros(3),
            intercept: 0.0,
        };
        assert_eq!(m.predict(&Vector::dense(vec![5.0, -2.0, 0.1])).unwrap(), 0.5);
        let m = GlmModel {
            kind: GlmKind::Linear,
            weights: DenseVector::new(vec![2.0]),
            intercept: 1.0,
        };
        assert_eq!(m.predict(&Vector::dense(vec![3.0])).unwrap(), 7.0);
        assert!(m.predict(&Vector::dense(vec![1.0, 2.0])).is_err());
    }
}
