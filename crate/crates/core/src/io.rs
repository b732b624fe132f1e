//! LIBSVM read/write, ratings CSV, versioned model export/import, and the
//! synthetic data generators used by the CLI benchmarks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{DenseVector, LabeledPoint, Rating, Vector};

// ---------------------------------------------------------------------------
// LIBSVM

/// Parse a LIBSVM file: `label idx:val ...` with 1-based ascending indices.
/// Comment (`#`) and blank lines are skipped. Returns the points (with
/// 0-based sparse indices) and the inferred dimension (max index seen).
pub fn read_libsvm(path: impl AsRef<Path>) -> Result<(Vec<LabeledPoint>, usize)> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut raw: Vec<(f64, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad label".into() })?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in parts {
            if tok.starts_with('#') {
                break;
            }
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got '{}'", tok),
            })?;
            let idx: usize = i.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric index '{}'", i),
            })?;
            if idx == 0 {
                return Err(Error::Parse { line: lineno, msg: "LIBSVM indices are 1-based".into() });
            }
            let val: f64 = v.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric value '{}'", v),
            })?;
            if let Some(&last) = indices.last() {
                if idx - 1 <= last {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("indices not ascending at {}", idx),
                    });
                }
            }
            indices.push(idx - 1); // 1-based file -> 0-based memory
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            max_index = max_index.max(last + 1);
        }
        raw.push((label, indices, values));
    }

    if raw.is_empty() {
        return Err(Error::EmptyInput("libsvm file has no data lines".into()));
    }
    let dim = max_index;
    let points = raw
        .into_iter()
        .map(|(label, indices, values)| {
            Ok(LabeledPoint::new(label, Vector::sparse(dim, indices, values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((points, dim))
}

/// Write points in LIBSVM format (1-based indices, zeros omitted).
pub fn write_libsvm(path: impl AsRef<Path>, points: &[LabeledPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in points {
        write!(w, "{}", fmt_float(p.label))?;
        for (i, v) in p.features.iter_nonzero() {
            if v != 0.0 {
                write!(w, " {}:{}", i + 1, fmt_float(v))?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips exactly through parsing.
fn fmt_float(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // Rust's Display for f64 is shortest round-trip
    format!("{}", v)
}

// ---------------------------------------------------------------------------
// Ratings CSV

/// Read `user,item,value` lines; `#` comments and blank lines skipped.
pub fn read_ratings_csv(path: impl AsRef<Path>) -> Result<Vec<Rating>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split(',');
        let parse_err = |what: &str| Error::Parse { line: lineno, msg: format!("bad {}", what) };
        let user: u32 = f.next().ok_or_else(|| parse_err("user"))?.trim().parse().map_err(|_| parse_err("user"))?;
        let item: u32 = f.next().ok_or_else(|| parse_err("item"))?.trim().parse().map_err(|_| parse_err("item"))?;
        let value: f64 = f.next().ok_or_else(|| parse_err("value"))?.trim().parse().map_err(|_| parse_err("value"))?;
        out.push(Rating::new(user, item, value));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("ratings file has no data lines".into()));
    }
    Ok(out)
}

pub fn write_ratings_csv(path: impl AsRef<Path>, ratings: &[Rating]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in ratings {
        writeln!(w, "{},{},{}", r.user, r.item, fmt_float(r.value))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic generators

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
pub struct LinearGenParams {
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
}

fn check_nd(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("n={} d={} must be positive", n, d)));
    }
    Ok(())
}

/// y = w^T x + eps with x ~ U(-1,1)^d and seeded w. Returns the true weights
/// alongside the points.
pub fn gen_linear(p: &LinearGenParams) -> Result<(Vec<LabeledPoint>, DenseVector)> {
    check_nd(p.n, p.d)?;
    if p.noise < 0.0 {
        return Err(Error::InvalidArgument("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let w: Vec<f64> = (0..p.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = Vec::with_capacity(p.n);
    for _ in 0..p.n {
        let x: Vec<f64> = (0..p.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            + if p.noise > 0.0 { p.noise * normal.sample(&mut rng) } else { 0.0 };
        points.push(LabeledPoint::new(y, Vector::dense(x)));
    }
    Ok((points, DenseVector::new(w)))
}

#[derive(Debug, Clone)]
pub struct LogisticGenParams {
    pub n: usize,
    pub d: usize,
    /// weight magnitude; larger means more separable
    pub scale: f64,
    pub seed: u64,
}

/// Labels drawn Bernoulli(sigmoid(w^T x)).
pub fn gen_logistic(p: &LogisticGenParams) -> Result<(Vec<LabeledPoint>, DenseVector)> {
    check_nd(p.n, p.d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let w: Vec<f64> = (0..p.d).map(|_| p.scale * rng.gen_range(-1.0..1.0)).collect();
    let mut points = Vec::with_capacity(p.n);
    for _ in 0..p.n {
        let x: Vec<f64> = (0..p.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let y = if rng.gen_bool(sigmoid(z)) { 1.0 } else { 0.0 };
        points.push(LabeledPoint::new(y, Vector::dense(x)));
    }
    Ok((points, DenseVector::new(w)))
}

#[derive(Debug, Clone)]
pub struct BlobsGenParams {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// center coordinates drawn from U(-separation, separation)
    pub separation: f64,
    /// per-coordinate standard deviation around the center
    pub spread: f64,
    pub seed: u64,
}

/// k Gaussian clusters; points labeled with their cluster index. Returns the
/// true centers.
pub fn gen_blobs(p: &BlobsGenParams) -> Result<(Vec<LabeledPoint>, Vec<DenseVector>)> {
    check_nd(p.n, p.d)?;
    if p.k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let centers: Vec<DenseVector> = (0..p.k)
        .map(|_| {
            DenseVector::new((0..p.d).map(|_| rng.gen_range(-p.separation..p.separation)).collect())
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let c = i % p.k;
        let x: Vec<f64> = centers[c]
            .values
            .iter()
            .map(|&m| m + p.spread * normal.sample(&mut rng))
            .collect();
        points.push(LabeledPoint::new(c as f64, Vector::dense(x)));
    }
    Ok((points, centers))
}

#[derive(Debug, Clone)]
pub struct RatingsGenParams {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    /// probability that a (user, item) pair is observed
    pub density: f64,
    pub noise: f64,
    /// replicate the user set this many times with fresh ids and identical
    /// item columns (benchmark scaling mode); 1 = no duplication
    pub scale: usize,
    pub seed: u64,
}

/// Low-rank U V^T sampled at the given density, plus the true factors.
pub fn gen_als_ratings(
    p: &RatingsGenParams,
) -> Result<(Vec<Rating>, Vec<DenseVector>, Vec<DenseVector>)> {
    if p.users == 0 || p.items == 0 || p.rank == 0 || p.scale == 0 {
        return Err(Error::InvalidArgument("users, items, rank, scale must be positive".into()));
    }
    if !(0.0..=1.0).contains(&p.density) || p.noise < 0.0 {
        return Err(Error::InvalidArgument("density in [0,1], noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let gen_factor = |rng: &mut ChaCha8Rng, rank: usize| {
        DenseVector::new((0..rank).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let u: Vec<DenseVector> = (0..p.users).map(|_| gen_factor(&mut rng, p.rank)).collect();
    let v: Vec<DenseVector> = (0..p.items).map(|_| gen_factor(&mut rng, p.rank)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut ratings = Vec::new();
    for copy in 0..p.scale {
        let offset = (copy * p.users) as u32;
        for (ui, uf) in u.iter().enumerate() {
            for (ii, vf) in v.iter().enumerate() {
                if rng.gen_bool(p.density) {
                    let base = uf.dot(vf).expect("rank match");
                    let value = base
                        + if p.noise > 0.0 { p.noise * normal.sample(&mut rng) } else { 0.0 };
                    ratings.push(Rating::new(offset + ui as u32, ii as u32, value));
                }
            }
        }
    }
    if ratings.is_empty() {
        return Err(Error::EmptyInput("density too low: no ratings generated".into()));
    }
    Ok((ratings, u, v))
}

// ---------------------------------------------------------------------------
// Model export/import

pub const MODEL_FORMAT_VERSION: &str = "1.0";

/// Versioned JSON envelope for every persistable model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    #[serde(rename = "formatVersion")]
    pub format_version: String,
    #[serde(rename = "modelType")]
    pub model_type: String,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub payload: serde_json::Value,
}

/// Every trained model this crate can persist.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Glm(crate::glm::GlmModel),
    NaiveBayes(crate::bayes::NaiveBayesModel),
    KMeans(crate::cluster::KMeansModel),
    Pca(crate::pca::PcaModel),
    Als(crate::als::AlsModel),
    Tree(crate::tree::TreeModel),
    Forest(crate::tree::ForestModel),
    Pipeline(crate::pipeline::PipelineModel),
}

impl Model {
    pub fn model_type(&self) -> &'static str {
        match self {
            Model::Glm(m) => match m.kind {
                crate::glm::GlmKind::Linear => "linear",
                crate::glm::GlmKind::Logistic => "logistic",
            },
            Model::NaiveBayes(_) => "naive-bayes",
            Model::KMeans(_) => "kmeans",
            Model::Pca(_) => "pca",
            Model::Als(_) => "als",
            Model::Tree(_) => "tree",
            Model::Forest(_) => "forest",
            Model::Pipeline(_) => "pipeline",
        }
    }

    pub fn to_artifact(&self) -> Result<ModelArtifact> {
        let payload = match self {
            Model::Glm(m) => serde_json::to_value(m)?,
            Model::NaiveBayes(m) => serde_json::to_value(m)?,
            Model::KMeans(m) => serde_json::to_value(m)?,
            Model::Pca(m) => serde_json::to_value(m)?,
            Model::Als(m) => serde_json::to_value(m)?,
            Model::Tree(m) => serde_json::to_value(m)?,
            Model::Forest(m) => serde_json::to_value(m)?,
            Model::Pipeline(m) => serde_json::to_value(m)?,
        };
        Ok(ModelArtifact {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            model_type: self.model_type().to_string(),
            params: serde_json::Map::new(),
            payload,
        })
    }

    pub fn from_artifact(artifact: &ModelArtifact) -> Result<Model> {
        if artifact.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(artifact.format_version.clone()));
        }
        let payload = artifact.payload.clone();
        let model = match artifact.model_type.as_str() {
            "linear" | "logistic" => Model::Glm(serde_json::from_value(payload)?),
            "naive-bayes" => Model::NaiveBayes(serde_json::from_value(payload)?),
            "kmeans" => Model::KMeans(serde_json::from_value(payload)?),
            "pca" => Model::Pca(serde_json::from_value(payload)?),
            "als" => Model::Als(serde_json::from_value(payload)?),
            "tree" => Model::Tree(serde_json::from_value(payload)?),
            "forest" => Model::Forest(serde_json::from_value(payload)?),
            "pipeline" => Model::Pipeline(serde_json::from_value(payload)?),
            other => {
                return Err(Error::Schema(format!("unknown modelType '{}'", other)));
            }
        };
        Ok(model)
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let artifact = model.to_artifact()?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &artifact)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let file = File::open(path)?;
    let artifact: ModelArtifact = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Schema(format!("model artifact: {}", e)))?;
    Model::from_artifact(&artifact)
}
