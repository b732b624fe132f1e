//! deskml command-line harness: generate synthetic data, train and evaluate
//! models, and run the ALS scaling benchmark. Reports go to stdout as JSON
//! (or CSV for the benchmark); logs go to stderr. Exit codes: 0 success,
//! 1 runtime error, 2 usage error.

use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use deskml::als::{train_als, AlsConfig};
use deskml::bayes::train_naive_bayes;
use deskml::cluster::train_kmeans;
use deskml::engine::{Engine, EngineConfig};
use deskml::error::{Error, Result};
use deskml::glm::{train_glm, GdConfig, GlmKind};
use deskml::io::{
    gen_als_ratings, gen_blobs, gen_linear, gen_logistic, load_model, read_libsvm,
    read_ratings_csv, save_model, write_libsvm, write_ratings_csv, BlobsGenParams,
    LinearGenParams, LogisticGenParams, Model, RatingsGenParams,
};
use deskml::pca::fit_pca;
use deskml::tree::{find_split_bins, train_forest, train_tree, ForestConfig, Impurity};
use deskml::{LabeledPoint, Vector};

#[derive(Parser)]
#[command(name = "deskml", version, about = "desk-scale distributed ML harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Train a model and write it to disk; report JSON to stdout
    Train(TrainArgs),
    /// Evaluate a saved model against a dataset; report JSON to stdout
    Evaluate(EvalArgs),
    /// ALS scaling benchmark; CSV (scale,wallMs,ledgerBytes) to stdout
    BenchAls(BenchAlsArgs),
}

#[derive(Subcommand)]
enum GenKind {
    /// y = w^T x + noise, LIBSVM output
    Linear {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// Bernoulli(sigmoid(w^T x)) labels, LIBSVM output
    Logistic {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 10.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// k Gaussian clusters labeled by cluster index, LIBSVM output
    Blobs {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// Low-rank ratings sampled at a density, CSV output
    Als {
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 80)]
        items: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Linear,
    Logistic,
    NaiveBayes,
    Kmeans,
    Pca,
    Tree,
    Forest,
    Als,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ImpurityArg {
    Gini,
    Entropy,
    Variance,
}

impl From<ImpurityArg> for Impurity {
    fn from(v: ImpurityArg) -> Impurity {
        match v {
            ImpurityArg::Gini => Impurity::Gini,
            ImpurityArg::Entropy => Impurity::Entropy,
            ImpurityArg::Variance => Impurity::Variance,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(value_enum)]
    algo: Algo,
    /// input dataset: LIBSVM, or ratings CSV for als
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    model_out: String,
    #[arg(long, default_value_t = 4)]
    partitions: usize,
    #[arg(long, default_value_t = 2)]
    agg_depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    // glm
    #[arg(long, default_value_t = 1.0)]
    step_size: f64,
    #[arg(long, default_value_t = 100)]
    num_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    reg_param: f64,
    #[arg(long, default_value_t = 1.0)]
    mini_batch_fraction: f64,
    // naive bayes
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    // kmeans / pca
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    // trees
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    #[arg(long, default_value_t = 32)]
    max_bins: usize,
    #[arg(long, value_enum, default_value_t = ImpurityArg::Gini)]
    impurity: ImpurityArg,
    #[arg(long, default_value_t = 10)]
    num_trees: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_subset_fraction: f64,
    // als
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, default_value_t = false)]
    implicit: bool,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    user_blocks: usize,
    #[arg(long, default_value_t = 1)]
    item_blocks: usize,
    #[arg(long, default_value_t = false)]
    naive_routing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: String,
    #[arg(long = "in")]
    input: String,
    #[arg(long, default_value_t = 4)]
    partitions: usize,
    #[arg(long, default_value_t = 2)]
    agg_depth: usize,
}

#[derive(Args)]
struct BenchAlsArgs {
    /// comma-separated positive integers
    #[arg(long, default_value = "1,2,4", value_delimiter = ',')]
    scales: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 80)]
    items: usize,
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    #[arg(long, default_value_t = 0.1)]
    reg_param: f64,
    #[arg(long, default_value_t = 4)]
    user_blocks: usize,
    #[arg(long, default_value_t = 4)]
    item_blocks: usize,
    #[arg(long, default_value_t = false)]
    naive_routing: bool,
}

fn make_engine(partitions: usize, depth: usize) -> Result<Engine> {
    Engine::new(EngineConfig {
        workers: None,
        default_depth: depth,
        default_partitions: partitions,
    })
}

fn report(command: &str, config: serde_json::Value, wall_ms: u128, metrics: serde_json::Value, engine: &Engine) {
    let out = json!({
        "command": command,
        "config": config,
        "wallMs": wall_ms as u64,
        "metrics": metrics,
        "ledger": engine.ledger().snapshot(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, b) in pairs {
        sum += (a - b) * (a - b);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn accuracy(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut hits = 0usize;
    let mut n = 0usize;
    for (a, b) in pairs {
        if a == b {
            hits += 1;
        }
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

fn cmd_gen(kind: GenKind) -> Result<()> {
    match kind {
        GenKind::Linear { n, d, noise, seed, out } => {
            let (points, _) = gen_linear(&LinearGenParams { n, d, noise, seed })?;
            write_libsvm(&out, &points)?;
            eprintln!("wrote {} examples to {}", points.len(), out);
        }
        GenKind::Logistic { n, d, scale, seed, out } => {
            let (points, _) = gen_logistic(&LogisticGenParams { n, d, scale, seed })?;
            write_libsvm(&out, &points)?;
            eprintln!("wrote {} examples to {}", points.len(), out);
        }
        GenKind::Blobs { n, d, k, separation, spread, seed, out } => {
            let (points, _) = gen_blobs(&BlobsGenParams { n, d, k, separation, spread, seed })?;
            write_libsvm(&out, &points)?;
            eprintln!("wrote {} examples to {}", points.len(), out);
        }
        GenKind::Als { users, items, rank, density, noise, scale, seed, out } => {
            let (ratings, _, _) = gen_als_ratings(&RatingsGenParams {
                users,
                items,
                rank,
                density,
                noise,
                scale,
                seed,
            })?;
            write_ratings_csv(&out, &ratings)?;
            eprintln!("wrote {} ratings to {}", ratings.len(), out);
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let engine = make_engine(a.partitions, a.agg_depth)?;
    let start = Instant::now();
    let config = json!({
        "algo": format!("{:?}", a.algo),
        "in": a.input,
        "modelOut": a.model_out,
        "partitions": a.partitions,
        "aggDepth": a.agg_depth,
        "seed": a.seed,
    });

    let (model, metrics) = match a.algo {
        Algo::Linear | Algo::Logistic => {
            let (points, _) = read_libsvm(&a.input)?;
            let ds = engine.parallelize(points.clone(), a.partitions, a.seed)?;
            let kind = if a.algo == Algo::Linear { GlmKind::Linear } else { GlmKind::Logistic };
            let cfg = GdConfig {
                step_size: a.step_size,
                num_iters: a.num_iters,
                mini_batch_fraction: a.mini_batch_fraction,
                reg_param: a.reg_param,
                seed: a.seed,
                ..Default::default()
            };
            let (m, history) = train_glm(&engine, &ds, kind, &cfg)?;
            let metric = match kind {
                GlmKind::Linear => json!({
                    "rmse": rmse(points.iter().map(|p| (p.label, m.predict(&p.features).unwrap()))),
                    "finalLoss": history.losses.last().copied().unwrap_or(f64::NAN),
                }),
                GlmKind::Logistic => json!({
                    "accuracy": accuracy(points.iter().map(|p| (p.label, m.classify(&p.features).unwrap()))),
                    "finalLoss": history.losses.last().copied().unwrap_or(f64::NAN),
                }),
            };
            (Model::Glm(m), metric)
        }
        Algo::NaiveBayes => {
            let (points, _) = read_libsvm(&a.input)?;
            let ds = engine.parallelize(points.clone(), a.partitions, a.seed)?;
            let m = train_naive_bayes(&engine, &ds, a.smoothing)?;
            let acc = accuracy(points.iter().map(|p| (p.label, m.predict(&p.features).unwrap())));
            (Model::NaiveBayes(m), json!({ "accuracy": acc }))
        }
        Algo::Kmeans => {
            let (points, _) = read_libsvm(&a.input)?;
            let xs: Vec<Vector> = points.into_iter().map(|p| p.features).collect();
            let ds = engine.parallelize(xs, a.partitions, a.seed)?;
            let (m, history) = train_kmeans(&engine, &ds, a.k, a.max_iters, a.tol, a.seed)?;
            let metric = json!({ "wsse": m.cost, "iterations": history.len() });
            (Model::KMeans(m), metric)
        }
        Algo::Pca => {
            let (points, _) = read_libsvm(&a.input)?;
            let xs: Vec<Vector> = points.into_iter().map(|p| p.features).collect();
            let ds = engine.parallelize(xs, a.partitions, a.seed)?;
            let m = fit_pca(&engine, &ds, a.k)?;
            let total: f64 = m.explained_variance.iter().sum();
            (Model::Pca(m), json!({ "explainedVariance": total }))
        }
        Algo::Tree | Algo::Forest => {
            let (points, _) = read_libsvm(&a.input)?;
            let ds = engine.parallelize(points.clone(), a.partitions, a.seed)?;
            let bins = find_split_bins(&ds, a.max_bins, 1.0, a.seed)?;
            let cfg = ForestConfig {
                num_trees: if a.algo == Algo::Tree { 1 } else { a.num_trees },
                max_depth: a.max_depth,
                max_bins: a.max_bins,
                impurity: a.impurity.into(),
                feature_subset_fraction: a.feature_subset_fraction,
                bootstrap: a.algo == Algo::Forest,
                min_info_gain: 0.0,
                seed: a.seed,
            };
            if a.algo == Algo::Tree {
                let m = train_tree(&engine, &ds, &bins, &cfg)?;
                let metric = tree_metric(cfg.impurity, points.iter().map(|p| (p.label, m.predict(&p.features))));
                (Model::Tree(m), metric)
            } else {
                let m = train_forest(&engine, &ds, &bins, &cfg)?;
                let metric = tree_metric(cfg.impurity, points.iter().map(|p| (p.label, m.predict(&p.features))));
                (Model::Forest(m), metric)
            }
        }
        Algo::Als => {
            let ratings = read_ratings_csv(&a.input)?;
            let cfg = AlsConfig {
                rank: a.rank,
                num_iters: a.num_iters,
                reg_param: a.reg_param,
                implicit: a.implicit,
                alpha: a.alpha,
                num_user_blocks: a.user_blocks,
                num_item_blocks: a.item_blocks,
                seed: a.seed,
                naive_routing: a.naive_routing,
            };
            let result = train_als(&engine, &ratings, &cfg)?;
            let m = result.model;
            let r = rmse(
                ratings
                    .iter()
                    .map(|x| (x.value, m.predict_rating(x.user, x.item).unwrap())),
            );
            let metric = json!({
                "rmse": r,
                "finalObjective": result.objective_history.last().copied().unwrap_or(f64::NAN),
            });
            (Model::Als(m), metric)
        }
    };

    save_model(&model, &a.model_out)?;
    eprintln!("saved {} model to {}", model.model_type(), a.model_out);
    report("train", config, start.elapsed().as_millis(), metrics, &engine);
    Ok(())
}

fn tree_metric(impurity: Impurity, pairs: impl Iterator<Item = (f64, f64)>) -> serde_json::Value {
    if impurity.is_classification() {
        json!({ "accuracy": accuracy(pairs) })
    } else {
        json!({ "rmse": rmse(pairs) })
    }
}

fn cmd_evaluate(a: EvalArgs) -> Result<()> {
    let engine = make_engine(a.partitions, a.agg_depth)?;
    let start = Instant::now();
    let model = load_model(&a.model)?;
    let config = json!({
        "model": a.model,
        "in": a.input,
        "partitions": a.partitions,
        "aggDepth": a.agg_depth,
    });

    let load_points = || -> Result<Vec<LabeledPoint>> { Ok(read_libsvm(&a.input)?.0) };
    let metrics = match &model {
        Model::Glm(m) => {
            let points = load_points()?;
            match m.kind {
                GlmKind::Linear => json!({
                    "rmse": rmse(points.iter().map(|p| (p.label, m.predict(&p.features).unwrap())))
                }),
                GlmKind::Logistic => json!({
                    "accuracy": accuracy(points.iter().map(|p| (p.label, m.classify(&p.features).unwrap())))
                }),
            }
        }
        Model::NaiveBayes(m) => {
            let points = load_points()?;
            json!({
                "accuracy": accuracy(points.iter().map(|p| (p.label, m.predict(&p.features).unwrap())))
            })
        }
        Model::KMeans(m) => {
            let points = load_points()?;
            let mut wsse = 0.0;
            for p in &points {
                let c = m.predict(&p.features)?;
                let center = &m.centers[c];
                for j in 0..center.len() {
                    let d = p.features.get(j) - center.values[j];
                    wsse += d * d;
                }
            }
            json!({ "wsse": wsse })
        }
        Model::Pca(m) => {
            let points = load_points()?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for p in &points {
                let proj = m.project(&p.features)?;
                let recon = m.components.matvec(&proj)?;
                for j in 0..m.mean.len() {
                    let d = p.features.get(j) - m.mean.values[j] - recon.values[j];
                    sum += d * d;
                    count += 1;
                }
            }
            json!({ "reconstructionRmse": (sum / count as f64).sqrt() })
        }
        Model::Tree(m) => {
            let points = load_points()?;
            tree_metric(m.impurity, points.iter().map(|p| (p.label, m.predict(&p.features))))
        }
        Model::Forest(m) => {
            let points = load_points()?;
            tree_metric(m.impurity, points.iter().map(|p| (p.label, m.predict(&p.features))))
        }
        Model::Als(m) => {
            let ratings = read_ratings_csv(&a.input)?;
            let mut pairs = Vec::new();
            for r in &ratings {
                pairs.push((r.value, m.predict_rating(r.user, r.item)?));
            }
            json!({ "rmse": rmse(pairs.into_iter()) })
        }
        Model::Pipeline(_) => {
            return Err(Error::InvalidArgument(
                "pipeline models are evaluated through the library API".into(),
            ));
        }
    };

    report("evaluate", config, start.elapsed().as_millis(), metrics, &engine);
    Ok(())
}

fn cmd_bench_als(a: BenchAlsArgs) -> Result<()> {
    if a.scales.is_empty() || a.scales.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("scales must be positive integers".into()));
    }
    println!("scale,wallMs,ledgerBytes");
    for &scale in &a.scales {
        let (ratings, _, _) = gen_als_ratings(&RatingsGenParams {
            users: a.users,
            items: a.items,
            rank: a.rank,
            density: a.density,
            noise: 0.1,
            scale,
            seed: a.seed,
        })?;
        let engine = make_engine(a.user_blocks.max(a.item_blocks), 2)?;
        let cfg = AlsConfig {
            rank: a.rank,
            num_iters: a.iters,
            reg_param: a.reg_param,
            implicit: false,
            alpha: 1.0,
            num_user_blocks: a.user_blocks,
            num_item_blocks: a.item_blocks,
            seed: a.seed,
            naive_routing: a.naive_routing,
        };
        let start = Instant::now();
        train_als(&engine, &ratings, &cfg)?;
        let wall_ms = start.elapsed().as_millis();
        let snapshot = engine.ledger().snapshot();
        println!("{},{},{}", scale, wall_ms, snapshot.total_bytes());
        eprintln!(
            "scale {}: {} ratings, {} ms",
            scale,
            ratings.len(),
            wall_ms
        );
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen { kind } => cmd_gen(kind),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::BenchAls(a) => cmd_bench_als(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}
