//! Blocked alternating least squares for explicit and implicit feedback.
//! Users and items are split into blocks (id mod numBlocks); out-link /
//! in-link tables route each factor vector to a destination block at most
//! once per half-iteration, and the ledger records every shipped byte.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::{DenseMatrix, DenseVector, Rating};

#[derive(Debug, Clone)]
pub struct AlsConfig {
    pub rank: usize,
    pub num_iters: usize,
    pub reg_param: f64,
    pub implicit: bool,
    pub alpha: f64,
    pub num_user_blocks: usize,
    pub num_item_blocks: usize,
    pub seed: u64,
    /// ship one factor copy per rating instead of deduplicating per
    /// destination block; affects the ledger only, never the numbers
    pub naive_routing: bool,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            rank: 10,
            num_iters: 10,
            reg_param: 0.01,
            implicit: false,
            alpha: 1.0,
            num_user_blocks: 1,
            num_item_blocks: 1,
            seed: 0,
            naive_routing: false,
        }
    }
}

impl AlsConfig {
    fn validate(&self) -> Result<()> {
        if self.rank < 1
            || self.num_iters < 1
            || self.reg_param < 0.0
            || self.alpha < 0.0
            || self.num_user_blocks < 1
            || self.num_item_blocks < 1
        {
            return Err(Error::InvalidArgument(format!("bad ALS config: {:?}", self)));
        }
        Ok(())
    }
}

/// Routing tables for one direction (source entities shipping factors to the
/// destination side's blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTables {
    /// outLinks[srcBlock][dstBlock] = sorted distinct source ids whose
    /// factors that destination block needs
    pub out_links: Vec<Vec<Vec<u32>>>,
    /// inLinks[dstBlock] = per destination entity (sorted by id), its
    /// (source id, rating) list sorted by source id
    pub in_links: Vec<Vec<(u32, Vec<(u32, f64)>)>>,
}

impl LinkTables {
    /// Number of factor vectors a deduplicated half-step ships.
    pub fn shipped_factor_count(&self) -> u64 {
        self.out_links
            .iter()
            .map(|per_dst| per_dst.iter().map(|ids| ids.len() as u64).sum::<u64>())
            .sum()
    }
}

/// Build routing tables with sources on the `(src, dst, value)` side given by
/// the extractor pair. For the item-solve half-step sources are users and
/// destinations are items.
pub fn build_link_tables(
    ratings: &[Rating],
    num_src_blocks: usize,
    num_dst_blocks: usize,
    src_is_user: bool,
) -> LinkTables {
    let key = |r: &Rating| -> (u32, u32) {
        if src_is_user {
            (r.user, r.item)
        } else {
            (r.item, r.user)
        }
    };

    let mut out: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); num_dst_blocks]; num_src_blocks];
    let mut grouped: Vec<HashMap<u32, Vec<(u32, f64)>>> = vec![HashMap::new(); num_dst_blocks];
    for r in ratings {
        let (src, dst) = key(r);
        let sb = src as usize % num_src_blocks;
        let db = dst as usize % num_dst_blocks;
        out[sb][db].push(src);
        grouped[db].entry(dst).or_default().push((src, r.value));
    }
    for per_dst in &mut out {
        for ids in per_dst {
            ids.sort_unstable();
            ids.dedup();
        }
    }
    let in_links = grouped
        .into_iter()
        .map(|m| {
            let mut entities: Vec<(u32, Vec<(u32, f64)>)> = m.into_iter().collect();
            entities.sort_unstable_by_key(|(id, _)| *id);
            for (_, neigh) in &mut entities {
                neigh.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            }
            entities
        })
        .collect();
    LinkTables { out_links: out, in_links }
}

/// Explicit: x = (Y_u^T Y_u + lambda n_u I)^-1 Y_u^T r_u (ALS-WR weighting).
/// Implicit: x = (Y^T Y + Y_u^T (C_u - I) Y_u + lambda I)^-1 Y_u^T C_u p_u
/// with c = 1 + alpha r and p = [r > 0].
pub fn solve_normal_equation(
    k: usize,
    lambda: f64,
    implicit: bool,
    alpha: f64,
    neighbor_factors: &[&[f64]],
    values: &[f64],
    global_gram: Option<&DenseMatrix>,
) -> Result<DenseVector> {
    if neighbor_factors.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "solveNormalEquation: {} factors vs {} values",
            neighbor_factors.len(),
            values.len()
        )));
    }
    if !implicit && neighbor_factors.is_empty() {
        return Err(Error::EmptyInput("solveNormalEquation: no neighbors".into()));
    }
    let mut a = if implicit {
        global_gram
            .ok_or_else(|| Error::InvalidArgument("implicit solve needs the global Gram".into()))?
            .clone()
    } else {
        DenseMatrix::zeros(k, k)
    };
    let mut b = vec![0.0; k];
    for (y, &r) in neighbor_factors.iter().zip(values) {
        if y.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "solveNormalEquation: factor dim {} vs rank {}",
                y.len(),
                k
            )));
        }
        if implicit {
            let c = 1.0 + alpha * r;
            let p = if r > 0.0 { 1.0 } else { 0.0 };
            for i in 0..k {
                for j in 0..k {
                    let v = a.get(i, j) + (c - 1.0) * y[i] * y[j];
                    a.set(i, j, v);
                }
                b[i] += c * p * y[i];
            }
        } else {
            for i in 0..k {
                for j in 0..k {
                    let v = a.get(i, j) + y[i] * y[j];
                    a.set(i, j, v);
                }
                b[i] += r * y[i];
            }
        }
    }
    let reg = if implicit { lambda } else { lambda * neighbor_factors.len() as f64 };
    for i in 0..k {
        let v = a.get(i, i) + reg;
        a.set(i, i, v);
    }
    cholesky_solve(&a, &DenseVector::new(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlsModel {
    pub rank: usize,
    /// sorted ascending; factors aligned by index
    pub user_ids: Vec<u32>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_ids: Vec<u32>,
    pub item_factors: Vec<Vec<f64>>,
}

impl AlsModel {
    fn lookup<'a>(ids: &[u32], factors: &'a [Vec<f64>], id: u32) -> Option<&'a [f64]> {
        ids.binary_search(&id).ok().map(|i| factors[i].as_slice())
    }

    pub fn user_factor(&self, user: u32) -> Option<&[f64]> {
        Self::lookup(&self.user_ids, &self.user_factors, user)
    }

    pub fn item_factor(&self, item: u32) -> Option<&[f64]> {
        Self::lookup(&self.item_ids, &self.item_factors, item)
    }

    pub fn predict_rating(&self, user: u32, item: u32) -> Result<f64> {
        let x = self
            .user_factor(user)
            .ok_or_else(|| Error::MissingEntity(format!("unknown user {}", user)))?;
        let y = self
            .item_factor(item)
            .ok_or_else(|| Error::MissingEntity(format!("unknown item {}", item)))?;
        Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
    }

    /// Top-K items by descending score; ties break to the lower item id. K
    /// larger than the catalogue returns every item.
    pub fn recommend_top_k(&self, user: u32, k: usize) -> Result<Vec<(u32, f64)>> {
        let x = self
            .user_factor(user)
            .ok_or_else(|| Error::MissingEntity(format!("unknown user {}", user)))?;
        let mut scored: Vec<(u32, f64)> = self
            .item_ids
            .iter()
            .zip(&self.item_factors)
            .map(|(&id, y)| (id, x.iter().zip(y).map(|(a, b)| a * b).sum()))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Regularized objective: explicit uses the ALS-WR weighting
/// sum (r - x^T y)^2 + lambda (sum_u n_u |x_u|^2 + sum_i n_i |y_i|^2);
/// implicit uses confidence-weighted preference error with plain lambda.
pub fn als_objective(ratings: &[Rating], model: &AlsModel, config: &AlsConfig) -> f64 {
    let mut user_counts: HashMap<u32, f64> = HashMap::new();
    let mut item_counts: HashMap<u32, f64> = HashMap::new();
    let mut err = 0.0;
    for r in ratings {
        *user_counts.entry(r.user).or_default() += 1.0;
        *item_counts.entry(r.item).or_default() += 1.0;
        let pred = model.predict_rating(r.user, r.item).unwrap_or(0.0);
        if config.implicit {
            let c = 1.0 + config.alpha * r.value;
            let p = if r.value > 0.0 { 1.0 } else { 0.0 };
            err += c * (p - pred) * (p - pred);
        } else {
            err += (r.value - pred) * (r.value - pred);
        }
    }
    let mut reg = 0.0;
    for (ids, factors, counts) in [
        (&model.user_ids, &model.user_factors, &user_counts),
        (&model.item_ids, &model.item_factors, &item_counts),
    ] {
        for (id, f) in ids.iter().zip(factors) {
            let w = if config.implicit { 1.0 } else { counts[id] };
            reg += w * f.iter().map(|v| v * v).sum::<f64>();
        }
    }
    err + config.reg_param * reg
}

fn init_factor(seed: u64, kind: u64, id: u32, rank: usize) -> Vec<f64> {
    let mut z = seed ^ kind.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (id as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    let mut rng = ChaCha8Rng::seed_from_u64(z ^ (z >> 31));
    let scale = 1.0 / (rank as f64).sqrt();
    (0..rank).map(|_| rng.gen::<f64>() * scale).collect()
}

pub struct AlsTrainResult {
    pub model: AlsModel,
    /// objective after every half-step (2 per iteration)
    pub objective_history: Vec<f64>,
}

fn global_gram(engine: &Engine, factors: &[Vec<f64>], rank: usize, blocks: usize) -> Result<DenseMatrix> {
    let ds = engine.parallelize(factors.to_vec(), blocks.max(1), 0)?;
    engine.tree_aggregate(
        &ds,
        DenseMatrix::zeros(rank, rank),
        |mut g, f: &Vec<f64>| {
            for i in 0..rank {
                for j in 0..rank {
                    let v = g.get(i, j) + f[i] * f[j];
                    g.set(i, j, v);
                }
            }
            g
        },
        |mut a, b| {
            a.add_assign(&b).expect("same shape");
            a
        },
        engine.config().default_depth,
    )
}

/// One half-step: solve every destination entity's factor from the source
/// side's current factors, charging shipped-factor bytes to the ledger.
#[allow(clippy::too_many_arguments)]
fn half_step(
    engine: &Engine,
    links: &LinkTables,
    src_ids: &[u32],
    src_factors: &[Vec<f64>],
    dst_ids: &[u32],
    dst_factors: &mut [Vec<f64>],
    config: &AlsConfig,
    num_ratings_routed: u64,
) -> Result<()> {
    let k = config.rank;
    let factor_bytes = 8 * k as u64;
    let shipped = if config.naive_routing {
        num_ratings_routed
    } else {
        links.shipped_factor_count()
    };
    engine.ledger().add_inter_partition(shipped * factor_bytes);

    let gram = if config.implicit {
        Some(global_gram(engine, src_factors, k, config.num_user_blocks.max(config.num_item_blocks))?)
    } else {
        None
    };

    let src_index: HashMap<u32, usize> =
        src_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for block in &links.in_links {
        for (dst, neighbors) in block {
            let factors: Vec<&[f64]> = neighbors
                .iter()
                .map(|(s, _)| src_factors[src_index[s]].as_slice())
                .collect();
            let values: Vec<f64> = neighbors.iter().map(|(_, v)| *v).collect();
            let x = solve_normal_equation(
                k,
                config.reg_param,
                config.implicit,
                config.alpha,
                &factors,
                &values,
                gram.as_ref(),
            )?;
            let di = dst_ids.binary_search(dst).expect("destination id known");
            dst_factors[di] = x.values;
        }
    }
    Ok(())
}

pub fn train_als(engine: &Engine, ratings: &[Rating], config: &AlsConfig) -> Result<AlsTrainResult> {
    config.validate()?;
    if ratings.is_empty() {
        return Err(Error::EmptyInput("trainALS on empty ratings".into()));
    }

    let mut user_ids: Vec<u32> = ratings.iter().map(|r| r.user).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u32> = ratings.iter().map(|r| r.item).collect();
    item_ids.sort_unstable();
    item_ids.dedup();

    let mut user_factors: Vec<Vec<f64>> = user_ids
        .iter()
        .map(|&u| init_factor(config.seed, 0, u, config.rank))
        .collect();
    let mut item_factors: Vec<Vec<f64>> = item_ids
        .iter()
        .map(|&i| init_factor(config.seed, 1, i, config.rank))
        .collect();

    // user -> item routing (item-solve half-step) and the reverse
    let user_links =
        build_link_tables(ratings, config.num_user_blocks, config.num_item_blocks, true);
    let item_links =
        build_link_tables(ratings, config.num_item_blocks, config.num_user_blocks, false);
    let num_ratings = ratings.len() as u64;

    let mut history = Vec::with_capacity(2 * config.num_iters);
    for _ in 0..config.num_iters {
        half_step(
            engine,
            &user_links,
            &user_ids,
            &user_factors,
            &item_ids,
            &mut item_factors,
            config,
            num_ratings,
        )?;
        let snapshot = AlsModel {
            rank: config.rank,
            user_ids: user_ids.clone(),
            user_factors: user_factors.clone(),
            item_ids: item_ids.clone(),
            item_factors: item_factors.clone(),
        };
        history.push(als_objective(ratings, &snapshot, config));

        half_step(
            engine,
            &item_links,
            &item_ids,
            &item_factors,
            &user_ids,
            &mut user_factors,
            config,
            num_ratings,
        )?;
        let snapshot = AlsModel {
            rank: config.rank,
            user_ids: user_ids.clone(),
            user_factors: user_factors.clone(),
            item_ids: item_ids.clone(),
            item_factors: item_factors.clone(),
        };
        history.push(als_objective(ratings, &snapshot, config));
    }

    Ok(AlsTrainResult {
        model: AlsModel {
            rank: config.rank,
            user_ids,
            user_factors,
            item_ids,
            item_factors,
        },
        objective_history: history,
    })
}
