//! k-means via Lloyd's algorithm: broadcast centers, aggregate per-cluster
//! (sum, count) with tree aggregation, recompute centers. Initialization is
//! k-means++ on a seeded sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{DistributedDataset, Engine, PayloadSize};
use crate::error::{Error, Result};
use crate::{DenseVector, Vector};

const INIT_SAMPLE_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centers: Vec<DenseVector>,
    /// training WSSSE
    pub cost: f64,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Nearest center index; ties break to the lower index.
    pub fn predict(&self, x: &Vector) -> Result<usize> {
        let dx = x.to_dense();
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, center) in self.centers.iter().enumerate() {
            let d = dx.squared_distance(center)?;
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        Ok(best)
    }
}

/// Distance via ||x||^2 + ||c||^2 - 2 x.c with precomputed center norms,
/// clamped at zero.
fn fast_sq_dist(x: &DenseVector, x_norm_sq: f64, c: &DenseVector, c_norm_sq: f64) -> f64 {
    let dot: f64 = x.values.iter().zip(&c.values).map(|(a, b)| a * b).sum();
    (x_norm_sq + c_norm_sq - 2.0 * dot).max(0.0)
}

fn nearest(x: &DenseVector, x_norm_sq: f64, centers: &[DenseVector], norms: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, (center, &cn)) in centers.iter().zip(norms).enumerate() {
        let d = fast_sq_dist(x, x_norm_sq, center, cn);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

#[derive(Debug, Clone)]
struct LloydAcc {
    sums: Vec<DenseVector>,
    counts: Vec<u64>,
    cost: f64,
    /// globally farthest point from its assigned center: (dist, row, point)
    farthest: Option<(f64, usize, DenseVector)>,
}

impl LloydAcc {
    fn zero(k: usize, d: usize) -> Self {
        LloydAcc {
            sums: vec![DenseVector::zeros(d); k],
            counts: vec![0; k],
            cost: 0.0,
            farthest: None,
        }
    }

    fn observe_farthest(&mut self, dist: f64, row: usize, point: &DenseVector) {
        let replace = match &self.farthest {
            None => true,
            Some((d, r, _)) => dist > *d || (dist == *d && row < *r),
        };
        if replace {
            self.farthest = Some((dist, row, point.clone()));
        }
    }

    fn merge(mut self, other: LloydAcc) -> Self {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.axpy(1.0, b).expect("same dim");
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.cost += other.cost;
        if let Some((d, r, p)) = other.farthest {
            self.observe_farthest(d, r, &p);
        }
        self
    }
}

impl PayloadSize for LloydAcc {
    fn payload_bytes(&self) -> u64 {
        let d = self.sums.first().map_or(0, |v| v.len()) as u64;
        let k = self.sums.len() as u64;
        k * d * 8 + k * 8 + 8 + self.farthest.as_ref().map_or(0, |(_, _, p)| 16 + 8 * p.len() as u64)
    }
}

fn kmeanspp(sample: &[DenseVector], k: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<DenseVector> = Vec::with_capacity(k);
    centers.push(sample[rng.gen_range(0..sample.len())].clone());
    let mut dists: Vec<f64> = sample
        .iter()
        .map(|x| x.squared_distance(&centers[0]).expect("same dim"))
        .collect();
    while centers.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // all mass at chosen centers; fall back to uniform
            rng.gen_range(0..sample.len())
        } else {
            let r = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut idx = sample.len() - 1;
            for (i, &d) in dists.iter().enumerate() {
                acc += d;
                if acc >= r {
                    idx = i;
                    break;
                }
            }
            idx
        };
        let c = sample[next].clone();
        for (x, d) in sample.iter().zip(dists.iter_mut()) {
            let nd = x.squared_distance(&c).expect("same dim");
            if nd < *d {
                *d = nd;
            }
        }
        centers.push(c);
    }
    centers
}

pub fn train_kmeans(
    engine: &Engine,
    ds: &DistributedDataset<Vector>,
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>)> {
    let n = ds.len();
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("n={} smaller than k={}", n, k)));
    }

    // attach global row indices for deterministic reseeding tie-breaks
    let offsets = ds.partition_offsets();
    let indexed = engine.map_partitions(ds, |pi, part| {
        part.iter()
            .enumerate()
            .map(|(i, v)| (offsets[pi] + i, v.to_dense()))
            .collect::<Vec<(usize, DenseVector)>>()
    });

    // seeded init sample
    let all: Vec<DenseVector> = indexed.iter().map(|(_, v)| v.clone()).collect();
    let sample: Vec<DenseVector> = if n <= INIT_SAMPLE_CAP {
        all
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        idx[..INIT_SAMPLE_CAP].iter().map(|&i| all[i].clone()).collect()
    };
    let mut centers = kmeanspp(&sample, k, seed);
    let d = centers[0].len();
    let num_partitions = ds.num_partitions();
    let depth = engine.config().default_depth;
    let mut history: Vec<f64> = Vec::new();

    for _ in 0..max_iters {
        let bc = engine.broadcast(centers.clone(), num_partitions);
        let partials = engine.map_partitions(&indexed, |_, part| {
            let centers = bc.value();
            let norms: Vec<f64> = centers.iter().map(|c| c.dot(c).unwrap()).collect();
            let mut acc = LloydAcc::zero(k, d);
            for (row, x) in part {
                let xn = x.dot(x).unwrap();
                let (c, dist) = nearest(x, xn, centers, &norms);
                acc.sums[c].axpy(1.0, x).unwrap();
                acc.counts[c] += 1;
                acc.cost += dist;
                acc.observe_farthest(dist, *row, x);
            }
            vec![acc]
        });
        let total = engine.tree_aggregate(
            &partials,
            LloydAcc::zero(k, d),
            |a, x| a.merge(x.clone()),
            |a, b| a.merge(b),
            depth,
        )?;
        history.push(total.cost);

        let mut new_centers = Vec::with_capacity(k);
        let mut reseeded = false;
        for c in 0..k {
            if total.counts[c] == 0 {
                // reseed the first empty cluster with the farthest point
                if !reseeded {
                    if let Some((_, _, p)) = &total.farthest {
                        new_centers.push(p.clone());
                        reseeded = true;
                        continue;
                    }
                }
                new_centers.push(centers[c].clone());
            } else {
                let mut m = total.sums[c].clone();
                m.scal(1.0 / total.counts[c] as f64);
                new_centers.push(m);
            }
        }
        let movement = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| a.squared_distance(b).unwrap().sqrt())
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if movement < tol {
            break;
        }
    }

    let model = KMeansModel { centers, cost: 0.0 };
    let final_cost = compute_cost(engine, &model, ds)?;
    history.push(final_cost);
    Ok((KMeansModel { cost: final_cost, ..model }, history))
}

/// WSSSE: sum over points of the squared distance to the nearest center.
pub fn compute_cost(
    engine: &Engine,
    model: &KMeansModel,
    ds: &DistributedDataset<Vector>,
) -> Result<f64> {
    let norms: Vec<f64> = model.centers.iter().map(|c| c.dot(c).unwrap()).collect();
    let centers = model.centers.clone();
    engine.tree_aggregate(
        ds,
        0.0f64,
        move |acc, x| {
            let dx = x.to_dense();
            let xn = dx.dot(&dx).unwrap();
            acc + nearest(&dx, xn, &centers, &norms).1
        },
        |a, b| a + b,
        engine.config().default_depth,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> Engine {
        Engine::with_defaults()
    }

    #[test]
    fn n_equals_k_exact_recovery() {
        let e = engine();
        let points = vec![
            Vector::dense(vec![0.0, 0.0]),
            Vector::dense(vec![10.0, 0.0]),
            Vector::dense(vec![0.0, 10.0]),
        ];
        let ds = e.parallelize(points.clone(), 2, 0).unwrap();
        let (m, _) = train_kmeans(&e, &ds, 3, 20, 1e-9, 1).unwrap();
        assert!(m.cost.abs() < 1e-18, "cost {}", m.cost);
        // centers equal the points as sets
        for p in &points {
            let dp = p.to_dense();
            assert!(m.centers.iter().any(|c| c.squared_distance(&dp).unwrap() < 1e-18));
        }
    }

    #[test]
    fn k1_center_is_mean() {
        let e = engine();
        let points: Vec<Vector> = (0..10).map(|i| Vector::dense(vec![i as f64])).collect();
        let ds = e.parallelize(points, 3, 0).unwrap();
        let (m, _) = train_kmeans(&e, &ds, 1, 20, 1e-12, 0).unwrap();
        assert!((m.centers[0].values[0] - 4.5).abs() < 1e-12);
        // cost = sum (x - mean)^2 = variance * n
        let want: f64 = (0..10).map(|i| (i as f64 - 4.5).powi(2)).sum();
        assert!((m.cost - want).abs() < 1e-9);
    }

    #[test]
    fn recovers_separated_blobs() {
        let e = engine();
        let (points, true_centers) = crate::io::gen_blobs(&crate::io::BlobsGenParams {
            n: 300,
            d: 2,
            k: 3,
            separation: 50.0,
            spread: 0.5,
            seed: 11,
        })
        .unwrap();
        let ds = e
            .parallelize(points.into_iter().map(|p| p.features).collect(), 4, 0)
            .unwrap();
        let (m, _) = train_kmeans(&e, &ds, 3, 50, 1e-9, 7).unwrap();
        for tc in &true_centers {
            let best = m
                .centers
                .iter()
                .map(|c| c.squared_distance(tc).unwrap().sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "true center missed by {}", best);
        }
    }

    #[test]
    fn rejects_n_less_than_k() {
        let e = engine();
        let ds = e.parallelize(vec![Vector::dense(vec![1.0])], 1, 0).unwrap();
        assert!(matches!(train_kmeans(&e, &ds, 2, 5, 0.0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cost_zero_when_points_are_centers() {
        let e = engine();
        let m = KMeansModel {
            centers: vec![DenseVector::new(vec![1.0, 2.0])],
            cost: 0.0,
        };
        let ds = e.parallelize(vec![Vector::dense(vec![1.0, 2.0])], 1, 0).unwrap();
        assert_eq!(compute_cost(&e, &m, &ds).unwrap(), 0.0);
    }

    #[test]
    fn cost_single_point_distance() {
        let e = engine();
        let m = KMeansModel { centers: vec![DenseVector::new(vec![0.0])], cost: 0.0 };
        let ds = e.parallelize(vec![Vector::dense(vec![2.0])], 1, 0).unwrap();
        assert!((compute_cost(&e, &m, &ds).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cost_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers: Vec<DenseVector> =
            (0..4).map(|_| DenseVector::new((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())).collect();
        let points: Vec<Vector> = (0..100)
            .map(|_| Vector::dense((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()))
            .collect();
        let brute: f64 = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| p.to_dense().squared_distance(c).unwrap())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let e = engine();
        let m = KMeansModel { centers, cost: 0.0 };
        let ds = e.parallelize(points, 6, 0).unwrap();
        let got = compute_cost(&e, &m, &ds).unwrap();
        assert!((got - brute).abs() <= 1e-9 * brute.max(1.0));
    }

    #[test]
    fn predict_tie_breaks_low_index() {
        let m = KMeansModel {
            centers: vec![DenseVector::new(vec![1.0]), DenseVector::new(vec![-1.0])],
            cost: 0.0,
        };
        assert_eq!(m.predict(&Vector::dense(vec![0.0])).unwrap(), 0);
    }

    #[test]
    fn assignment_invariant_under_uniform_scaling() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = KMeansModel {
            centers: (0..3)
                .map(|_| DenseVector::new((0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect(),
            cost: 0.0,
        };
        let scaled = KMeansModel {
            centers: m
                .centers
                .iter()
                .map(|c| {
                    let mut s = c.clone();
                    s.scal(3.5);
                    s
                })
                .collect(),
            cost: 0.0,
        };
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sx: Vec<f64> = x.iter().map(|v| v * 3.5).collect();
            assert_eq!(
                m.predict(&Vector::dense(x)).unwrap(),
                scaled.predict(&Vector::dense(sx)).unwrap()
            );
        }
    }

    #[test]
    fn result_independent_of_partitioning_and_depth() {
        let (points, _) = crate::io::gen_blobs(&crate::io::BlobsGenParams {
            n: 200,
            d: 3,
            k: 4,
            separation: 10.0,
            spread: 1.0,
            seed: 3,
        })
        .unwrap();
        let vectors: Vec<Vector> = points.into_iter().map(|p| p.features).collect();
        let mut reference: Option<KMeansModel> = None;
        for (p, depth) in [(1usize, 1usize), (4, 2), (9, 3)] {
            let e = Engine::new(crate::engine::EngineConfig {
                default_depth: depth,
                ..Default::default()
            })
            .unwrap();
            let ds = e.parallelize(vectors.clone(), p, 0).unwrap();
            let (m, history) = train_kmeans(&e, &ds, 4, 30, 1e-9, 42).unwrap();
            for w in history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            match &reference {
                None => reference = Some(m),
                Some(r) => {
                    assert!((m.cost - r.cost).abs() <= 1e-9 * r.cost.max(1.0));
                    for (a, b) in m.centers.iter().zip(&r.centers) {
                        assert!(a.squared_distance(b).unwrap() < 1e-18);
                    }
                }
            }
        }
    }
}
