//! Principal component analysis for moderate dimension: distributed mean and
//! covariance accumulation, then a local symmetric eigendecomposition.

use serde::{Deserialize, Serialize};

use crate::engine::{DistributedDataset, Engine};
use crate::error::{Error, Result};
use crate::linalg::{gram_accumulate, sym_eig};
use crate::{DenseMatrix, DenseVector, Vector};

pub const DEFAULT_MAX_DIM: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DenseVector,
    /// d x k, columns are principal directions with canonical sign
    pub components: DenseMatrix,
    /// descending, non-negative
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.cols
    }

    /// components^T (x - mean)
    pub fn project(&self, x: &Vector) -> Result<DenseVector> {
        if x.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "project: model dim {} vs input dim {}",
                self.mean.len(),
                x.dim()
            )));
        }
        let mut centered = x.to_dense();
        centered.axpy(-1.0, &self.mean)?;
        self.components.matvec_t(&centered)
    }
}

pub fn fit_pca(
    engine: &Engine,
    ds: &DistributedDataset<Vector>,
    k: usize,
) -> Result<PcaModel> {
    fit_pca_capped(engine, ds, k, DEFAULT_MAX_DIM)
}

/// Covariance C = (sum x x^T - n mu mu^T) / (n-1) assembled from Gram
/// partials, then top-k eigenpairs. The d x d covariance is materialized at
/// the driver, hence the dimension cap.
pub fn fit_pca_capped(
    engine: &Engine,
    ds: &DistributedDataset<Vector>,
    k: usize,
    max_dim: usize,
) -> Result<PcaModel> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("fitPCA needs n >= 2, got {}", n)));
    }
    let d = ds.iter().next().unwrap().dim();
    if k < 1 || k > d {
        return Err(Error::InvalidArgument(format!("fitPCA: k={} out of range 1..={}", k, d)));
    }
    if d > max_dim {
        return Err(Error::UnsupportedDimension(format!("d={} exceeds cap {}", d, max_dim)));
    }

    let stats = crate::stats::col_stats(engine, ds)?;
    let mean = DenseVector::new(stats.mean.clone());

    let gram = engine.tree_aggregate(
        ds,
        DenseMatrix::zeros(d, d),
        |mut g, x| {
            gram_accumulate(&mut g, x);
            g
        },
        |mut a, b| {
            a.add_assign(&b).expect("same shape");
            a
        },
        engine.config().default_depth,
    )?;

    let nf = n as f64;
    let mut cov = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let c = (gram.get(i, j) - nf * mean.values[i] * mean.values[j]) / (nf - 1.0);
            cov.set(i, j, c);
        }
    }
    // enforce exact symmetry before the eigensolve
    for i in 0..d {
        for j in 0..i {
            let s = cov.get(i, j);
            cov.set(j, i, s);
        }
    }

    let (eigvals, eigvecs) = sym_eig(&cov)?;
    let mut components = DenseMatrix::zeros(d, k);
    for c in 0..k {
        for r in 0..d {
            components.set(r, c, eigvecs.get(r, c));
        }
    }
    let explained_variance: Vec<f64> = eigvals[..k].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaModel { mean, components, explained_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine() -> Engine {
        Engine::with_defaults()
    }

    #[test]
    fn axis_data_first_component() {
        let e = engine();
        let points: Vec<Vector> = (0..20)
            .map(|i| Vector::dense(vec![i as f64 - 10.0, 0.0, 0.0]))
            .collect();
        let ds = e.parallelize(points, 3, 0).unwrap();
        let m = fit_pca(&e, &ds, 1).unwrap();
        // canonical sign makes it +e1
        assert!((m.components.get(0, 0) - 1.0).abs() < 1e-8);
        assert!(m.components.get(1, 0).abs() < 1e-8);
        assert!(m.components.get(2, 0).abs() < 1e-8);
    }

    #[test]
    fn rotated_anisotropic_data_recovers_rotation() {
        // stretch along e1 then rotate by a known angle; the first component
        // must align with the rotated axis
        let theta: f64 = 0.7;
        let (c, s) = (theta.cos(), theta.sin());
        let e = engine();
        let points: Vec<Vector> = (0..100)
            .map(|i| {
                let t = (i as f64 - 50.0) / 10.0;
                let u = 0.01 * ((i % 7) as f64 - 3.0); // small second-axis wiggle
                Vector::dense(vec![c * t - s * u, s * t + c * u])
            })
            .collect();
        let ds = e.parallelize(points, 4, 0).unwrap();
        let m = fit_pca(&e, &ds, 2).unwrap();
        let v0 = [m.components.get(0, 0), m.components.get(1, 0)];
        let cosangle = (v0[0] * c + v0[1] * s).abs();
        assert!(cosangle > 1.0 - 1e-6, "principal angle too large: {}", cosangle);
    }

    /// Dense full eigendecomposition of the exactly-computed covariance as
    /// the oracle.
    #[test]
    fn matches_dense_covariance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10;
        let d = 5;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        // two-pass covariance
        let mut mean = vec![0.0; d];
        for r in &rows {
            for j in 0..d {
                mean[j] += r[j] / n as f64;
            }
        }
        let mut cov = DenseMatrix::zeros(d, d);
        for r in &rows {
            for i in 0..d {
                for j in 0..d {
                    let v = cov.get(i, j) + (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
                    cov.set(i, j, v);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                let v = cov.get(i, j);
                cov.set(j, i, v);
            }
        }
        let (ovals, ovecs) = sym_eig(&cov).unwrap();

        let e = engine();
        let ds = e
            .parallelize(rows.iter().cloned().map(Vector::dense).collect(), 3, 0)
            .unwrap();
        let m = fit_pca(&e, &ds, d).unwrap();
        for c in 0..d {
            assert!((m.explained_variance[c] - ovals[c].max(0.0)).abs() < 1e-8);
            for r in 0..d {
                assert!(
                    (m.components.get(r, c) - ovecs.get(r, c)).abs() < 1e-8,
                    "component ({},{})",
                    r,
                    c
                );
            }
        }
    }

    #[test]
    fn project_contracts() {
        let e = engine();
        let points: Vec<Vector> = (0..30)
            .map(|i| Vector::dense(vec![i as f64, 2.0 * i as f64 + 1.0, 0.5]))
            .collect();
        let ds = e.parallelize(points, 2, 0).unwrap();
        let m = fit_pca(&e, &ds, 2).unwrap();
        // projecting the mean gives zero
        let z = m.project(&Vector::Dense(m.mean.clone())).unwrap();
        for v in z.values {
            assert!(v.abs() < 1e-12);
        }
        // projecting mean + component_i gives e_i
        for c in 0..2 {
            let mut x = m.mean.clone();
            for r in 0..3 {
                x.values[r] += m.components.get(r, c);
            }
            let p = m.project(&Vector::Dense(x)).unwrap();
            for (j, v) in p.values.iter().enumerate() {
                let want = if j == c { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 4;
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let e = engine();
        let ds = e
            .parallelize(rows.iter().cloned().map(Vector::dense).collect(), 4, 0)
            .unwrap();
        let m = fit_pca(&e, &ds, d).unwrap();
        for r in &rows {
            let x = Vector::dense(r.clone());
            let p = m.project(&x).unwrap();
            // reconstruct (x - mean) = components * p
            let recon = m.components.matvec(&p).unwrap();
            for j in 0..d {
                let want = r[j] - m.mean.values[j];
                assert!((recon.values[j] - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn covariance_independent_of_partitioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vector> = (0..200)
            .map(|_| Vector::dense((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let mut reference: Option<PcaModel> = None;
        for p in [1usize, 5, 13] {
            let e = engine();
            let ds = e.parallelize(rows.clone(), p, 0).unwrap();
            let m = fit_pca(&e, &ds, 3).unwrap();
            match &reference {
                None => reference = Some(m),
                Some(r) => {
                    for (a, b) in m.explained_variance.iter().zip(&r.explained_variance) {
                        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn errors() {
        let e = engine();
        let ds = e.parallelize(vec![Vector::dense(vec![1.0])], 1, 0).unwrap();
        assert!(fit_pca(&e, &ds, 1).is_err()); // n < 2
        let ds = e
            .parallelize(vec![Vector::dense(vec![1.0]), Vector::dense(vec![2.0])], 1, 0)
            .unwrap();
        assert!(fit_pca(&e, &ds, 2).is_err()); // k > d
        assert!(matches!(
            fit_pca_capped(&e, &ds, 1, 0),
            Err(Error::UnsupportedDimension(_))
        ));
    }
}
