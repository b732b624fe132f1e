//! Local dense/sparse vectors, dense matrices, and the small numeric kernels
//! the algorithms need: dot, axpy, Gram accumulation, SPD solve, and a Jacobi
//! symmetric eigensolver.
//!
//! Everything here is generic over the scalar type; the crate root exports
//! `f64` aliases which the algorithm modules use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar bound for all numeric kernels. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    /// Lossless-enough conversion from `f64` for tolerances and literals.
    fn of(x: f64) -> Self {
        Self::from(x).expect("scalar conversion")
    }
}

impl<T> Scalar for T where T: Float + NumAssign + Sum + Send + Sync + Debug + Display + 'static {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> DenseVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        DenseVector { values }
    }

    pub fn zeros(d: usize) -> Self {
        DenseVector { values: vec![S::zero(); d] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &DenseVector<S>) -> Result<S> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "dot: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// self += alpha * x
    pub fn axpy(&mut self, alpha: S, x: &DenseVector<S>) -> Result<()> {
        if self.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "axpy: {} vs {}",
                self.len(),
                x.len()
            )));
        }
        for (y, &xi) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * xi;
        }
        Ok(())
    }

    /// self += alpha * x, sparse-aware.
    pub fn axpy_vec(&mut self, alpha: S, x: &Vector<S>) -> Result<()> {
        if self.len() != x.dim() {
            return Err(Error::DimensionMismatch(format!(
                "axpy: {} vs {}",
                self.len(),
                x.dim()
            )));
        }
        for (i, v) in x.iter_nonzero() {
            self.values[i] += alpha * v;
        }
        Ok(())
    }

    pub fn scal(&mut self, alpha: S) {
        for v in self.values.iter_mut() {
            *v *= alpha;
        }
    }

    pub fn norm2(&self) -> S {
        self.values.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn squared_distance(&self, other: &DenseVector<S>) -> Result<S> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "squared_distance: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector<S> {
    size: usize,
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseVector<S> {
    /// Indices must be strictly increasing and < size. Explicit zeros are
    /// permitted but not required.
    pub fn new(size: usize, indices: Vec<usize>, values: Vec<S>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "sparse vector: {} indices vs {} values",
                indices.len(),
                values.len()
            )));
        }
        for (k, &i) in indices.iter().enumerate() {
            if i >= size {
                return Err(Error::InvalidArgument(format!(
                    "sparse vector: index {} out of range for size {}",
                    i, size
                )));
            }
            if k > 0 && indices[k - 1] >= i {
                return Err(Error::InvalidArgument(format!(
                    "sparse vector: indices not strictly increasing at position {}",
                    k
                )));
            }
        }
        Ok(SparseVector { size, indices, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }
}

/// A vector that is either dense or sparse. All algorithms accept this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Vector<S> {
    Dense(DenseVector<S>),
    Sparse(SparseVector<S>),
}

impl<S: Scalar> Vector<S> {
    pub fn dense(values: Vec<S>) -> Self {
        Vector::Dense(DenseVector::new(values))
    }

    pub fn sparse(size: usize, indices: Vec<usize>, values: Vec<S>) -> Result<Self> {
        Ok(Vector::Sparse(SparseVector::new(size, indices, values)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Vector::Dense(v) => v.len(),
            Vector::Sparse(v) => v.size,
        }
    }

    pub fn get(&self, i: usize) -> S {
        match self {
            Vector::Dense(v) => v.values[i],
            Vector::Sparse(v) => match v.indices.binary_search(&i) {
                Ok(k) => v.values[k],
                Err(_) => S::zero(),
            },
        }
    }

    /// Count of stored values that are nonzero.
    pub fn nnz(&self) -> usize {
        match self {
            Vector::Dense(v) => v.values.iter().filter(|&&x| x != S::zero()).count(),
            Vector::Sparse(v) => v.values.iter().filter(|&&x| x != S::zero()).count(),
        }
    }

    /// Iterate explicitly stored entries (all entries for dense vectors).
    pub fn iter_nonzero(&self) -> Box<dyn Iterator<Item = (usize, S)> + '_> {
        match self {
            Vector::Dense(v) => Box::new(v.values.iter().copied().enumerate()),
            Vector::Sparse(v) => {
                Box::new(v.indices.iter().copied().zip(v.values.iter().copied()))
            }
        }
    }

    pub fn to_dense(&self) -> DenseVector<S> {
        match self {
            Vector::Dense(v) => v.clone(),
            Vector::Sparse(v) => {
                let mut out = DenseVector::zeros(v.size);
                for (&i, &x) in v.indices.iter().zip(&v.values) {
                    out.values[i] = x;
                }
                out
            }
        }
    }

    pub fn dot(&self, other: &Vector<S>) -> Result<S> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dot: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        match (self, other) {
            (Vector::Dense(a), Vector::Dense(b)) => a.dot(b),
            (Vector::Sparse(a), Vector::Sparse(b)) => {
                // index merge
                let mut acc = S::zero();
                let (mut i, mut j) = (0usize, 0usize);
                while i < a.indices.len() && j < b.indices.len() {
                    match a.indices[i].cmp(&b.indices[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            acc += a.values[i] * b.values[j];
                            i += 1;
                            j += 1;
                        }
                    }
                }
                Ok(acc)
            }
            (Vector::Sparse(a), Vector::Dense(b)) | (Vector::Dense(b), Vector::Sparse(a)) => {
                let mut acc = S::zero();
                for (&i, &x) in a.indices.iter().zip(&a.values) {
                    acc += x * b.values[i];
                }
                Ok(acc)
            }
        }
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, values: vec![S::zero(); rows * cols] }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix: {} values for {}x{}",
                values.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.values[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.values[c * self.rows + r] = v;
    }

    pub fn column(&self, c: usize) -> &[S] {
        &self.values[c * self.rows..(c + 1) * self.rows]
    }

    pub fn add_assign(&mut self, other: &DenseMatrix<S>) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// y = A x
    pub fn matvec(&self, x: &DenseVector<S>) -> Result<DenseVector<S>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {}x{} times {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut y = DenseVector::zeros(self.rows);
        for c in 0..self.cols {
            let xc = x.values[c];
            let col = self.column(c);
            for r in 0..self.rows {
                y.values[r] += col[r] * xc;
            }
        }
        Ok(y)
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &DenseVector<S>) -> Result<DenseVector<S>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "matvec_t: {}x{} transposed times {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut y = DenseVector::zeros(self.cols);
        for c in 0..self.cols {
            let col = self.column(c);
            let mut acc = S::zero();
            for r in 0..self.rows {
                acc += col[r] * x.values[r];
            }
            y.values[c] = acc;
        }
        Ok(y)
    }

    pub fn frobenius_norm(&self) -> S {
        self.values.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn max_asymmetry(&self) -> S {
        let mut worst = S::zero();
        for c in 0..self.cols {
            for r in 0..c {
                let d = (self.get(r, c) - self.get(c, r)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }
}

/// Rank-one update G += x x^T for a row, writing (i,j) and (j,i) with the same
/// product so the accumulated matrix stays symmetric to the bit.
pub fn gram_accumulate<S: Scalar>(gram: &mut DenseMatrix<S>, x: &Vector<S>) {
    let entries: Vec<(usize, S)> = x.iter_nonzero().filter(|&(_, v)| v != S::zero()).collect();
    for (a, &(i, vi)) in entries.iter().enumerate() {
        gram.values[i * gram.rows + i] += vi * vi;
        for &(j, vj) in &entries[a + 1..] {
            let p = vi * vj;
            gram.values[j * gram.rows + i] += p;
            gram.values[i * gram.rows + j] += p;
        }
    }
}

/// Gram matrix of a set of rows: sum of x x^T. Symmetric to the bit.
pub fn gram<S: Scalar>(rows: &[Vector<S>], dim: usize) -> Result<DenseMatrix<S>> {
    let mut g = DenseMatrix::zeros(dim, dim);
    for x in rows {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "gram: row of dim {} in dim-{} set",
                x.dim(),
                dim
            )));
        }
        gram_accumulate(&mut g, x);
    }
    Ok(g)
}

/// Solve A x = b for symmetric positive definite A via Cholesky.
pub fn cholesky_solve<S: Scalar>(a: &DenseMatrix<S>, b: &DenseVector<S>) -> Result<DenseVector<S>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky_solve: {}x{} with rhs {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    // lower-triangular factor, column-major
    let mut l = vec![S::zero(); n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let ljk = l[k * n + j];
            d -= ljk * ljk;
        }
        if !(d > S::zero()) || !d.is_finite() {
            return Err(Error::SingularMatrix(format!(
                "non-positive pivot {} at column {}",
                d, j
            )));
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[k * n + i] * l[k * n + j];
            }
            l[j * n + i] = s / dj;
        }
    }
    // L y = b
    let mut y = b.values.clone();
    for i in 0..n {
        for k in 0..i {
            let t = l[k * n + i] * y[k];
            y[i] = y[i] - t;
        }
        y[i] = y[i] / l[i * n + i];
    }
    // L^T x = y
    let mut x = y;
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[i * n + k] * x[k];
            x[i] = x[i] - t;
        }
        x[i] = x[i] / l[i * n + i];
    }
    Ok(DenseVector::new(x))
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and eigenvectors as matrix columns,
/// sign-canonicalized so each column's largest-magnitude entry is positive
/// (ties break to the lowest index).
pub fn sym_eig<S: Scalar>(a: &DenseMatrix<S>) -> Result<(Vec<S>, DenseMatrix<S>)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::InvalidArgument(format!(
            "sym_eig: matrix is {}x{}",
            a.rows, a.cols
        )));
    }
    let scale = a.frobenius_norm().max(S::one());
    if a.max_asymmetry() > S::of(1e-10) * scale {
        return Err(Error::InvalidArgument(format!(
            "sym_eig: input asymmetric by {}",
            a.max_asymmetry()
        )));
    }

    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let norm = a.frobenius_norm();
    let tol = S::of(1e-12) * norm;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = S::zero();
        for q in 0..n {
            for p in 0..q {
                let x = m.get(p, q);
                off += x * x;
            }
        }
        if (off + off).sqrt() < tol || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == S::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (S::of(2.0) * apq);
                let t = {
                    let s = if theta >= S::zero() { S::one() } else { -S::one() };
                    s / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let eig: Vec<S> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| eig[j].partial_cmp(&eig[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut values = Vec::with_capacity(n);
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig[src]);
        let mut col: Vec<S> = (0..n).map(|r| v.get(r, src)).collect();
        // canonical sign
        let mut best = 0usize;
        for (k, &x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = k;
            }
        }
        if col[best] < S::zero() {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
        for (r, &x) in col.iter().enumerate() {
            vectors.set(r, dst, x);
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vector<f64>;

    #[test]
    fn dot_dense() {
        let a = V::dense(vec![1.0, 2.0, 3.0]);
        let b = V::dense(vec![4.0, 5.0, 6.0]);
        assert_eq!(a.dot(&b).unwrap(), 32.0);
    }

    #[test]
    fn dot_sparse_dense() {
        let a = V::sparse(6, vec![0, 5], vec![1.0, 2.0]).unwrap();
        let b = V::dense(vec![1.0; 6]);
        assert_eq!(a.dot(&b).unwrap(), 3.0);
    }

    #[test]
    fn dot_mismatch_errors() {
        let a = V::dense(vec![1.0]);
        let b = V::dense(vec![1.0, 2.0]);
        assert!(matches!(a.dot(&b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dot_sparse_matches_densified() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d = 100;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..d {
            if rng.gen_bool(0.2) {
                indices.push(i);
                values.push(rng.gen_range(-1.0..1.0));
            }
        }
        let sparse = V::sparse(d, indices, values).unwrap();
        let dense = Vector::Dense(sparse.to_dense());
        let other = V::dense((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let a = sparse.dot(&other).unwrap();
        let b = dense.dot(&other).unwrap();
        assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn dot_symmetry() {
        let a = V::dense(vec![0.1, -2.5, 3.75]);
        let b = V::dense(vec![7.0, 0.25, -1.125]);
        assert_eq!(a.dot(&b).unwrap(), b.dot(&a).unwrap());
    }

    #[test]
    fn sparse_rejects_bad_indices() {
        assert!(V::sparse(3, vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(V::sparse(3, vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(V::sparse(3, vec![3], vec![1.0]).is_err());
    }

    #[test]
    fn cholesky_identity() {
        let a = DenseMatrix::<f64>::identity(3);
        let b = DenseVector::new(vec![1.0, 2.0, 3.0]);
        let x = cholesky_solve(&a, &b).unwrap();
        assert_eq!(x.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn cholesky_diagonal() {
        let a = DenseMatrix::from_values(2, 2, vec![4.0, 0.0, 0.0, 9.0]).unwrap();
        let b = DenseVector::new(vec![8.0, 27.0]);
        let x = cholesky_solve(&a, &b).unwrap();
        assert!((x.values[0] - 2.0).abs() < 1e-12);
        assert!((x.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_random_spd_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        // A = M^T M + I is SPD
        let m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[i * n + k] * m[j * n + k];
                }
                a.set(i, j, s + if i == j { 1.0 } else { 0.0 });
            }
        }
        let b = DenseVector::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let x = cholesky_solve(&a, &b).unwrap();
        let ax = a.matvec(&x).unwrap();
        let binf = b.values.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            assert!((ax.values[i] - b.values[i]).abs() <= 1e-8 * (1.0 + binf));
        }
    }

    #[test]
    fn cholesky_rejects_non_spd() {
        let a = DenseMatrix::from_values(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let b = DenseVector::new(vec![1.0, 1.0]);
        assert!(matches!(cholesky_solve(&a, &b), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn sym_eig_diagonal() {
        let a = DenseMatrix::from_values(
            3,
            3,
            vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0],
        )
        .unwrap();
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 2.0).abs() < 1e-10);
        assert!((vals[2] - 1.0).abs() < 1e-10);
        // axis eigenvectors with positive sign
        assert!((vecs.get(0, 0) - 1.0).abs() < 1e-10);
        assert!((vecs.get(2, 1) - 1.0).abs() < 1e-10);
        assert!((vecs.get(1, 2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sym_eig_2x2_hand_computed() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1, first eigenvector (1,1)/sqrt(2)
        let a = DenseMatrix::from_values(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-10);
        let s = 1.0 / 2.0f64.sqrt();
        assert!((vecs.get(0, 0) - s).abs() < 1e-8);
        assert!((vecs.get(1, 0) - s).abs() < 1e-8);
    }

    #[test]
    fn sym_eig_reconstruction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let (vals, vecs) = sym_eig(&a).unwrap();
        // V L V^T == A
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += vecs.get(i, k) * vals[k] * vecs.get(j, k);
                }
                assert!((s - a.get(i, j)).abs() < 1e-8);
            }
        }
        // orthonormal columns
        for p in 0..n {
            for q in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += vecs.get(k, p) * vecs.get(k, q);
                }
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = DenseMatrix::from_values(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gram_is_bitwise_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<V> = (0..20)
            .map(|_| V::dense((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let g = gram(&rows, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }
}
