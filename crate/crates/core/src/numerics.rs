//! Dense double-precision kernels shared by every other module.
//!
//! Nothing here allocates more than its output; all functions are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard for vector norms in cosine similarity.
pub const NORM_EPS: f64 = 1e-12;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "matrix",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dim(
                    "matrix",
                    format!("row {i} has {} columns, expected {cols}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Appends one column holding `column` to the right of `self`.
    pub fn hstack_column(&self, column: &[f64]) -> Result<Matrix> {
        if column.len() != self.rows {
            return Err(Error::dim(
                "column",
                format!("length {} for {} rows", column.len(), self.rows),
            ));
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for (row, &extra) in self.iter_rows().zip(column) {
            data.extend_from_slice(row);
            data.push(extra);
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Row means; an empty matrix yields a zero vector.
    pub fn mean_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        if self.rows == 0 {
            return out;
        }
        for row in self.iter_rows() {
            axpy(1.0, row, &mut out);
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity with both norms floored at `eps`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let na = norm(a).max(eps);
    let nb = norm(b).max(eps);
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity together with its gradients with respect to `a` and `b`.
///
/// The gradients are those of the unclamped expression `a·b / (max(|a|,eps) max(|b|,eps))`;
/// a norm below `eps` is treated as the constant `eps`.
pub fn cosine_with_grad(a: &[f64], b: &[f64], eps: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let raw_na = norm(a);
    let raw_nb = norm(b);
    let na = raw_na.max(eps);
    let nb = raw_nb.max(eps);
    let ab = dot(a, b);
    let cos = ab / (na * nb);
    let inv = 1.0 / (na * nb);

    let mut grad_a: Vec<f64> = b.iter().map(|v| v * inv).collect();
    if raw_na > eps {
        axpy(-cos / (na * na), a, &mut grad_a);
    }
    let mut grad_b: Vec<f64> = a.iter().map(|v| v * inv).collect();
    if raw_nb > eps {
        axpy(-cos / (nb * nb), b, &mut grad_b);
    }
    (cos, grad_a, grad_b)
}

/// Softmax down each column (normalized over rows) of `m / tau`, shift-stabilized.
pub fn softmax_columns(m: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for k in 0..m.cols() {
        let max = (0..m.rows())
            .map(|n| m.get(n, k))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for n in 0..m.rows() {
            let e = ((m.get(n, k) - max) / tau).exp();
            out.set(n, k, e);
            total += e;
        }
        for n in 0..m.rows() {
            out.set(n, k, out.get(n, k) / total);
        }
    }
    Ok(out)
}

/// Maximum of each row.
pub fn max_pool_rows(m: &Matrix) -> Vec<f64> {
    m.iter_rows()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Mean of the rows where `mask` is set, divided by the number of set entries.
pub fn masked_mean_rows(features: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != features.rows() {
        return Err(Error::dim(
            "mask",
            format!("length {} for {} rows", mask.len(), features.rows()),
        ));
    }
    let mut out = vec![0.0; features.cols()];
    let mut count = 0usize;
    for (row, _) in features.iter_rows().zip(mask).filter(|(_, &m)| m) {
        axpy(1.0, row, &mut out);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyRelevantSet("mask selects no rows".into()));
    }
    let inv = 1.0 / count as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

/// `log(sum(exp(values)))`, shift-stabilized. Empty input gives negative infinity.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0], NORM_EPS), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0], NORM_EPS), 0.0);
        let c = cosine_similarity(&[3.0, 4.0], &[4.0, 3.0], NORM_EPS);
        assert!((c - 24.0 / 25.0).abs() < 1e-15);
        // zero vector is guarded
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0], NORM_EPS), 0.0);
    }

    #[test]
    fn cosine_gradient_matches_central_differences() {
        let a = [0.3, -1.2, 0.7];
        let b = [1.1, 0.4, -0.2];
        let (_, ga, gb) = cosine_with_grad(&a, &b, NORM_EPS);
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let num = (cosine_similarity(&ap, &b, NORM_EPS) - cosine_similarity(&am, &b, NORM_EPS))
                / (2.0 * h);
            assert!((num - ga[i]).abs() < 1e-8);
            let mut bp = b;
            let mut bm = b;
            bp[i] += h;
            bm[i] -= h;
            let num = (cosine_similarity(&a, &bp, NORM_EPS) - cosine_similarity(&a, &bm, NORM_EPS))
                / (2.0 * h);
            assert!((num - gb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::from_rows(&[vec![2.0], vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        let s = softmax_columns(&m, 0.5).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-15));

        let m = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let s = softmax_columns(&m, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((s.get(0, 0) - e / (e + 1.0)).abs() < 1e-15);
        assert!((s.get(1, 0) - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((s.get(0, 0) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_small_temperature_is_one_hot_at_argmax() {
        let m = random_matrix(6, 4, 7);
        let s = softmax_columns(&m, 1e-4).unwrap();
        for k in 0..4 {
            let argmax = (0..6)
                .max_by(|&a, &b| m.get(a, k).partial_cmp(&m.get(b, k)).unwrap())
                .unwrap();
            for n in 0..6 {
                let expected = if n == argmax { 1.0 } else { 0.0 };
                assert!((s.get(n, k) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_rejects_nonpositive_tau() {
        let m = Matrix::zeros(2, 2);
        assert!(softmax_columns(&m, 0.0).is_err());
        assert!(softmax_columns(&m, -1.0).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let m = Matrix::from_rows(&[vec![0.3], vec![-0.1]]).unwrap();
        assert_eq!(max_pool_rows(&m), vec![0.3, -0.1]);
        let m = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        assert_eq!(max_pool_rows(&m), vec![0.8, 0.5]);
        for seed in 0..100 {
            let m = random_matrix(5, 3, seed);
            let pooled = max_pool_rows(&m);
            for n in 0..5 {
                let mut best = m.get(n, 0);
                for k in 1..3 {
                    if m.get(n, k) > best {
                        best = m.get(n, k);
                    }
                }
                assert_eq!(pooled[n], best);
            }
        }
    }

    #[test]
    fn masked_mean_examples() {
        let f = random_matrix(5, 3, 1);
        let all = masked_mean_rows(&f, &[true; 5]).unwrap();
        let plain = f.mean_rows();
        for (a, b) in all.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-15);
        }
        let one_hot = masked_mean_rows(&f, &[false, false, true, false, false]).unwrap();
        assert_eq!(one_hot, f.row(2).to_vec());

        let mask = [true, false, true, true, false];
        let got = masked_mean_rows(&f, &mask).unwrap();
        for c in 0..3 {
            let sum = f.get(0, c) + f.get(2, c) + f.get(3, c);
            assert!((got[c] - sum / 3.0).abs() < 1e-12);
        }
        assert!(matches!(
            masked_mean_rows(&f, &[false; 5]),
            Err(Error::EmptyRelevantSet(_))
        ));
    }

    proptest! {
        #[test]
        fn softmax_columns_are_distributions_and_shift_invariant(
            values in prop::collection::vec(-1.0f64..1.0, 12),
            shift in -10.0f64..10.0,
            tau in 0.1f64..2.0,
        ) {
            let m = Matrix::from_vec(4, 3, values).unwrap();
            let s = softmax_columns(&m, tau).unwrap();
            for k in 0..3 {
                let total: f64 = (0..4).map(|n| s.get(n, k)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            prop_assert!(s.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
            let mut shifted = m.clone();
            for n in 0..4 {
                shifted.set(n, 1, m.get(n, 1) + shift);
            }
            let t = softmax_columns(&shifted, tau).unwrap();
            for (a, b) in s.as_slice().iter().zip(t.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let pooled = max_pool_rows(&s);
            prop_assert!(pooled.iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn cosine_is_scale_invariant(
            a in prop::collection::vec(-3.0f64..3.0, 6),
            b in prop::collection::vec(-3.0f64..3.0, 6),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * beta).collect();
            let c0 = cosine_similarity(&a, &b, NORM_EPS);
            let c1 = cosine_similarity(&sa, &sb, NORM_EPS);
            prop_assert!((c0 - c1).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&c0));
        }
    }
}
