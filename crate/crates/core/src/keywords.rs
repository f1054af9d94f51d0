//! Keyword weights from the similarity between query words and video clusters.
//!
//! `M[n][k]` is the cosine similarity of word `n` to cluster `k`. Each cluster
//! column is softmaxed over the words at temperature `tau`, and a word's weight
//! is its best share across clusters. The weighted text features are the word
//! rows scaled by their weights.

use serde::Serialize;

use crate::clustering::ClusterContext;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, max_pool_rows, softmax_columns, Matrix, NORM_EPS};

pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordWeights {
    /// N x c cosine similarities.
    pub similarity: Matrix,
    /// Per-word weight in (0, 1].
    pub weights: Vec<f64>,
    /// N x d keyword-weighted text features.
    pub weighted_text: Matrix,
    pub tau: f64,
}

impl KeywordWeights {
    pub fn compute(text_features: &Matrix, clusters: &ClusterContext, tau: f64) -> Result<Self> {
        let similarity = similarity_matrix(text_features, &clusters.features)?;
        let weights = keyword_weights(&similarity, tau)?;
        let weighted_text = apply_weights(&weights, text_features)?;
        Ok(Self {
            similarity,
            weights,
            weighted_text,
            tau,
        })
    }
}

/// Report line for the `keywords` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct KeywordReport {
    pub video_id: String,
    pub words: Vec<String>,
    pub weights: Vec<f64>,
}

pub fn similarity_matrix(text_features: &Matrix, clustered_features: &Matrix) -> Result<Matrix> {
    if text_features.cols() != clustered_features.cols() {
        return Err(Error::dim(
            "clustered_features",
            format!(
                "dimension {} differs from text dimension {}",
                clustered_features.cols(),
                text_features.cols()
            ),
        ));
    }
    let (n, c) = (text_features.rows(), clustered_features.rows());
    let mut m = Matrix::zeros(n, c);
    for i in 0..n {
        for k in 0..c {
            m.set(
                i,
                k,
                cosine_similarity(text_features.row(i), clustered_features.row(k), NORM_EPS),
            );
        }
    }
    Ok(m)
}

pub fn keyword_weights(similarity: &Matrix, tau: f64) -> Result<Vec<f64>> {
    Ok(max_pool_rows(&softmax_columns(similarity, tau)?))
}

pub fn apply_weights(weights: &[f64], text_features: &Matrix) -> Result<Matrix> {
    if weights.len() != text_features.rows() {
        return Err(Error::dim(
            "weights",
            format!(
                "{} weights for {} words",
                weights.len(),
                text_features.rows()
            ),
        ));
    }
    let mut out = text_features.clone();
    for (i, &w) in weights.iter().enumerate() {
        out.row_mut(i).iter_mut().for_each(|v| *v *= w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let text = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let clusters = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![3.0, -3.0, 0.0]]).unwrap();
        let m = similarity_matrix(&text, &clusters).unwrap();
        assert!((m.get(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(m.row(1), &[0.0, 0.0]);

        let bad = Matrix::zeros(2, 2);
        assert!(similarity_matrix(&text, &bad).is_err());
    }

    #[test]
    fn similarity_matches_entrywise_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let text = random(3, 4, &mut rng);
        let clusters = random(2, 4, &mut rng);
        let m = similarity_matrix(&text, &clusters).unwrap();
        for n in 0..3 {
            for k in 0..2 {
                let (a, b) = (text.row(n), clusters.row(k));
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((m.get(n, k) - dot / (na * nb)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_examples() {
        for n in 1..6 {
            let m = Matrix::from_vec(n, 3, vec![0.4; n * 3]).unwrap();
            let w = keyword_weights(&m, 0.1).unwrap();
            assert!(w.iter().all(|&v| (v - 1.0 / n as f64).abs() < 1e-15));
        }

        let m = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let w = keyword_weights(&m, 1.0).unwrap();
        let expected = 0.9f64.exp() / (0.9f64.exp() + 0.1f64.exp());
        assert!((w[0] - expected).abs() < 1e-15 && (w[1] - expected).abs() < 1e-15);
        assert!((expected - 0.690).abs() < 1e-3);

        assert!(keyword_weights(&m, 0.0).is_err());
    }

    #[test]
    fn peaked_word_outweighs_uniform_word() {
        // the uniform and the peaked word share the same mean similarity and
        // every competitor word scores the same against every cluster; with
        // two clusters the construction is symmetric and the weights tie
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let c = rng.random_range(3..7);
            let mean: f64 = rng.random_range(-0.2..0.4);
            let peak = mean + rng.random_range(0.1..0.5);
            let hot = rng.random_range(0..c);
            let rest = (mean * c as f64 - peak) / (c - 1) as f64;
            let competitors = rng.random_range(0..4);
            let mut rows = vec![vec![mean; c]];
            rows.push((0..c).map(|k| if k == hot { peak } else { rest }).collect());
            let shared: Vec<Vec<f64>> = (0..competitors)
                .map(|_| vec![rng.random_range(-1.0..1.0); c])
                .collect();
            rows.extend(shared);
            let m = Matrix::from_rows(&rows).unwrap();
            let w = keyword_weights(&m, 0.1).unwrap();
            assert!(w[1] > w[0], "{w:?}");
        }
    }

    #[test]
    fn apply_weights_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let text = random(4, 3, &mut rng);
        assert_eq!(apply_weights(&[1.0; 4], &text).unwrap(), text);
        let half = apply_weights(&[0.5; 4], &text).unwrap();
        for (h, t) in half.as_slice().iter().zip(text.as_slice()) {
            assert_eq!(*h, 0.5 * t);
        }
        let w = [0.3, 0.9, 0.01, 0.5];
        let out = apply_weights(&w, &text).unwrap();
        for n in 0..4 {
            for j in 0..3 {
                assert_eq!(out.get(n, j), w[n] * text.get(n, j));
            }
        }
        assert!(apply_weights(&[1.0; 3], &text).is_err());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn weights_invariant_to_rescaling_and_column_permutation(
            text in arb_matrix(4, 5),
            clusters in arb_matrix(3, 5),
            scale in prop::collection::vec(0.1f64..10.0, 7),
        ) {
            let w0 = keyword_weights(&similarity_matrix(&text, &clusters).unwrap(), 0.1).unwrap();
            prop_assert!(w0.iter().all(|&v| v > 0.0 && v <= 1.0));

            let mut t2 = text.clone();
            for n in 0..4 {
                t2.row_mut(n).iter_mut().for_each(|v| *v *= scale[n]);
            }
            let mut c2 = clusters.clone();
            for k in 0..3 {
                c2.row_mut(k).iter_mut().for_each(|v| *v *= scale[4 + k]);
            }
            let w1 = keyword_weights(&similarity_matrix(&t2, &c2).unwrap(), 0.1).unwrap();
            for (a, b) in w0.iter().zip(&w1) {
                prop_assert!((a - b).abs() < 1e-12);
            }

            let permuted = clusters.select_rows(&[2, 0, 1]);
            let w2 = keyword_weights(&similarity_matrix(&text, &permuted).unwrap(), 0.1).unwrap();
            for (a, b) in w0.iter().zip(&w2) {
                prop_assert!((a - b).abs() < 1e-15);
            }

            let order = [3, 1, 0, 2];
            let w3 = keyword_weights(
                &similarity_matrix(&text.select_rows(&order), &clusters).unwrap(),
                0.1,
            ).unwrap();
            for (pos, &n) in order.iter().enumerate() {
                prop_assert!((w3[pos] - w0[n]).abs() < 1e-15);
            }
        }

        #[test]
        fn weight_is_monotone_in_own_similarity(
            m in arb_matrix(4, 3),
            n in 0usize..4,
            k in 0usize..3,
            bump in 0.0f64..0.5,
        ) {
            let w0 = keyword_weights(&m, 0.1).unwrap();
            let mut m2 = m.clone();
            m2.set(n, k, m.get(n, k) + bump);
            let w1 = keyword_weights(&m2, 0.1).unwrap();
            prop_assert!(w1[n] >= w0[n] - 1e-15);
        }
    }
}
