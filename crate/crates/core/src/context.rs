//! Contextual signals for the moment-retrieval and highlight heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterContext;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, dot, Matrix, NORM_EPS};

/// Change vector (C^m) and representativeness (C^h) of one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextSignals {
    pub change_vector: Vec<u8>,
    pub representativeness: Vec<f64>,
}

impl ContextSignals {
    pub fn compute(clip_features: &Matrix, clusters: &ClusterContext) -> Result<Self> {
        Ok(Self {
            change_vector: context_change_vector(&clusters.assignment),
            representativeness: representativeness_vector(clip_features, clusters)?,
        })
    }
}

/// `out[i] = 1` iff clip `i + 1` sits in a different cluster than clip `i`.
/// The last entry is always 0.
pub fn context_change_vector(assignment: &[usize]) -> Vec<u8> {
    let mut out = vec![0u8; assignment.len()];
    for (i, pair) in assignment.windows(2).enumerate() {
        out[i] = u8::from(pair[0] != pair[1]);
    }
    out
}

/// Cosine similarity of every clip to the mean of its own cluster. A clip
/// that forms a cluster on its own is its cluster mean, so it scores 1.
pub fn representativeness_vector(clip_features: &Matrix, ctx: &ClusterContext) -> Result<Vec<f64>> {
    if ctx.assignment.len() != clip_features.rows() {
        return Err(Error::dim(
            "assignment",
            format!(
                "{} assignments for {} clips",
                ctx.assignment.len(),
                clip_features.rows()
            ),
        ));
    }
    let mut sizes = vec![0usize; ctx.features.rows()];
    for &c in &ctx.assignment {
        if c >= sizes.len() {
            return Err(Error::dim(
                "assignment",
                format!("cluster id {c} out of range"),
            ));
        }
        sizes[c] += 1;
    }
    ctx.assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if sizes[c] == 1 {
                return Ok(1.0);
            }
            Ok(cosine_similarity(
                clip_features.row(i),
                ctx.features.row(c),
                NORM_EPS,
            ))
        })
        .collect()
}

/// Parameters of the projection-based saliency head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyHead {
    /// Saliency token, length d.
    pub saliency_token: Vec<f64>,
    /// p x d
    pub proj_token: Matrix,
    /// p x (d + 1)
    pub proj_video: Matrix,
}

impl SaliencyHead {
    /// Zero-mean Gaussian parameters with standard deviation `1/sqrt(d)`.
    pub fn seeded(dim: usize, proj_dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || proj_dim == 0 {
            return Err(Error::InvalidArgument(
                "saliency head needs positive d and p".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let saliency_token = draw(dim);
        let proj_token = Matrix::from_vec(proj_dim, dim, draw(proj_dim * dim))?;
        let proj_video = Matrix::from_vec(proj_dim, dim + 1, draw(proj_dim * (dim + 1)))?;
        Ok(Self {
            saliency_token,
            proj_token,
            proj_video,
        })
    }

    pub fn dim(&self) -> usize {
        self.saliency_token.len()
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_token.rows()
    }

    fn check(&self) -> Result<()> {
        let (d, p) = (self.dim(), self.proj_dim());
        if p == 0 || self.proj_token.cols() != d {
            return Err(Error::dim("proj_token", format!("expected {p}x{d}")));
        }
        if self.proj_video.rows() != p || self.proj_video.cols() != d + 1 {
            return Err(Error::dim("proj_video", format!("expected {p}x{}", d + 1)));
        }
        Ok(())
    }
}

/// `S[i] = (w^s T^s) · (w^cv [T^v_i | C^h_i]) / sqrt(p)`.
pub fn saliency_scores(
    video_tokens: &Matrix,
    representativeness: &[f64],
    head: &SaliencyHead,
) -> Result<Vec<f64>> {
    head.check()?;
    if video_tokens.cols() != head.dim() {
        return Err(Error::dim(
            "video_tokens",
            format!(
                "dimension {} but head expects {}",
                video_tokens.cols(),
                head.dim()
            ),
        ));
    }
    let context_tokens = video_tokens.hstack_column(representativeness)?;
    let p = head.proj_dim();
    let query: Vec<f64> = head
        .proj_token
        .iter_rows()
        .map(|w| dot(w, &head.saliency_token))
        .collect();
    let norm = (p as f64).sqrt();
    Ok(context_tokens
        .iter_rows()
        .map(|token| {
            let key: Vec<f64> = head.proj_video.iter_rows().map(|w| dot(w, token)).collect();
            dot(&query, &key) / norm
        })
        .collect())
}

/// Clip range `[start, end)` covered by anchor bin `q` of `num_bins`: clip `i`
/// falls in bin `floor(i * num_bins / len)`. With more bins than clips, an
/// empty bin borrows the clip at its start.
pub fn anchor_bin(q: usize, num_bins: usize, len: usize) -> (usize, usize) {
    let start = (q * len).div_ceil(num_bins).min(len.saturating_sub(1));
    let end = ((q + 1) * len).div_ceil(num_bins).clamp(start + 1, len);
    (start, end)
}

/// Seeded affine map from a bin value to a d-dimensional anchor embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorProjection {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AnchorProjection {
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (dim.max(1) as f64).sqrt()).expect("finite std");
        let weight = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let bias = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        Self { weight, bias }
    }
}

/// Max of the change vector within each of `num_bins` contiguous bins.
pub fn resample_max(change_vector: &[u8], num_bins: usize) -> Vec<u8> {
    if change_vector.is_empty() {
        return vec![0; num_bins];
    }
    (0..num_bins)
        .map(|q| {
            let (s, e) = anchor_bin(q, num_bins, change_vector.len());
            change_vector[s..e].iter().copied().max().unwrap_or(0)
        })
        .collect()
}

/// Initial anchor embeddings for a moment decoder: the change vector is
/// max-resampled to `num_queries` bins and each bin value `v` becomes
/// `bias + v * weight`.
pub fn anchor_init(
    change_vector: &[u8],
    num_queries: usize,
    projection: &AnchorProjection,
) -> Result<Matrix> {
    if num_queries == 0 {
        return Err(Error::InvalidArgument(
            "num_queries must be positive".into(),
        ));
    }
    let d = projection.weight.len();
    let bins = resample_max(change_vector, num_queries);
    let mut out = Matrix::zeros(num_queries, d);
    for (q, &v) in bins.iter().enumerate() {
        for (j, slot) in out.row_mut(q).iter_mut().enumerate() {
            *slot = projection.bias[j] + f64::from(v) * projection.weight[j];
        }
    }
    Ok(out)
}
