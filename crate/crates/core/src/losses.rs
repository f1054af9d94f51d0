//! Keyword-aware contrastive losses with hand-derived gradients.
//!
//! Both losses compare clip (or pooled video) features with the mean of the
//! keyword-weighted word features `G^wt` under plain cosine similarity; no
//! temperature is applied inside the softmax ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, cosine_with_grad, dot, log_sum_exp, norm, Matrix, NORM_EPS};

pub const DEFAULT_LAMBDA_KW: f64 = 0.3;

/// One video-query pair as seen by the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSample {
    /// L x d
    pub clip_features: Matrix,
    /// N x d keyword-weighted word features.
    pub weighted_text: Matrix,
    /// Ground-truth clip mask (r^b); its set entries form R_i.
    pub relevance: Vec<bool>,
}

impl BatchSample {
    pub fn relevant_set(&self) -> Vec<usize> {
        (0..self.relevance.len())
            .filter(|&j| self.relevance[j])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchInputs {
    pub samples: Vec<BatchSample>,
}

impl BatchInputs {
    pub fn new(samples: Vec<BatchSample>) -> Result<Self> {
        let batch = Self { samples };
        batch.validate()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Err(Error::InvalidArgument("batch is empty".into()));
        };
        let d = first.clip_features.cols();
        for (i, s) in self.samples.iter().enumerate() {
            if s.clip_features.rows() == 0 || s.weighted_text.rows() == 0 {
                return Err(Error::dim(
                    "batch",
                    format!("sample {i} has no clips or no words"),
                ));
            }
            if s.clip_features.cols() != d || s.weighted_text.cols() != d {
                return Err(Error::dim(
                    "batch",
                    format!("sample {i} does not use d = {d}"),
                ));
            }
            if s.relevance.len() != s.clip_features.rows() {
                return Err(Error::dim(
                    "relevance",
                    format!(
                        "sample {i}: mask length {} for {} clips",
                        s.relevance.len(),
                        s.clip_features.rows()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// How the relevant clips are pooled into one video vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VideoPooling {
    /// Mean over the relevant clips only (unit-normalized rows).
    #[default]
    MaskedMean,
    /// Irrelevant clips zeroed, then the mean over all L rows.
    ZeroFillMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossOptions {
    pub pooling: VideoPooling,
    /// Drop samples without relevant clips from the video-keyword loss
    /// instead of failing.
    pub skip_empty_video: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSample {
    pub index: usize,
    pub reason: String,
}

/// Loss value with gradients shaped like the batch inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub grad_clips: Vec<Matrix>,
    pub grad_text: Vec<Matrix>,
    pub skipped: Vec<SkippedSample>,
}

impl LossReport {
    fn zeros(batch: &BatchInputs) -> Self {
        Self {
            value: 0.0,
            grad_clips: batch
                .samples
                .iter()
                .map(|s| Matrix::zeros(s.clip_features.rows(), s.clip_features.cols()))
                .collect(),
            grad_text: batch
                .samples
                .iter()
                .map(|s| Matrix::zeros(s.weighted_text.rows(), s.weighted_text.cols()))
                .collect(),
            skipped: Vec::new(),
        }
    }

    /// Elementwise sum of values and gradients.
    pub fn combine(mut self, other: LossReport) -> LossReport {
        self.value += other.value;
        for (a, b) in self.grad_clips.iter_mut().zip(&other.grad_clips) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        for (a, b) in self.grad_text.iter_mut().zip(&other.grad_text) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        self.skipped.extend(other.skipped);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_clips.iter().all(Matrix::is_finite)
            && self.grad_text.iter().all(Matrix::is_finite)
    }
}

/// Mean of the word rows (G^wt).
pub fn pooled_text(weighted_text: &Matrix) -> Vec<f64> {
    weighted_text.mean_rows()
}

fn spread_text_grad(grad_pooled: &[f64], grad_text: &mut Matrix) {
    let inv = 1.0 / grad_text.rows() as f64;
    for n in 0..grad_text.rows() {
        axpy(inv, grad_pooled, grad_text.row_mut(n));
    }
}

/// Clip-keyword loss: for each video, the negative log share of softmax mass
/// that its relevant clips receive when every clip is scored by cosine
/// similarity to `G^wt`. Samples without relevant clips are skipped.
pub fn clip_keyword_loss(batch: &BatchInputs) -> Result<LossReport> {
    batch.validate()?;
    let mut report = LossReport::zeros(batch);
    let counted: Vec<usize> = (0..batch.len())
        .filter(|&i| {
            let empty = !batch.samples[i].relevance.iter().any(|&r| r);
            if empty {
                report.skipped.push(SkippedSample {
                    index: i,
                    reason: "clip-keyword: no relevant clips".into(),
                });
            }
            !empty
        })
        .collect();
    if counted.is_empty() {
        return Err(Error::EmptyRelevantSet(
            "every sample lacks relevant clips; clip-keyword loss is undefined".into(),
        ));
    }
    let scale = 1.0 / counted.len() as f64;

    for &i in &counted {
        let sample = &batch.samples[i];
        let g = pooled_text(&sample.weighted_text);
        let l = sample.clip_features.rows();
        let mut sims = Vec::with_capacity(l);
        let mut grad_g = vec![0.0; g.len()];
        let mut grads_x = Vec::with_capacity(l);
        let mut grads_g = Vec::with_capacity(l);
        for j in 0..l {
            let (s, ga, gb) = cosine_with_grad(sample.clip_features.row(j), &g, NORM_EPS);
            sims.push(s);
            grads_x.push(ga);
            grads_g.push(gb);
        }
        let lse_all = log_sum_exp(sims.iter().copied());
        let lse_rel = log_sum_exp(
            sims.iter()
                .zip(&sample.relevance)
                .filter(|(_, &r)| r)
                .map(|(&s, _)| s),
        );
        report.value += scale * (lse_all - lse_rel);

        for j in 0..l {
            let p_all = (sims[j] - lse_all).exp();
            let p_rel = if sample.relevance[j] {
                (sims[j] - lse_rel).exp()
            } else {
                0.0
            };
            let c = scale * (p_all - p_rel);
            axpy(c, &grads_x[j], report.grad_clips[i].row_mut(j));
            axpy(c, &grads_g[j], &mut grad_g);
        }
        spread_text_grad(&grad_g, &mut report.grad_text[i]);
    }
    Ok(report)
}

/// Pooled video vector (G^v) and the divisor used to form it. Clip rows are
/// unit-normalized before pooling, so G^v depends only on clip directions.
fn pooled_video(sample: &BatchSample, pooling: VideoPooling) -> Option<(Vec<f64>, f64)> {
    let count = sample.relevance.iter().filter(|&&r| r).count();
    if count == 0 {
        return None;
    }
    let divisor = match pooling {
        VideoPooling::MaskedMean => count as f64,
        VideoPooling::ZeroFillMean => sample.relevance.len() as f64,
    };
    let mut sum = vec![0.0; sample.clip_features.cols()];
    for (row, _) in sample
        .clip_features
        .iter_rows()
        .zip(&sample.relevance)
        .filter(|(_, &r)| r)
    {
        axpy(1.0 / norm(row).max(NORM_EPS), row, &mut sum);
    }
    sum.iter_mut().for_each(|v| *v /= divisor);
    Some((sum, divisor))
}

pub fn video_keyword_loss(batch: &BatchInputs) -> Result<LossReport> {
    video_keyword_loss_with(batch, LossOptions::default())
}

/// Video-keyword loss: an InfoNCE over the batch where each query's pooled
/// text must pick out its own pooled relevant-clip video among all videos.
pub fn video_keyword_loss_with(batch: &BatchInputs, options: LossOptions) -> Result<LossReport> {
    batch.validate()?;
    let mut report = LossReport::zeros(batch);
    let mut active = Vec::new();
    let mut videos = Vec::new();
    for (i, sample) in batch.samples.iter().enumerate() {
        match pooled_video(sample, options.pooling) {
            Some(v) => {
                active.push(i);
                videos.push(v);
            }
            None if options.skip_empty_video => report.skipped.push(SkippedSample {
                index: i,
                reason: "video-keyword: no relevant clips".into(),
            }),
            None => {
                return Err(Error::EmptyRelevantSet(format!(
                    "sample {i} has no relevant clips for the video-keyword loss"
                )))
            }
        }
    }
    if active.is_empty() {
        return Err(Error::EmptyRelevantSet(
            "every sample lacks relevant clips; video-keyword loss is undefined".into(),
        ));
    }
    let b = active.len();
    let scale = 1.0 / b as f64;
    let texts: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| pooled_text(&batch.samples[i].weighted_text))
        .collect();
    let d = texts[0].len();
    let mut grad_video = vec![vec![0.0; d]; b];
    let mut grad_pooled_text = vec![vec![0.0; d]; b];

    // column q: every video against text q
    for q in 0..b {
        let mut sims = Vec::with_capacity(b);
        let mut partials = Vec::with_capacity(b);
        for (video, _) in &videos {
            let (s, ga, gb) = cosine_with_grad(video, &texts[q], NORM_EPS);
            sims.push(s);
            partials.push((ga, gb));
        }
        let lse = log_sum_exp(sims.iter().copied());
        report.value += scale * (lse - sims[q]);
        for j in 0..b {
            let indicator = if j == q { 1.0 } else { 0.0 };
            let c = scale * ((sims[j] - lse).exp() - indicator);
            axpy(c, &partials[j].0, &mut grad_video[j]);
            axpy(c, &partials[j].1, &mut grad_pooled_text[q]);
        }
    }

    for (slot, &i) in active.iter().enumerate() {
        let sample = &batch.samples[i];
        let inv = 1.0 / videos[slot].1;
        for j in 0..sample.relevance.len() {
            if sample.relevance[j] {
                let row = sample.clip_features.row(j);
                let n = norm(row);
                let g = &grad_video[slot];
                let out = report.grad_clips[i].row_mut(j);
                if n > NORM_EPS {
                    // d(x/|x|)/dx = (I - u u^T) / |x|
                    let proj = dot(row, g) / (n * n);
                    for ((o, &gk), &xk) in out.iter_mut().zip(g).zip(row) {
                        *o += inv * (gk - proj * xk) / n;
                    }
                } else {
                    axpy(inv / NORM_EPS, g, out);
                }
            }
        }
        spread_text_grad(&grad_pooled_text[slot], &mut report.grad_text[i]);
    }
    Ok(report)
}

/// Sum of the clip-keyword and video-keyword losses.
pub fn keyword_loss(batch: &BatchInputs) -> Result<LossReport> {
    keyword_loss_with(batch, LossOptions::default())
}

pub fn keyword_loss_with(batch: &BatchInputs, options: LossOptions) -> Result<LossReport> {
    Ok(clip_keyword_loss(batch)?.combine(video_keyword_loss_with(batch, options)?))
}

/// `l_mr + l_hd + lambda_kw * l_kw`
pub fn total_loss(l_mr: f64, l_hd: f64, l_kw: f64, lambda_kw: f64) -> f64 {
    l_mr + l_hd + lambda_kw * l_kw
}

/// Random batch for gradient checks and tests: Gaussian features and a
/// relevant set that is neither empty nor the whole video (when L > 1).
pub fn random_batch(
    seed: u64,
    batch: usize,
    clips: usize,
    words: usize,
    dim: usize,
) -> BatchInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize| {
        let data = (0..rows * dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Matrix::from_vec(rows, dim, data).expect("shape")
    };
    let mut samples = Vec::with_capacity(batch);
    for _ in 0..batch {
        let clip_features = gaussian(clips);
        let weighted_text = gaussian(words);
        samples.push(BatchSample {
            clip_features,
            weighted_text,
            relevance: Vec::new(),
        });
    }
    for s in &mut samples {
        let size = if clips > 1 {
            rng.random_range(1..clips)
        } else {
            1
        };
        let start = rng.random_range(0..=clips - size);
        s.relevance = (0..clips).map(|j| j >= start && j < start + size).collect();
    }
    BatchInputs { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, LossKind};

    fn sample(clips: Vec<Vec<f64>>, text: Vec<Vec<f64>>, relevance: Vec<bool>) -> BatchSample {
        BatchSample {
            clip_features: Matrix::from_rows(&clips).unwrap(),
            weighted_text: Matrix::from_rows(&text).unwrap(),
            relevance,
        }
    }

    #[test]
    fn pooled_text_examples() {
        let one = Matrix::from_rows(&[vec![0.3, -0.2]]).unwrap();
        assert_eq!(pooled_text(&one), vec![0.3, -0.2]);
        let opposite = Matrix::from_rows(&[vec![0.3, -0.2], vec![-0.3, 0.2]]).unwrap();
        assert_eq!(pooled_text(&opposite), vec![0.0, 0.0]);
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0], vec![-1.0, 0.5]]).unwrap();
        let g = pooled_text(&m);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn clip_keyword_zero_when_all_clips_relevant() {
        let mut batch = random_batch(1, 3, 6, 4, 5);
        for s in &mut batch.samples {
            s.relevance = vec![true; 6];
        }
        let r = clip_keyword_loss(&batch).unwrap();
        assert!(r.value.abs() <= 1e-12);
    }

    #[test]
    fn clip_keyword_two_clip_softplus() {
        let s = sample(
            vec![vec![1.0, 0.2], vec![-0.4, 1.0]],
            vec![vec![0.7, 0.1], vec![0.3, 0.5]],
            vec![true, false],
        );
        let g = [0.5, 0.3];
        let cos = |x: &[f64]| {
            (x[0] * g[0] + x[1] * g[1])
                / ((x[0] * x[0] + x[1] * x[1]).sqrt() * (g[0] * g[0] + g[1] * g[1]).sqrt())
        };
        let (s0, s1) = (cos(&[1.0, 0.2]), cos(&[-0.4, 1.0]));
        let expected = (1.0 + (s1 - s0).exp()).ln();
        let r = clip_keyword_loss(&BatchInputs::new(vec![s]).unwrap()).unwrap();
        assert!((r.value - expected).abs() < 1e-14);
    }

    #[test]
    fn clip_keyword_skips_empty_samples() {
        let mut batch = random_batch(2, 3, 5, 2, 4);
        batch.samples[1].relevance = vec![false; 5];
        let r = clip_keyword_loss(&batch).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].index, 1);
        assert!(r.grad_clips[1].as_slice().iter().all(|&v| v == 0.0));

        let mut kept = batch.clone();
        kept.samples.remove(1);
        assert!((clip_keyword_loss(&kept).unwrap().value - r.value).abs() < 1e-15);

        for s in &mut batch.samples {
            s.relevance = vec![false; 5];
        }
        assert!(matches!(
            clip_keyword_loss(&batch),
            Err(Error::EmptyRelevantSet(_))
        ));
    }

    #[test]
    fn video_keyword_single_sample_is_zero() {
        let batch = random_batch(3, 1, 6, 3, 4);
        assert_eq!(video_keyword_loss(&batch).unwrap().value, 0.0);
    }

    #[test]
    fn video_keyword_two_by_two() {
        // G^v_1 = e1, G^v_2 = e2, G^wt_1 = e1, G^wt_2 = e2
        let a = sample(vec![vec![1.0, 0.0]], vec![vec![2.0, 0.0]], vec![true]);
        let b = sample(vec![vec![0.0, 3.0]], vec![vec![0.0, 0.5]], vec![true]);
        let r = video_keyword_loss(&BatchInputs::new(vec![a, b]).unwrap()).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((r.value - expected).abs() < 1e-15);
    }

    #[test]
    fn video_keyword_empty_mask_errors_or_skips() {
        let mut batch = random_batch(4, 3, 5, 2, 4);
        batch.samples[2].relevance = vec![false; 5];
        assert!(video_keyword_loss(&batch).is_err());
        let opts = LossOptions {
            skip_empty_video: true,
            ..LossOptions::default()
        };
        let r = video_keyword_loss_with(&batch, opts).unwrap();
        assert_eq!(r.skipped.len(), 1);
        let mut kept = batch.clone();
        kept.samples.remove(2);
        assert!((video_keyword_loss(&kept).unwrap().value - r.value).abs() < 1e-15);
    }

    #[test]
    fn keyword_loss_is_the_sum_of_components() {
        let batch = random_batch(5, 4, 8, 5, 16);
        let ck = clip_keyword_loss(&batch).unwrap();
        let vk = video_keyword_loss(&batch).unwrap();
        let kw = keyword_loss(&batch).unwrap();
        assert!((kw.value - (ck.value + vk.value)).abs() < 1e-12);
        for i in 0..4 {
            for (k, (a, b)) in ck.grad_clips[i]
                .as_slice()
                .iter()
                .zip(vk.grad_clips[i].as_slice())
                .enumerate()
            {
                assert!((kw.grad_clips[i].as_slice()[k] - (a + b)).abs() < 1e-15);
            }
            for (k, (a, b)) in ck.grad_text[i]
                .as_slice()
                .iter()
                .zip(vk.grad_text[i].as_slice())
                .enumerate()
            {
                assert!((kw.grad_text[i].as_slice()[k] - (a + b)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn total_loss_examples() {
        assert!((total_loss(0.0, 0.0, 2.0, 0.3) - 0.6).abs() < 1e-15);
        assert_eq!(total_loss(1.5, 0.25, 9.0, 0.0), 1.75);
    }

    #[test]
    fn losses_nonnegative_and_permutation_invariant() {
        for seed in 0..20 {
            let batch = random_batch(seed, 4, 6, 3, 5);
            let ck = clip_keyword_loss(&batch).unwrap().value;
            let vk = video_keyword_loss(&batch).unwrap().value;
            assert!(ck > 0.0 && vk > 0.0);
            let mut rev = batch.clone();
            rev.samples.reverse();
            assert!((clip_keyword_loss(&rev).unwrap().value - ck).abs() < 1e-12);
            assert!((video_keyword_loss(&rev).unwrap().value - vk).abs() < 1e-12);
        }
    }

    #[test]
    fn row_rescaling_leaves_losses_unchanged() {
        let batch = random_batch(21, 3, 6, 4, 8);
        let ck = clip_keyword_loss(&batch).unwrap().value;
        let vk = video_keyword_loss(&batch).unwrap().value;
        for i in 0..3 {
            for j in 0..6 {
                let mut scaled = batch.clone();
                scaled.samples[i]
                    .clip_features
                    .row_mut(j)
                    .iter_mut()
                    .for_each(|v| *v *= 7.5);
                assert!((clip_keyword_loss(&scaled).unwrap().value - ck).abs() <= 1e-10);
                assert!((video_keyword_loss(&scaled).unwrap().value - vk).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn pooling_readings_agree() {
        for seed in 0..10 {
            let batch = random_batch(seed, 4, 8, 5, 16);
            let masked = video_keyword_loss(&batch).unwrap();
            let zero_fill = video_keyword_loss_with(
                &batch,
                LossOptions {
                    pooling: VideoPooling::ZeroFillMean,
                    ..LossOptions::default()
                },
            )
            .unwrap();
            assert!((masked.value - zero_fill.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_pass_the_checker() {
        for seed in 0..3 {
            let batch = random_batch(100 + seed, 4, 8, 5, 16);
            for kind in [
                LossKind::ClipKeyword,
                LossKind::VideoKeyword,
                LossKind::Keyword,
            ] {
                let report = grad_check(kind, &batch, 1e-5, Some(50), seed).unwrap();
                assert!(report.max_rel_error() <= 1e-4, "{kind:?}: {report:?}");
            }
        }
    }
}
