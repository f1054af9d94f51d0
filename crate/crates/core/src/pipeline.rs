//! End-to-end orchestration: inference, toy training, lambda sweeps and evaluation.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    build_hierarchy, refine_partition, select_partition, ClusterContext, PartitionHierarchy,
};
use crate::context::{saliency_scores, ContextSignals, SaliencyHead};
use crate::dataset::{runs, Dataset, PredictionRecord, Sample, DEFAULT_RELEVANT_LABEL};
use crate::error::{Error, Result};
use crate::keywords::{KeywordWeights, DEFAULT_TAU};
use crate::losses::{
    clip_keyword_loss, pooled_text, total_loss, video_keyword_loss_with, BatchInputs, BatchSample,
    LossOptions, LossReport, DEFAULT_LAMBDA_KW,
};
use crate::metrics::{
    default_iou_thresholds, mean_ap, mean_hit_at_1, recall_at_1, MapReport, ScoredWindow,
};
use crate::numerics::{cosine_similarity, Matrix, NORM_EPS};

/// Run-wide settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tau: f64,
    pub lambda_kw: f64,
    pub target_clusters: Option<usize>,
    /// Saliency projection width p; `None` uses d.
    pub proj_dim: Option<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub iou_thresholds: Vec<f64>,
    /// Saliency label that marks a clip relevant when deriving ground truth.
    pub relevant_label: i64,
    /// Saliency label counted as a hit by HIT@1.
    pub hit_label: i64,
    pub skip_empty_video: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            lambda_kw: DEFAULT_LAMBDA_KW,
            target_clusters: None,
            proj_dim: None,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            steps: 300,
            seed: 0,
            batch_size: 8,
            iou_thresholds: default_iou_thresholds(),
            relevant_label: DEFAULT_RELEVANT_LABEL,
            hit_label: 4,
            skip_empty_video: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.lambda_kw >= 0.0) {
            return bad("lambda_kw must be non-negative");
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate and weight_decay must be non-negative");
        }
        if self.target_clusters == Some(0) || self.proj_dim == Some(0) {
            return bad("target_clusters and proj_dim must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.iou_thresholds.is_empty() {
            return bad("iou_thresholds must not be empty");
        }
        Ok(())
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions {
            skip_empty_video: self.skip_empty_video,
            ..LossOptions::default()
        }
    }
}

/// Every intermediate signal computed for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSignals {
    pub video_id: String,
    pub level_counts: Vec<usize>,
    pub selected_level: usize,
    pub num_clusters: usize,
    pub assignment: Vec<usize>,
    pub words: Vec<String>,
    pub keyword_weights: Vec<f64>,
    pub change_vector: Vec<u8>,
    pub representativeness: Vec<f64>,
    pub saliency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    pub predictions: Vec<PredictionRecord>,
    pub signals: Vec<SampleSignals>,
}

/// Windows from runs of clips whose saliency exceeds mean + std/2, scored by
/// the mean saliency inside the run and sorted by descending score. A flat
/// saliency profile yields the whole video as the only window.
pub fn saliency_windows(saliency: &[f64], clip_duration_sec: f64) -> Vec<[f64; 3]> {
    if saliency.is_empty() {
        return Vec::new();
    }
    let n = saliency.len() as f64;
    let mean = saliency.iter().sum::<f64>() / n;
    let std = (saliency.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let threshold = mean + 0.5 * std;
    let mask: Vec<bool> = saliency.iter().map(|&s| s > threshold).collect();
    let mut windows: Vec<[f64; 3]> = runs(&mask)
        .into_iter()
        .map(|(a, b)| {
            let score = saliency[a..b].iter().sum::<f64>() / (b - a) as f64;
            [
                a as f64 * clip_duration_sec,
                b as f64 * clip_duration_sec,
                score,
            ]
        })
        .collect();
    if windows.is_empty() {
        windows.push([0.0, n * clip_duration_sec, mean]);
    }
    windows.sort_by(|x, y| y[2].total_cmp(&x[2]));
    windows
}

/// Exact refinement for an explicit target, nearest level otherwise.
pub fn choose_partition(
    hierarchy: &PartitionHierarchy,
    clip_features: &Matrix,
    target_clusters: Option<usize>,
) -> ClusterContext {
    match target_clusters {
        Some(k) => refine_partition(hierarchy, clip_features, k),
        None => select_partition(hierarchy, None),
    }
}

/// Runs clustering, keyword weighting, context signals and saliency on one sample.
pub fn infer_sample(
    sample: &Sample,
    config: &RunConfig,
    head: &SaliencyHead,
) -> Result<(PredictionRecord, SampleSignals)> {
    let hierarchy = build_hierarchy(&sample.clip_features);
    let ctx = choose_partition(&hierarchy, &sample.clip_features, config.target_clusters);
    let keywords = KeywordWeights::compute(&sample.word_features, &ctx, config.tau)?;
    let signals = ContextSignals::compute(&sample.clip_features, &ctx)?;
    // the clip features stand in for encoder tokens
    let saliency = saliency_scores(&sample.clip_features, &signals.representativeness, head)?;
    let prediction = PredictionRecord {
        video_id: sample.video_id.clone(),
        pred_relevant_windows: saliency_windows(&saliency, sample.clip_duration_sec),
        pred_saliency_scores: saliency.clone(),
    };
    let signals = SampleSignals {
        video_id: sample.video_id.clone(),
        level_counts: hierarchy.cluster_counts(),
        selected_level: ctx.level,
        num_clusters: ctx.num_clusters,
        assignment: ctx.assignment,
        words: sample.words.clone(),
        keyword_weights: keywords.weights,
        change_vector: signals.change_vector,
        representativeness: signals.representativeness,
        saliency,
    };
    Ok((prediction, signals))
}

pub fn saliency_head_for(dataset: &Dataset, config: &RunConfig) -> Result<SaliencyHead> {
    let d = dataset
        .dim()
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    SaliencyHead::seeded(d, config.proj_dim.unwrap_or(d), config.seed)
}

/// Per-sample inference, parallel over samples, results in dataset order.
pub fn run_inference(dataset: &Dataset, config: &RunConfig) -> Result<InferenceOutput> {
    config.validate()?;
    let head = saliency_head_for(dataset, config)?;
    let results: Vec<(PredictionRecord, SampleSignals)> = dataset
        .samples
        .par_iter()
        .map(|s| infer_sample(s, config, &head))
        .collect::<Result<_>>()?;
    let (predictions, signals) = results.into_iter().unzip();
    Ok(InferenceOutput {
        predictions,
        signals,
    })
}

/// Writes signals as JSON Lines, one object per sample.
pub fn save_signals(signals: &[SampleSignals], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in signals {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mean cosine of relevant and background clips to the pooled weighted query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alignment {
    pub relevant: f64,
    pub background: f64,
}

impl Alignment {
    pub fn gap(&self) -> f64 {
        self.relevant - self.background
    }

    pub fn of(batch: &BatchInputs) -> Alignment {
        let mut relevant = 0.0;
        let mut background = 0.0;
        let mut with_background = 0usize;
        for s in &batch.samples {
            let g = pooled_text(&s.weighted_text);
            let (mut rs, mut rc, mut bs, mut bc) = (0.0, 0usize, 0.0, 0usize);
            for (row, &r) in s.clip_features.iter_rows().zip(&s.relevance) {
                let c = cosine_similarity(row, &g, NORM_EPS);
                if r {
                    rs += c;
                    rc += 1;
                } else {
                    bs += c;
                    bc += 1;
                }
            }
            relevant += if rc > 0 { rs / rc as f64 } else { 0.0 };
            if bc > 0 {
                background += bs / bc as f64;
                with_background += 1;
            }
        }
        Alignment {
            relevant: relevant / batch.len() as f64,
            background: if with_background > 0 {
                background / with_background as f64
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub l_ck: f64,
    pub l_vk: f64,
    pub l_kw: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Loss before the first update and after every update (`steps + 1` rows).
    pub curve: Vec<StepRecord>,
    pub initial_alignment: Alignment,
    pub final_alignment: Alignment,
    /// Trained clip features per sample.
    pub clip_features: Vec<Matrix>,
    /// Trained word features per sample.
    pub text_features: Vec<Matrix>,
    /// Keyword weights, fixed at initialization.
    pub keyword_weights: Vec<Vec<f64>>,
}

impl TrainOutcome {
    pub fn initial(&self) -> &StepRecord {
        &self.curve[0]
    }

    pub fn last(&self) -> &StepRecord {
        self.curve.last().expect("curve has the initial row")
    }

    /// True when no step increases the total loss.
    pub fn is_monotone(&self) -> bool {
        self.curve.windows(2).all(|w| w[1].total <= w[0].total)
    }
}

/// Adam with L2 weight decay folded into the gradient.
struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grads[k] + self.weight_decay * params[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn build_batch(
    clips: &[Matrix],
    texts: &[Matrix],
    weights: &[Vec<f64>],
    relevance: &[Vec<bool>],
) -> Result<BatchInputs> {
    let samples = clips
        .iter()
        .zip(texts)
        .zip(weights)
        .zip(relevance)
        .map(|(((c, t), w), r)| {
            Ok(BatchSample {
                clip_features: c.clone(),
                weighted_text: crate::keywords::apply_weights(w, t)?,
                relevance: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchInputs { samples })
}

/// Full-batch optimization of `lambda_kw * L_kw` over the clip and word
/// features of the first `batch_size` samples, treated as free embeddings.
/// Keyword weights come from the clustering at initialization and stay fixed;
/// word gradients flow through the weighting.
pub fn train_toy(dataset: &Dataset, config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let take = config.batch_size.min(dataset.len());
    if take == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let samples = &dataset.samples[..take];
    let mut clips = Vec::with_capacity(take);
    let mut texts = Vec::with_capacity(take);
    let mut weights = Vec::with_capacity(take);
    let mut relevance = Vec::with_capacity(take);
    for s in samples {
        let hierarchy = build_hierarchy(&s.clip_features);
        let ctx = choose_partition(&hierarchy, &s.clip_features, config.target_clusters);
        let kw = KeywordWeights::compute(&s.word_features, &ctx, config.tau)?;
        let rel = s.derive_relevant_clips(config.relevant_label);
        if rel.is_empty() {
            return Err(Error::EmptyRelevantSet(format!(
                "sample `{}` has no relevant clips",
                s.video_id
            )));
        }
        let mut mask = vec![false; s.num_clips()];
        rel.iter().for_each(|&j| mask[j] = true);
        clips.push(s.clip_features.clone());
        texts.push(s.word_features.clone());
        weights.push(kw.weights);
        relevance.push(mask);
    }

    let clip_len: usize = clips.iter().map(|m| m.as_slice().len()).sum();
    let text_len: usize = texts.iter().map(|m| m.as_slice().len()).sum();
    let mut clip_opt = Adam::new(clip_len, config.learning_rate, config.weight_decay);
    let mut text_opt = Adam::new(text_len, config.learning_rate, config.weight_decay);
    let options = config.loss_options();

    let evaluate = |clips: &[Matrix],
                    texts: &[Matrix],
                    step: usize|
     -> Result<(StepRecord, LossReport, BatchInputs)> {
        let batch = build_batch(clips, texts, &weights, &relevance)?;
        let ck = clip_keyword_loss(&batch)?;
        let ck_value = ck.value;
        let vk = video_keyword_loss_with(&batch, options)?;
        let vk_value = vk.value;
        let report = ck.combine(vk);
        if !report.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {step}")));
        }
        let record = StepRecord {
            step,
            l_ck: ck_value,
            l_vk: vk_value,
            l_kw: report.value,
            total: total_loss(0.0, 0.0, report.value, config.lambda_kw),
        };
        Ok((record, report, batch))
    };

    let (first, mut report, first_batch) = evaluate(&clips, &texts, 0)?;
    let initial_alignment = Alignment::of(&first_batch);
    let mut curve = vec![first];
    let mut last_batch = first_batch;
    for step in 1..=config.steps {
        let lambda = config.lambda_kw;
        let mut params: Vec<f64> = clips.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let grads: Vec<f64> = report
            .grad_clips
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|g| lambda * g))
            .collect();
        clip_opt.step(&mut params, &grads);
        scatter(&params, &mut clips);

        let mut params: Vec<f64> = texts.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let mut grads = Vec::with_capacity(text_len);
        for (g, w) in report.grad_text.iter().zip(&weights) {
            for (n, row) in g.iter_rows().enumerate() {
                grads.extend(row.iter().map(|v| lambda * w[n] * v));
            }
        }
        text_opt.step(&mut params, &grads);
        scatter(&params, &mut texts);

        let (record, next, batch) = evaluate(&clips, &texts, step)?;
        curve.push(record);
        report = next;
        last_batch = batch;
    }
    Ok(TrainOutcome {
        curve,
        initial_alignment,
        final_alignment: Alignment::of(&last_batch),
        clip_features: clips,
        text_features: texts,
        keyword_weights: weights,
    })
}

fn scatter(flat: &[f64], into: &mut [Matrix]) {
    let mut offset = 0;
    for m in into {
        let n = m.as_slice().len();
        m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
}

pub fn write_loss_curve(curve: &[StepRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in curve {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One row of a lambda sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda_kw: f64,
    pub initial_total: f64,
    pub final_total: f64,
    pub initial_l_kw: f64,
    pub final_l_kw: f64,
    pub final_relevant_sim: f64,
    pub final_gap: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub curves: Vec<Vec<StepRecord>>,
}

/// `0.1, 0.3, 0.5, 0.7, 0.9`
pub fn default_sweep_values() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

/// Trains once per lambda value with the shared seed and config.
pub fn sweep(dataset: &Dataset, config: &RunConfig, values: &[f64]) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(values.len());
    let mut curves = Vec::with_capacity(values.len());
    for &lambda in values {
        let cfg = RunConfig {
            lambda_kw: lambda,
            ..config.clone()
        };
        let outcome = train_toy(dataset, &cfg)?;
        rows.push(SweepRow {
            lambda_kw: lambda,
            initial_total: outcome.initial().total,
            final_total: outcome.last().total,
            initial_l_kw: outcome.initial().l_kw,
            final_l_kw: outcome.last().l_kw,
            final_relevant_sim: outcome.final_alignment.relevant,
            final_gap: outcome.final_alignment.gap(),
            monotone: outcome.is_monotone(),
        });
        curves.push(outcome.curve);
    }
    Ok(SweepResult { rows, curves })
}

pub fn write_sweep(rows: &[SweepRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub num_samples: usize,
    pub num_mr_samples: usize,
    pub num_hd_samples: usize,
    pub r1_at_05: f64,
    pub r1_at_07: f64,
    pub map: MapReport,
    pub hit_at_1: f64,
}

impl EvalReport {
    /// `(metric, value)` rows in display order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("R1@0.5".to_string(), self.r1_at_05),
            ("R1@0.7".to_string(), self.r1_at_07),
        ];
        if let Some(v) = self.map.at_050 {
            rows.push(("mAP@0.5".into(), v));
        }
        if let Some(v) = self.map.at_075 {
            rows.push(("mAP@0.75".into(), v));
        }
        rows.push(("mAP@Avg".into(), self.map.average));
        rows.push(("HIT@1".into(), self.hit_at_1));
        rows
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "value"])?;
        for (name, value) in self.rows() {
            w.write_record([name, value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Scores predictions against a dataset, matching records by `video_id`.
/// Samples with no prediction record count as misses.
pub fn evaluate(
    preds: &[PredictionRecord],
    dataset: &Dataset,
    config: &RunConfig,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &PredictionRecord> =
        preds.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let mut mr_preds = Vec::new();
    let mut mr_gts = Vec::new();
    let mut hd_preds = Vec::new();
    let mut hd_labels = Vec::new();
    for sample in &dataset.samples {
        let pred = by_id.get(sample.video_id.as_str());
        let gts = sample.ground_truth_windows();
        if !gts.is_empty() {
            let windows = pred
                .map(|p| {
                    p.pred_relevant_windows
                        .iter()
                        .map(|w| ScoredWindow::new(w[0], w[1], w[2]))
                        .collect()
                })
                .unwrap_or_default();
            mr_preds.push(windows);
            mr_gts.push(gts);
        }
        if let Some(labels) = &sample.saliency_labels {
            let scores = pred
                .map(|p| p.pred_saliency_scores.clone())
                .filter(|s| s.len() == labels.len())
                .unwrap_or_else(|| vec![0.0; labels.len()]);
            hd_preds.push(scores);
            hd_labels.push(labels.clone());
        }
    }
    Ok(EvalReport {
        num_samples: dataset.len(),
        num_mr_samples: mr_preds.len(),
        num_hd_samples: hd_preds.len(),
        r1_at_05: recall_at_1(&mr_preds, &mr_gts, 0.5)?,
        r1_at_07: recall_at_1(&mr_preds, &mr_gts, 0.7)?,
        map: mean_ap(&mr_preds, &mr_gts, &config.iou_thresholds)?,
        hit_at_1: mean_hit_at_1(&hd_preds, &hd_labels, config.hit_label)?,
    })
}
