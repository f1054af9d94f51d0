//! Video-query samples, JSON Lines dataset files and prediction files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Saliency labels at or above this value mark a clip as relevant when a
/// sample carries neither relevant clips nor moment spans.
pub const DEFAULT_RELEVANT_LABEL: i64 = 3;

/// One video paired with one text query.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub video_id: String,
    /// L x d clip features.
    pub clip_features: Matrix,
    /// N x d word features.
    pub word_features: Matrix,
    /// Surface form of each word; only used for reporting.
    pub words: Vec<String>,
    /// Ground-truth moment clips, sorted and deduplicated.
    pub relevant_clips: Vec<usize>,
    pub saliency_labels: Option<Vec<i64>>,
    pub moment_spans: Option<Vec<(f64, f64)>>,
    pub clip_duration_sec: f64,
    pub meta: Map<String, Value>,
}

impl Sample {
    pub fn num_clips(&self) -> usize {
        self.clip_features.rows()
    }

    pub fn num_words(&self) -> usize {
        self.word_features.rows()
    }

    pub fn dim(&self) -> usize {
        self.clip_features.cols()
    }

    /// Binary mask over clips built from `relevant_clips`.
    pub fn relevance_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_clips()];
        for &j in &self.relevant_clips {
            mask[j] = true;
        }
        mask
    }

    /// Relevant clips, falling back to clips overlapping a moment span and then
    /// to clips whose saliency label reaches `label_threshold`.
    pub fn derive_relevant_clips(&self, label_threshold: i64) -> Vec<usize> {
        if !self.relevant_clips.is_empty() {
            return self.relevant_clips.clone();
        }
        if let Some(spans) = self.moment_spans.as_ref().filter(|s| !s.is_empty()) {
            return (0..self.num_clips())
                .filter(|&j| {
                    let start = j as f64 * self.clip_duration_sec;
                    let end = start + self.clip_duration_sec;
                    spans.iter().any(|&(s, e)| start < e && s < end)
                })
                .collect();
        }
        if let Some(labels) = &self.saliency_labels {
            return (0..labels.len())
                .filter(|&j| labels[j] >= label_threshold)
                .collect();
        }
        Vec::new()
    }

    /// Ground-truth windows in seconds: the moment spans when present,
    /// otherwise the contiguous runs of relevant clips.
    pub fn ground_truth_windows(&self) -> Vec<(f64, f64)> {
        if let Some(spans) = self.moment_spans.as_ref().filter(|s| !s.is_empty()) {
            return spans.clone();
        }
        let mask = self.relevance_mask();
        runs(&mask)
            .into_iter()
            .map(|(s, e)| {
                (
                    s as f64 * self.clip_duration_sec,
                    e as f64 * self.clip_duration_sec,
                )
            })
            .collect()
    }

    /// Checks every invariant of a sample.
    pub fn validate(&self) -> Result<()> {
        let l = self.clip_features.rows();
        let n = self.word_features.rows();
        let d = self.clip_features.cols();
        if l == 0 {
            return Err(Error::dim("clip_features", "at least one clip is required"));
        }
        if n == 0 {
            return Err(Error::dim("word_features", "at least one word is required"));
        }
        if d == 0 {
            return Err(Error::dim(
                "clip_features",
                "feature dimension must be positive",
            ));
        }
        if self.word_features.cols() != d {
            return Err(Error::dim(
                "word_features",
                format!(
                    "dimension {} differs from clip dimension {d}",
                    self.word_features.cols()
                ),
            ));
        }
        if !self.clip_features.is_finite() {
            return Err(Error::NonFinite {
                field: "clip_features".into(),
            });
        }
        if !self.word_features.is_finite() {
            return Err(Error::NonFinite {
                field: "word_features".into(),
            });
        }
        if self.words.len() != n {
            return Err(Error::dim(
                "words",
                format!("{} words for {n} word feature rows", self.words.len()),
            ));
        }
        if let Some(&bad) = self.relevant_clips.iter().find(|&&j| j >= l) {
            return Err(Error::dim(
                "relevant_clips",
                format!("clip index {bad} out of range for {l} clips"),
            ));
        }
        if let Some(labels) = &self.saliency_labels {
            if labels.len() != l {
                return Err(Error::dim(
                    "saliency_labels",
                    format!("{} labels for {l} clips", labels.len()),
                ));
            }
        }
        if let Some(spans) = &self.moment_spans {
            for &(s, e) in spans {
                if !s.is_finite() || !e.is_finite() {
                    return Err(Error::NonFinite {
                        field: "moment_spans".into(),
                    });
                }
                if s >= e {
                    return Err(Error::dim(
                        "moment_spans",
                        format!("span start {s} is not before end {e}"),
                    ));
                }
            }
        }
        if !(self.clip_duration_sec > 0.0) || !self.clip_duration_sec.is_finite() {
            return Err(Error::dim(
                "clip_duration_sec",
                format!("must be positive, got {}", self.clip_duration_sec),
            ));
        }
        Ok(())
    }
}

/// Maximal runs of `true` as half-open index ranges.
pub(crate) fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, mask.len()));
    }
    out
}

/// An ordered collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub metadata: BTreeMap<String, Value>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut dataset = Dataset {
            samples,
            metadata: BTreeMap::new(),
        };
        dataset.validate()?;
        if let Some(d) = dataset.dim() {
            dataset.metadata.insert("d".into(), d.into());
        }
        Ok(dataset)
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(Sample::dim)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, sample) in self.samples.iter().enumerate() {
            sample.validate()?;
            if Some(sample.dim()) != d {
                return Err(Error::dim(
                    "d",
                    format!(
                        "sample {i} has dimension {} but the dataset uses {}",
                        sample.dim(),
                        d.unwrap_or(0)
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Canonical JSON Lines serialization, one record per sample.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for sample in &self.samples {
            out.push_str(&serde_json::to_string(&SampleRecord::from(sample))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (row, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            samples.push(parse_record(row, line)?);
        }
        Dataset::new(samples)
    }
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    video_id: &'a str,
    d: usize,
    clip_features: Vec<Vec<f64>>,
    word_features: Vec<Vec<f64>>,
    words: &'a [String],
    relevant_clips: &'a [usize],
    saliency_labels: &'a Option<Vec<i64>>,
    moment_spans: Option<Vec<[f64; 2]>>,
    clip_duration_sec: f64,
    meta: &'a Map<String, Value>,
}

impl<'a> From<&'a Sample> for SampleRecord<'a> {
    fn from(s: &'a Sample) -> Self {
        SampleRecord {
            video_id: &s.video_id,
            d: s.dim(),
            clip_features: s.clip_features.to_rows(),
            word_features: s.word_features.to_rows(),
            words: &s.words,
            relevant_clips: &s.relevant_clips,
            saliency_labels: &s.saliency_labels,
            moment_spans: s
                .moment_spans
                .as_ref()
                .map(|v| v.iter().map(|&(a, b)| [a, b]).collect()),
            clip_duration_sec: s.clip_duration_sec,
            meta: &s.meta,
        }
    }
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, row: usize, name: &str) -> Result<T> {
    let value = obj.get(name).ok_or_else(|| Error::Parse {
        row,
        field: name.into(),
        message: "missing field".into(),
    })?;
    serde_json::from_value(value.clone()).map_err(|e| Error::Parse {
        row,
        field: name.into(),
        message: e.to_string(),
    })
}

fn optional_field<T: DeserializeOwned>(
    obj: &Map<String, Value>,
    row: usize,
    name: &str,
) -> Result<Option<T>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => field(obj, row, name).map(Some),
    }
}

fn feature_matrix(rows: Vec<Vec<f64>>, d: usize, row: usize, name: &str) -> Result<Matrix> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::dim(
            name,
            format!(
                "record {row}: row {i} has {} values, expected d = {d}",
                r.len()
            ),
        ));
    }
    let mut m = Matrix::from_rows(&rows)?;
    if rows.is_empty() {
        m = Matrix::zeros(0, d);
    }
    Ok(m)
}

fn parse_record(row: usize, line: &str) -> Result<Sample> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        row,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(Error::Parse {
            row,
            field: "<record>".into(),
            message: "record is not a JSON object".into(),
        });
    };
    let d: usize = field(&obj, row, "d")?;
    let clip_features =
        feature_matrix(field(&obj, row, "clip_features")?, d, row, "clip_features")?;
    let word_features =
        feature_matrix(field(&obj, row, "word_features")?, d, row, "word_features")?;
    let mut relevant_clips: Vec<usize> = field(&obj, row, "relevant_clips")?;
    relevant_clips.sort_unstable();
    relevant_clips.dedup();
    let moment_spans: Option<Vec<[f64; 2]>> = optional_field(&obj, row, "moment_spans")?;
    let sample = Sample {
        video_id: field(&obj, row, "video_id")?,
        clip_features,
        word_features,
        words: field(&obj, row, "words")?,
        relevant_clips,
        saliency_labels: optional_field(&obj, row, "saliency_labels")?,
        moment_spans: moment_spans.map(|v| v.into_iter().map(|[a, b]| (a, b)).collect()),
        clip_duration_sec: field(&obj, row, "clip_duration_sec")?,
        meta: optional_field(&obj, row, "meta")?.unwrap_or_default(),
    };
    sample.validate().map_err(|e| match e {
        Error::Dimension { field, message } => Error::Dimension {
            field,
            message: format!("record {row}: {message}"),
        },
        other => other,
    })?;
    Ok(sample)
}

/// Reads and validates a JSON Lines dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = Dataset::from_jsonl(&text)?;
    dataset
        .metadata
        .insert("source".into(), path.display().to_string().into());
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset.to_jsonl()?).map_err(|e| Error::io(path, e))
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    /// `[start_sec, end_sec, score]` triples.
    pub pred_relevant_windows: Vec<[f64; 3]>,
    pub pred_saliency_scores: Vec<f64>,
}

impl PredictionRecord {
    /// Sorts windows by descending score; equal scores keep their order.
    pub fn sort_windows(&mut self) {
        self.pred_relevant_windows
            .sort_by(|a, b| b[2].total_cmp(&a[2]));
    }
}

pub fn predictions_to_jsonl(preds: &[PredictionRecord]) -> Result<String> {
    let mut out = String::new();
    for pred in preds {
        let mut pred = pred.clone();
        pred.sort_windows();
        out.push_str(&serde_json::to_string(&pred)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes one JSON line per record with windows in descending score order.
pub fn save_predictions(preds: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(predictions_to_jsonl(preds)?.as_bytes())
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(row, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                row,
                field: "<prediction>".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
