//! Planted-segment synthetic scenarios.
//!
//! Every video is cut into `num_segments` equal contiguous segments. Each
//! segment has its own scene direction, and every word concept that occupies
//! the segment is mixed into the segment centroid. A concept's strength is
//! shared across the segments it occupies (default `1 / |segments|`), so a
//! concept present everywhere acts as a weak backdrop while a concept present
//! in one segment dominates it. Clips are the segment centroid plus isotropic
//! Gaussian noise whose expected norm is about `noise`; words are their
//! concept direction plus the same noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dataset::{runs, Dataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, norm, Matrix};

/// Saliency label given to clips in the relevant segments.
pub const RELEVANT_LABEL: i64 = 4;
/// Saliency label for clips whose segment holds some query concept.
pub const RELATED_LABEL: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpec {
    pub text: String,
    /// Segments in which this word's concept appears.
    pub segments: Vec<usize>,
    /// Mixing strength per occupied segment; `None` means `1 / segments.len()`.
    #[serde(default)]
    pub strength: Option<f64>,
}

impl WordSpec {
    pub fn new(text: impl Into<String>, segments: Vec<usize>) -> Self {
        Self {
            text: text.into(),
            segments,
            strength: None,
        }
    }

    fn effective_strength(&self) -> f64 {
        self.strength
            .unwrap_or_else(|| 1.0 / self.segments.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_samples: usize,
    /// L
    pub num_clips: usize,
    /// d
    pub dim: usize,
    /// k
    pub num_segments: usize,
    /// sigma
    pub noise: f64,
    pub clip_duration_sec: f64,
    /// The query; N = `words.len()`.
    pub words: Vec<WordSpec>,
    /// Segments forming the ground-truth moment. Defaults to the segments of
    /// the word occupying the fewest segments.
    #[serde(default)]
    pub relevant_segments: Option<Vec<usize>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_default_words(8, 32, 16, 4, 0.1, 5)
    }
}

impl SynthConfig {
    /// `num_words` words, word `n` occupying segment `n % num_segments`.
    pub fn with_default_words(
        num_samples: usize,
        num_clips: usize,
        dim: usize,
        num_segments: usize,
        noise: f64,
        num_words: usize,
    ) -> Self {
        let words = (0..num_words)
            .map(|n| WordSpec::new(format!("w{n}"), vec![n % num_segments.max(1)]))
            .collect();
        Self {
            num_samples,
            num_clips,
            dim,
            num_segments,
            noise,
            clip_duration_sec: 2.0,
            words,
            relevant_segments: None,
        }
    }

    /// A dog that shows up in one of five scenes of a garden video.
    pub fn dog_in_garden() -> Self {
        Self {
            num_samples: 1,
            num_clips: 40,
            dim: 32,
            num_segments: 5,
            noise: 0.05,
            clip_duration_sec: 2.0,
            words: vec![
                WordSpec::new("dog", vec![2]),
                WordSpec::new("garden", (0..5).collect()),
            ],
            relevant_segments: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_clips == 0 || self.dim == 0 {
            return bad("num_clips and dim must be positive".into());
        }
        if self.num_segments == 0 || self.num_segments > self.num_clips {
            return bad(format!(
                "num_segments must lie in 1..={} (got {})",
                self.num_clips, self.num_segments
            ));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.clip_duration_sec > 0.0) {
            return bad("clip_duration_sec must be positive".into());
        }
        if self.words.is_empty() {
            return bad("at least one word is required".into());
        }
        for w in &self.words {
            if w.segments.is_empty() {
                return bad(format!("word `{}` occupies no segment", w.text));
            }
            if let Some(&s) = w.segments.iter().find(|&&s| s >= self.num_segments) {
                return bad(format!("word `{}` names segment {s}", w.text));
            }
        }
        if let Some(rel) = &self.relevant_segments {
            if rel.is_empty() || rel.iter().any(|&s| s >= self.num_segments) {
                return bad("relevant_segments must be nonempty and in range".into());
            }
        }
        Ok(())
    }

    /// Half-open clip ranges of the planted segments.
    pub fn segment_bounds(&self) -> Vec<(usize, usize)> {
        let (l, k) = (self.num_clips, self.num_segments);
        (0..k).map(|s| (s * l / k, (s + 1) * l / k)).collect()
    }

    fn relevant_segment_set(&self) -> Vec<usize> {
        if let Some(rel) = &self.relevant_segments {
            let mut rel = rel.clone();
            rel.sort_unstable();
            rel.dedup();
            return rel;
        }
        let specific = self
            .words
            .iter()
            .min_by_key(|w| w.segments.len())
            .expect("validated: words nonempty");
        let mut rel = specific.segments.clone();
        rel.sort_unstable();
        rel.dedup();
        rel
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Unit directions; orthonormalized when they fit in the space.
fn base_directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = gaussian_vector(rng, dim);
        if count <= dim {
            for prev in &out {
                let p = dot(&v, prev);
                axpy(-p, prev, &mut v);
            }
        }
        normalize(&mut v);
        out.push(v);
    }
    out
}

fn noisy(rng: &mut ChaCha8Rng, center: &[f64], noise: &Normal<f64>, enabled: bool) -> Vec<f64> {
    center
        .iter()
        .map(|&c| if enabled { c + noise.sample(rng) } else { c })
        .collect()
}

/// Generates a dataset; a pure function of `(config, seed)`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, d, k) = (config.num_clips, config.dim, config.num_segments);
    let noise = Normal::new(0.0, config.noise / (d as f64).sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let add_noise = config.noise > 0.0;
    let bounds = config.segment_bounds();
    let relevant_segments = config.relevant_segment_set();

    let mut planted = vec![0usize; l];
    for (s, &(a, b)) in bounds.iter().enumerate() {
        planted[a..b].iter_mut().for_each(|p| *p = s);
    }
    let mut relevant_mask = vec![false; l];
    for &s in &relevant_segments {
        let (a, b) = bounds[s];
        relevant_mask[a..b].iter_mut().for_each(|m| *m = true);
    }
    let relevant_clips: Vec<usize> = (0..l).filter(|&j| relevant_mask[j]).collect();
    let related = |s: usize| config.words.iter().any(|w| w.segments.contains(&s));
    let saliency_labels: Vec<i64> = (0..l)
        .map(|j| {
            if relevant_mask[j] {
                RELEVANT_LABEL
            } else if related(planted[j]) {
                RELATED_LABEL
            } else {
                0
            }
        })
        .collect();
    let spans: Vec<(f64, f64)> = runs(&relevant_mask)
        .into_iter()
        .map(|(a, b)| {
            (
                a as f64 * config.clip_duration_sec,
                b as f64 * config.clip_duration_sec,
            )
        })
        .collect();

    let mut samples = Vec::with_capacity(config.num_samples);
    for i in 0..config.num_samples {
        let dirs = base_directions(&mut rng, k + config.words.len(), d);
        let (scenes, concepts) = dirs.split_at(k);
        let centroids: Vec<Vec<f64>> = (0..k)
            .map(|s| {
                let mut c = scenes[s].clone();
                for (w, concept) in config.words.iter().zip(concepts) {
                    if w.segments.contains(&s) {
                        axpy(w.effective_strength(), concept, &mut c);
                    }
                }
                normalize(&mut c);
                c
            })
            .collect();

        let mut clip_rows = Vec::with_capacity(l);
        for &s in &planted {
            clip_rows.push(noisy(&mut rng, &centroids[s], &noise, add_noise));
        }
        let word_rows: Vec<Vec<f64>> = concepts
            .iter()
            .map(|c| noisy(&mut rng, c, &noise, add_noise))
            .collect();

        let mut meta = Map::new();
        meta.insert("generator".into(), Value::from("planted_segments"));
        meta.insert("seed".into(), Value::from(seed));
        meta.insert("noise".into(), Value::from(config.noise));
        meta.insert(
            "segment_bounds".into(),
            json!(bounds.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>()),
        );
        meta.insert("planted_labels".into(), json!(planted));
        meta.insert(
            "word_segments".into(),
            json!(config.words.iter().map(|w| &w.segments).collect::<Vec<_>>()),
        );
        meta.insert("relevant_segments".into(), json!(relevant_segments));

        samples.push(Sample {
            video_id: format!("synth-{seed}-{i:04}"),
            clip_features: Matrix::from_rows(&clip_rows)?,
            word_features: Matrix::from_rows(&word_rows)?,
            words: config.words.iter().map(|w| w.text.clone()).collect(),
            relevant_clips: relevant_clips.clone(),
            saliency_labels: Some(saliency_labels.clone()),
            moment_spans: Some(spans.clone()),
            clip_duration_sec: config.clip_duration_sec,
            meta,
        });
    }
    let mut dataset = Dataset::new(samples)?;
    dataset.metadata.insert("source".into(), "synthetic".into());
    dataset.metadata.insert("seed".into(), seed.into());
    Ok(dataset)
}

/// Planted segment label of every clip, read back from sample metadata.
pub fn planted_labels(sample: &Sample) -> Option<Vec<usize>> {
    serde_json::from_value(sample.meta.get("planted_labels")?.clone()).ok()
}

/// Segments each word occupies, read back from sample metadata.
pub fn word_segments(sample: &Sample) -> Option<Vec<Vec<usize>>> {
    serde_json::from_value(sample.meta.get("word_segments")?.clone()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_segments_copy_their_centroid() {
        let cfg = SynthConfig::with_default_words(1, 4, 6, 2, 0.0, 2);
        let ds = synth_generate(&cfg, 3).unwrap();
        let f = &ds.samples[0].clip_features;
        assert_eq!(f.row(0), f.row(1));
        assert_eq!(f.row(2), f.row(3));
        assert_ne!(f.row(1), f.row(2));
        assert!((norm(f.row(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        assert_eq!(
            synth_generate(&cfg, 11).unwrap(),
            synth_generate(&cfg, 11).unwrap()
        );
        assert_ne!(
            synth_generate(&cfg, 11).unwrap(),
            synth_generate(&cfg, 12).unwrap()
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SynthConfig::with_default_words(1, 3, 4, 4, 0.1, 2);
        assert!(synth_generate(&cfg, 0).is_err());
        cfg.num_segments = 2;
        cfg.noise = -0.5;
        assert!(synth_generate(&cfg, 0).is_err());
    }

    #[test]
    fn dog_in_garden_metadata_records_word_occupancy() {
        let ds = synth_generate(&SynthConfig::dog_in_garden(), 0).unwrap();
        let s = &ds.samples[0];
        assert_eq!(s.words, vec!["dog", "garden"]);
        let occ = word_segments(s).unwrap();
        assert_eq!(occ[0], vec![2]);
        assert_eq!(occ[1], vec![0, 1, 2, 3, 4]);
        // the moment is the dog's segment
        assert_eq!(s.relevant_clips, (16..24).collect::<Vec<_>>());
        assert_eq!(s.moment_spans.as_deref(), Some(&[(32.0, 48.0)][..]));
        assert_eq!(planted_labels(s).unwrap()[17], 2);
    }

    #[test]
    fn generated_samples_are_valid() {
        let ds = synth_generate(&SynthConfig::default(), 5).unwrap();
        assert_eq!(ds.len(), 8);
        for s in &ds.samples {
            s.validate().unwrap();
            assert_eq!(s.num_words(), 5);
        }
    }
}
