//! Moment-retrieval and highlight-detection metrics.
//!
//! Predictions are ranked by score (stable for equal scores). Average precision
//! uses greedy best-first matching against unmatched ground truths and the
//! all-point interpolated precision-recall area.

use serde::Serialize;

use crate::error::{Error, Result};

/// A predicted window in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredWindow {
    pub start_sec: f64,
    pub end_sec: f64,
    pub score: f64,
}

impl ScoredWindow {
    pub fn new(start_sec: f64, end_sec: f64, score: f64) -> Self {
        Self {
            start_sec,
            end_sec,
            score,
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start_sec, self.end_sec)
    }
}

fn check_window((s, e): (f64, f64)) -> Result<()> {
    if !s.is_finite() || !e.is_finite() || s >= e {
        return Err(Error::InvalidArgument(format!(
            "degenerate window [{s}, {e}]"
        )));
    }
    Ok(())
}

/// Intersection over union of two `(start, end)` windows.
pub fn temporal_iou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    check_window(a)?;
    check_window(b)?;
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    Ok(inter / union)
}

/// Indices of `preds` in descending score order; equal scores keep input order.
pub fn rank_by_score(preds: &[ScoredWindow]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

fn check_lengths<T, U>(preds: &[T], gts: &[U]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::dim(
            "predictions",
            format!("{} prediction lists for {} samples", preds.len(), gts.len()),
        ));
    }
    Ok(())
}

/// Fraction of samples whose top-scored window reaches `thresh` IoU with some
/// ground-truth window. A sample without predictions is a miss.
pub fn recall_at_1(
    preds: &[Vec<ScoredWindow>],
    gts: &[Vec<(f64, f64)>],
    thresh: f64,
) -> Result<f64> {
    check_lengths(preds, gts)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        if g.is_empty() {
            return Err(Error::InvalidArgument(
                "sample without ground-truth windows".into(),
            ));
        }
        let Some(&top) = rank_by_score(p).first() else {
            continue;
        };
        let mut best = 0.0f64;
        for &w in g {
            best = best.max(temporal_iou(p[top].span(), w)?);
        }
        if best >= thresh {
            hits += 1;
        }
    }
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-rank true-positive flags under greedy best-first matching.
fn greedy_matches(preds: &[ScoredWindow], gts: &[(f64, f64)], thresh: f64) -> Result<Vec<bool>> {
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(preds.len());
    for k in rank_by_score(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, &gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let iou = temporal_iou(preds[k].span(), gt)?;
            if iou >= thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        flags.push(best.is_some());
    }
    Ok(flags)
}

/// All-point interpolated AP from ranked true-positive flags.
pub fn interpolated_ap(tp_flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &flag) in tp_flags.iter().enumerate() {
        tp += usize::from(flag);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    // envelope from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Average precision of one sample at one IoU threshold.
pub fn average_precision(preds: &[ScoredWindow], gts: &[(f64, f64)], thresh: f64) -> Result<f64> {
    Ok(interpolated_ap(
        &greedy_matches(preds, gts, thresh)?,
        gts.len(),
    ))
}

/// `0.5, 0.55, ..., 0.95`
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub thresholds: Vec<f64>,
    /// AP averaged over samples, one per threshold.
    pub per_threshold: Vec<f64>,
    pub average: f64,
    pub at_050: Option<f64>,
    pub at_075: Option<f64>,
}

/// mAP averaged over samples, then over thresholds.
pub fn mean_ap(
    preds: &[Vec<ScoredWindow>],
    gts: &[Vec<(f64, f64)>],
    thresholds: &[f64],
) -> Result<MapReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("threshold list is empty".into()));
    }
    check_lengths(preds, gts)?;
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut total = 0.0;
        for (p, g) in preds.iter().zip(gts) {
            if g.is_empty() {
                return Err(Error::InvalidArgument(
                    "sample without ground-truth windows".into(),
                ));
            }
            total += average_precision(p, g, t)?;
        }
        per_threshold.push(if preds.is_empty() {
            0.0
        } else {
            total / preds.len() as f64
        });
    }
    let lookup = |x: f64| {
        thresholds
            .iter()
            .position(|&t| (t - x).abs() < 1e-9)
            .map(|i| per_threshold[i])
    };
    Ok(MapReport {
        thresholds: thresholds.to_vec(),
        average: per_threshold.iter().sum::<f64>() / per_threshold.len() as f64,
        at_050: lookup(0.5),
        at_075: lookup(0.75),
        per_threshold,
    })
}

/// 1 when the highest-scored clip (lowest index on ties) has a ground-truth
/// label of at least `positive_thresh`.
pub fn hit_at_1(pred_saliency: &[f64], gt_labels: &[i64], positive_thresh: i64) -> Result<u8> {
    if pred_saliency.len() != gt_labels.len() {
        return Err(Error::dim(
            "pred_saliency",
            format!(
                "{} scores for {} labels",
                pred_saliency.len(),
                gt_labels.len()
            ),
        ));
    }
    let mut best: Option<usize> = None;
    for (i, &s) in pred_saliency.iter().enumerate() {
        if best.is_none_or(|b| s > pred_saliency[b]) {
            best = Some(i);
        }
    }
    Ok(best.map_or(0, |b| u8::from(gt_labels[b] >= positive_thresh)))
}

/// Dataset-level HIT@1.
pub fn mean_hit_at_1(preds: &[Vec<f64>], labels: &[Vec<i64>], positive_thresh: i64) -> Result<f64> {
    check_lengths(preds, labels)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0.0;
    for (p, l) in preds.iter().zip(labels) {
        hits += f64::from(hit_at_1(p, l, positive_thresh)?);
    }
    Ok(hits / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iou_examples() {
        assert_eq!(temporal_iou((2.0, 7.0), (2.0, 7.0)).unwrap(), 1.0);
        assert_eq!(temporal_iou((0.0, 10.0), (5.0, 15.0)).unwrap(), 1.0 / 3.0);
        assert_eq!(temporal_iou((0.0, 1.0), (3.0, 4.0)).unwrap(), 0.0);
        assert!(temporal_iou((3.0, 3.0), (0.0, 1.0)).is_err());
        assert!(temporal_iou((0.0, 1.0), (4.0, 2.0)).is_err());
    }

    #[test]
    fn iou_symmetry_and_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let a0 = rng.random_range(0.0..50.0);
            let a = (a0, a0 + rng.random_range(0.1..20.0));
            let b0 = rng.random_range(0.0..50.0);
            let b = (b0, b0 + rng.random_range(0.1..20.0));
            let ab = temporal_iou(a, b).unwrap();
            assert_eq!(ab, temporal_iou(b, a).unwrap());
            assert!((0.0..=1.0).contains(&ab));
            let shift = rng.random_range(-10.0..10.0);
            let scale = rng.random_range(0.5..4.0);
            let moved = temporal_iou(
                ((a.0 + shift) * scale, (a.1 + shift) * scale),
                ((b.0 + shift) * scale, (b.1 + shift) * scale),
            )
            .unwrap();
            assert!((moved - ab).abs() < 1e-9);
        }
    }

    #[test]
    fn recall_examples() {
        let gts = vec![vec![(0.0, 10.0)], vec![(20.0, 30.0)]];
        let exact = vec![
            vec![ScoredWindow::new(0.0, 10.0, 0.9)],
            vec![ScoredWindow::new(20.0, 30.0, 0.4)],
        ];
        assert_eq!(recall_at_1(&exact, &gts, 0.7).unwrap(), 1.0);
        let disjoint = vec![
            vec![ScoredWindow::new(50.0, 60.0, 0.9)],
            vec![ScoredWindow::new(0.0, 5.0, 0.4)],
        ];
        assert_eq!(recall_at_1(&disjoint, &gts, 0.5).unwrap(), 0.0);
        // empty prediction list counts as a miss
        let partial = vec![vec![ScoredWindow::new(0.0, 10.0, 0.9)], vec![]];
        assert_eq!(recall_at_1(&partial, &gts, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn ap_examples() {
        let gt = [(0.0, 10.0)];
        let tp = ScoredWindow::new(0.0, 10.0, 0.9);
        let fp = ScoredWindow::new(40.0, 50.0, 0.5);
        for &t in &default_iou_thresholds() {
            assert_eq!(average_precision(&[tp], &gt, t).unwrap(), 1.0);
        }
        assert_eq!(average_precision(&[tp, fp], &gt, 0.5).unwrap(), 1.0);
        let fp_first = ScoredWindow::new(40.0, 50.0, 0.95);
        assert_eq!(average_precision(&[fp_first, tp], &gt, 0.5).unwrap(), 0.5);
        // [FP, TP, TP] with 2 gts: the envelope lifts the first TP to 2/3
        let gts = [(0.0, 10.0), (20.0, 30.0)];
        let preds = [
            ScoredWindow::new(40.0, 50.0, 0.9),
            ScoredWindow::new(0.0, 10.0, 0.8),
            ScoredWindow::new(20.0, 30.0, 0.7),
        ];
        assert!((average_precision(&preds, &gts, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn map_report_fields() {
        let gts = vec![vec![(0.0, 10.0)]];
        let preds = vec![vec![ScoredWindow::new(0.0, 10.0, 1.0)]];
        let r = mean_ap(&preds, &gts, &default_iou_thresholds()).unwrap();
        assert_eq!(r.average, 1.0);
        assert_eq!(r.at_050, Some(1.0));
        assert_eq!(r.at_075, Some(1.0));
        assert!(mean_ap(&preds, &gts, &[]).is_err());
    }

    #[test]
    fn hit_examples() {
        assert_eq!(hit_at_1(&[0.1, 0.9, 0.3], &[0, 4, 1], 4).unwrap(), 1);
        assert_eq!(hit_at_1(&[0.1, 0.9, 0.3], &[2, 2, 2], 4).unwrap(), 0);
        assert!(hit_at_1(&[0.1], &[1, 2], 4).is_err());
    }

    #[test]
    fn hit_ties_go_to_lowest_index() {
        // enumerate every placement of a 2-way tie at the maximum
        for first in 0..4 {
            for second in (first + 1)..4 {
                let mut scores = vec![0.0; 4];
                scores[first] = 1.0;
                scores[second] = 1.0;
                let mut labels = vec![0; 4];
                labels[first] = 4;
                assert_eq!(hit_at_1(&scores, &labels, 4).unwrap(), 1);
                let mut labels = vec![0; 4];
                labels[second] = 4;
                assert_eq!(hit_at_1(&scores, &labels, 4).unwrap(), 0);
            }
        }
    }
}
