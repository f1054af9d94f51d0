//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{clip_keyword_loss, keyword_loss, video_keyword_loss, BatchInputs, LossReport};
use crate::numerics::Matrix;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Minimum coordinates probed per parameter block when sampling.
pub const MIN_COORDS: usize = 50;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub block: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: String,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Compares `analytic` against central differences of `f` at the given
/// coordinates of `x`.
pub fn check_coordinates<F>(
    block: &str,
    f: F,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
) -> Result<BlockCheck>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    let mut point = x.to_vec();
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for &k in coords {
        let orig = point[k];
        point[k] = orig + h;
        let plus = f(&point)?;
        point[k] = orig - h;
        let minus = f(&point)?;
        point[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss when perturbing {block}[{k}]"
            )));
        }
        let err = relative_error(analytic[k], (plus - minus) / (2.0 * h));
        max = max.max(err);
        sum += err;
    }
    Ok(BlockCheck {
        block: block.to_string(),
        coords_checked: coords.len(),
        max_rel_error: max,
        mean_rel_error: if coords.is_empty() {
            0.0
        } else {
            sum / coords.len() as f64
        },
    })
}

/// Which loss to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    ClipKeyword,
    VideoKeyword,
    Keyword,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::ClipKeyword => "clip_keyword",
            LossKind::VideoKeyword => "video_keyword",
            LossKind::Keyword => "keyword",
        }
    }

    pub fn evaluate(self, batch: &BatchInputs) -> Result<LossReport> {
        match self {
            LossKind::ClipKeyword => clip_keyword_loss(batch),
            LossKind::VideoKeyword => video_keyword_loss(batch),
            LossKind::Keyword => keyword_loss(batch),
        }
    }
}

#[derive(Clone, Copy)]
enum Block {
    Clips,
    Text,
}

fn block_matrices(batch: &BatchInputs, block: Block) -> Vec<&Matrix> {
    batch
        .samples
        .iter()
        .map(|s| match block {
            Block::Clips => &s.clip_features,
            Block::Text => &s.weighted_text,
        })
        .collect()
}

fn flatten(ms: &[&Matrix]) -> Vec<f64> {
    ms.iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect()
}

fn unflatten_into(batch: &mut BatchInputs, block: Block, flat: &[f64]) {
    let mut offset = 0;
    for s in &mut batch.samples {
        let m = match block {
            Block::Clips => &mut s.clip_features,
            Block::Text => &mut s.weighted_text,
        };
        let n = m.as_slice().len();
        m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
}

/// Checks the gradients of `kind` for both parameter blocks (all clip
/// features, all weighted word features). With `coords = Some(k)`, a seeded
/// random subset of `max(k, 50)` coordinates per block is probed (every
/// coordinate when the block is smaller); `None` probes every coordinate.
pub fn grad_check(
    kind: LossKind,
    batch: &BatchInputs,
    h: f64,
    coords: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let analytic = kind.evaluate(batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    for (name, block, grads) in [
        ("clip_features", Block::Clips, &analytic.grad_clips),
        ("weighted_text", Block::Text, &analytic.grad_text),
    ] {
        let x = flatten(&block_matrices(batch, block));
        let g = flatten(&grads.iter().collect::<Vec<_>>());
        let chosen: Vec<usize> = match coords {
            Some(k) if k.max(MIN_COORDS) < x.len() => {
                let mut idx = sample(&mut rng, x.len(), k.max(MIN_COORDS)).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..x.len()).collect(),
        };
        let f = |flat: &[f64]| -> Result<f64> {
            let mut perturbed = batch.clone();
            unflatten_into(&mut perturbed, block, flat);
            Ok(kind.evaluate(&perturbed)?.value)
        };
        blocks.push(check_coordinates(name, f, &x, &g, h, &chosen)?);
    }
    Ok(GradCheckReport {
        loss: kind.name().to_string(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_self_test() {
        // f(x) = sum_k (k+1) x_k^2 / 2 + x_0 x_1, gradient known in closed form
        let f = |x: &[f64]| -> Result<f64> {
            Ok(x.iter()
                .enumerate()
                .map(|(k, v)| (k as f64 + 1.0) * v * v / 2.0)
                .sum::<f64>()
                + x[0] * x[1])
        };
        let x = [0.3, -1.2, 2.0, 0.7];
        let mut g: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 + 1.0) * v)
            .collect();
        g[0] += x[1];
        g[1] += x[0];
        let report = check_coordinates("q", f, &x, &g, 1e-5, &[0, 1, 2, 3]).unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let f = |x: &[f64]| -> Result<f64> { Ok(x[0].powi(3)) };
        let report = check_coordinates("c", f, &[2.0], &[11.0], 1e-5, &[0]).unwrap();
        assert!(report.max_rel_error > 0.05);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let f = |x: &[f64]| -> Result<f64> { Ok(if x[0] > 1.0 { f64::NAN } else { x[0] }) };
        assert!(matches!(
            check_coordinates("n", f, &[1.0], &[1.0], 1e-3, &[0]),
            Err(Error::Numerical(_))
        ));
        let ok = |x: &[f64]| -> Result<f64> { Ok(x[0]) };
        assert!(check_coordinates("n", ok, &[1.0], &[1.0], 0.0, &[0]).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
