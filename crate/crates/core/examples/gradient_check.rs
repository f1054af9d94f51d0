//! Compare analytic loss gradients with central finite differences.

use vcka::gradcheck::{grad_check, LossKind, DEFAULT_STEP};
use vcka::losses::random_batch;

fn main() -> vcka::Result<()> {
    for seed in 0..3 {
        let batch = random_batch(seed, 4, 8, 5, 16);
        for kind in [
            LossKind::ClipKeyword,
            LossKind::VideoKeyword,
            LossKind::Keyword,
        ] {
            let report = grad_check(kind, &batch, DEFAULT_STEP, None, seed)?;
            for block in &report.blocks {
                println!(
                    "seed {seed} {:<14} {:<14} coords {:>4}  max {:.2e}  mean {:.2e}",
                    report.loss,
                    block.block,
                    block.coords_checked,
                    block.max_rel_error,
                    block.mean_rel_error
                );
            }
        }
    }
    Ok(())
}
