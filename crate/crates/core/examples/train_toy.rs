//! Optimize clip and word features under the keyword-aware loss and watch
//! the relevant clips align with the pooled query.

use vcka::pipeline::{train_toy, RunConfig};
use vcka::synth::{synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let dataset = synth_generate(&SynthConfig::default(), 7)?;
    let config = RunConfig::default();
    let outcome = train_toy(&dataset, &config)?;
    for row in outcome.curve.iter().step_by(50) {
        println!(
            "step {:>3}  L_ck {:.4}  L_vk {:.4}  total {:.4}",
            row.step, row.l_ck, row.l_vk, row.total
        );
    }
    let (a, b) = (&outcome.initial_alignment, &outcome.final_alignment);
    println!("relevant cosine   {:.3} -> {:.3}", a.relevant, b.relevant);
    println!(
        "background cosine {:.3} -> {:.3}",
        a.background, b.background
    );
    println!("monotone: {}", outcome.is_monotone());
    Ok(())
}
