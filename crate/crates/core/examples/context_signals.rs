//! Scene-change and representativeness signals, saliency scores and the
//! anchor initialization they feed.

use vcka::clustering::cluster_clips;
use vcka::context::{anchor_init, saliency_scores, AnchorProjection, ContextSignals, SaliencyHead};
use vcka::synth::{synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let sample =
        &synth_generate(&SynthConfig::with_default_words(1, 24, 16, 3, 0.3, 3), 5)?.samples[0];
    let clusters = cluster_clips(&sample.clip_features, Some(3));
    let signals = ContextSignals::compute(&sample.clip_features, &clusters)?;
    println!("C^m {:?}", signals.change_vector);
    let rep: Vec<String> = signals
        .representativeness
        .iter()
        .map(|v| format!("{v:.3}"))
        .collect();
    println!("C^h [{}]", rep.join(", "));

    // clip features play the role of encoder tokens
    let head = SaliencyHead::seeded(16, 16, 0)?;
    let saliency = saliency_scores(&sample.clip_features, &signals.representativeness, &head)?;
    let shown: Vec<String> = saliency.iter().map(|v| format!("{v:.2}")).collect();
    println!("saliency [{}]", shown.join(", "));

    let anchors = anchor_init(&signals.change_vector, 6, &AnchorProjection::seeded(8, 0))?;
    println!("anchor queries: {} x {}", anchors.rows(), anchors.cols());
    Ok(())
}
