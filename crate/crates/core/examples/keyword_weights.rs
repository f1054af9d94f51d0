//! A dog shown in one scene of a garden video: the specific word gets the
//! larger keyword weight.

use vcka::clustering::cluster_clips;
use vcka::keywords::KeywordWeights;
use vcka::synth::{synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let config = SynthConfig::dog_in_garden();
    let sample = &synth_generate(&config, 1)?.samples[0];
    let clusters = cluster_clips(&sample.clip_features, Some(config.num_segments));

    for tau in [0.05, 0.1, 0.5] {
        let kw = KeywordWeights::compute(&sample.word_features, &clusters, tau)?;
        let pairs: Vec<String> = sample
            .words
            .iter()
            .zip(&kw.weights)
            .map(|(w, v)| format!("{w}={v:.3}"))
            .collect();
        println!("tau {tau:<4} {}", pairs.join("  "));
    }
    Ok(())
}
