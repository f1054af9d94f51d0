//! Synthetic data through inference to evaluation, all in memory, with the
//! run settings read from TOML.

use vcka::pipeline::{evaluate, run_inference, RunConfig};
use vcka::synth::{synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let config = RunConfig::from_toml_str("tau = 0.1\ntarget_clusters = 4\nseed = 3\n")?;
    let dataset = synth_generate(&SynthConfig::default(), config.seed)?;
    let output = run_inference(&dataset, &config)?;

    let first = &output.signals[0];
    println!(
        "{}: {} clusters, keyword weights {:?}",
        first.video_id, first.num_clusters, first.keyword_weights
    );
    println!(
        "top window {:?}",
        output.predictions[0].pred_relevant_windows.first()
    );

    let report = evaluate(&output.predictions, &dataset, &config)?;
    for (name, value) in report.rows() {
        println!("{name:<9} {value:.4}");
    }
    Ok(())
}
