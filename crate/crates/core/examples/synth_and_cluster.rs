//! Generate a planted-segment video and recover its scenes.
//!
//! Run with `cargo run --example synth_and_cluster`.

use vcka::clustering::{build_hierarchy, cluster_clips, purity, select_partition};
use vcka::synth::{planted_labels, synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let config = SynthConfig::with_default_words(1, 60, 32, 4, 0.1, 3);
    let dataset = synth_generate(&config, 42)?;
    let sample = &dataset.samples[0];
    let planted = planted_labels(sample).expect("synthetic samples carry labels");

    let hierarchy = build_hierarchy(&sample.clip_features);
    println!("clusters per level: {:?}", hierarchy.cluster_counts());

    let nearest = select_partition(&hierarchy, None);
    println!(
        "default target -> level {} with {} clusters, purity {:.3}",
        nearest.level,
        nearest.num_clusters,
        purity(&nearest.assignment, &planted)
    );

    let exact = cluster_clips(&sample.clip_features, Some(4));
    println!(
        "target 4 -> purity {:.3}",
        purity(&exact.assignment, &planted)
    );
    println!("assignment: {:?}", exact.assignment);
    Ok(())
}
