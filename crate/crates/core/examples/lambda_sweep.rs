//! Train once per keyword-loss weight and print the sweep table as CSV.

use vcka::pipeline::{default_sweep_values, sweep, write_sweep, RunConfig};
use vcka::synth::{synth_generate, SynthConfig};

fn main() -> vcka::Result<()> {
    let dataset = synth_generate(&SynthConfig::default(), 9)?;
    let config = RunConfig {
        steps: 150,
        ..RunConfig::default()
    };
    let result = sweep(&dataset, &config, &default_sweep_values())?;
    write_sweep(&result.rows, std::io::stdout())
}
