//! Runs one discovery trial and writes its report directory: JSON, CSVs and
//! the four-panel and confusion SVGs.
//!
//! cargo run --release --example plots [out-dir]

use std::path::PathBuf;

use behavior_discovery::data::SynthSpec;
use behavior_discovery::encoder::EncoderConfig;
use behavior_discovery::protocols::report::write_trial;
use behavior_discovery::protocols::{run_existing_discovery, TrialConfig};

fn main() -> behavior_discovery::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("bdisc-plots-example"), PathBuf::from);
    let d = SynthSpec::resolve("5class")?.generate(3)?;
    let cfg = TrialConfig {
        withheld_class: Some(2),
        encoder: EncoderConfig {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: Some(32),
            ..EncoderConfig::default()
        },
        seed: 3,
        ..TrialConfig::default()
    };
    let r = run_existing_discovery(&d, &cfg)?;
    let files = write_trial(&out, &r)?;
    println!("{}", files.panels_svg.display());
    println!("{}", files.confusion_svg.display());
    println!("{}", files.report.display());
    Ok(())
}
