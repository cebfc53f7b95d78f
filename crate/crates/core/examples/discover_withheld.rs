//! Withholds Pecking from the labels of the 5-class data and checks whether
//! the free cluster collects it and is flagged as novel.
//!
//! cargo run --release --example discover_withheld

use behavior_discovery::data::SynthSpec;
use behavior_discovery::encoder::EncoderConfig;
use behavior_discovery::protocols::{run_existing_discovery, TrialConfig};

fn main() -> behavior_discovery::Result<()> {
    let d = SynthSpec::resolve("5class")?.generate(2)?;
    let cfg = TrialConfig {
        withheld_class: Some(3),
        encoder: EncoderConfig {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: Some(32),
            ..EncoderConfig::default()
        },
        seed: 2,
        ..TrialConfig::default()
    };
    let r = run_existing_discovery(&d, &cfg)?;
    println!("{:?}", r.row);
    println!(
        "free cluster {:?}: accuracy {:?}, O_c {:?}, best match {:?}, novel {}",
        r.summary.discovered_cluster,
        r.summary.accuracy,
        r.summary.containment_score,
        r.summary.best_match_class,
        r.summary.novel
    );
    print!("{}", r.metrics.confusion.to_csv());
    Ok(())
}
