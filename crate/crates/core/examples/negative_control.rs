//! Negative control: the unlabeled pool holds only known classes, so the
//! free cluster should be contained in some known class (O_c >= 0.3).
//!
//! cargo run --release --example negative_control

use behavior_discovery::data::SynthSpec;
use behavior_discovery::encoder::EncoderConfig;
use behavior_discovery::protocols::{run_negative_control, TrialConfig};

fn main() -> behavior_discovery::Result<()> {
    let d = SynthSpec::resolve("5class")?.generate(4)?;
    let cfg = TrialConfig {
        encoder: EncoderConfig {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: Some(32),
            ..EncoderConfig::default()
        },
        seed: 4,
        ..TrialConfig::default()
    };
    let r = run_negative_control(&d, &cfg)?;
    println!("{:?}", r.row);
    for row in &r.analysis.containment.rows {
        println!(
            "free cluster {}: O_c {:.3} against class {}, novel {}",
            row.cluster, row.score, row.best_match_class, row.novel
        );
    }
    Ok(())
}
