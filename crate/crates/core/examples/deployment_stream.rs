//! Trains once on the 9-class data, then scores a stream of windows in
//! which window 2 holds an unseen behavior.
//!
//! cargo run --release --example deployment_stream

use behavior_discovery::data::SynthSpec;
use behavior_discovery::encoder::EncoderConfig;
use behavior_discovery::protocols::{run_deployment, DeploymentConfig, TrialConfig};

fn main() -> behavior_discovery::Result<()> {
    let spec = SynthSpec::resolve("9class")?;
    let d = spec.generate(0)?;
    let stream = spec.stream(4, 100, Some(2), 1000)?;
    let trial = TrialConfig {
        encoder: EncoderConfig {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: Some(32),
            ..EncoderConfig::default()
        },
        ..TrialConfig::default()
    };
    let r = run_deployment(&d, &stream, &trial, &DeploymentConfig::default())?;
    println!("{} known classes, {} free cluster(s)", r.known_classes.len(), r.n_free);
    for w in &r.windows {
        let scores: Vec<String> = w
            .analysis
            .containment
            .rows
            .iter()
            .map(|x| format!("{:.3}", x.score))
            .collect();
        println!("window {} O_c [{}] novel {}", w.index, scores.join(", "), w.novel);
    }
    println!("novel windows: {:?}", r.novel_windows());
    Ok(())
}
