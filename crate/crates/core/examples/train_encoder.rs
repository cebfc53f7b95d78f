//! Trains the convolutional encoder on half of the 5-class data and reports
//! training accuracy and the logit embedding size.
//!
//! cargo run --release --example train_encoder

use behavior_discovery::data::{ensure_preprocessed, split_discovery, SplitSpec, SynthSpec};
use behavior_discovery::encoder::{embed, train, training_accuracy, EncoderConfig};

fn main() -> behavior_discovery::Result<()> {
    let d = ensure_preprocessed(&SynthSpec::resolve("5class")?.generate(1)?)?;
    let split = split_discovery(&d, &SplitSpec::new(None, 1))?;
    // a short schedule; the default is 2000 full-batch epochs
    let cfg = EncoderConfig {
        epochs: 30,
        learning_rate: 3e-3,
        batch_size: Some(32),
        ..EncoderConfig::default()
    };
    let out = train(&split.labeled, &cfg, 11)?;
    for (e, loss) in out.loss_trace.iter().enumerate().step_by(5) {
        println!("epoch {:3}  loss {loss:.4}", e + 1);
    }
    println!("training accuracy {:.3}", training_accuracy(&out.params, &split.labeled)?);
    let emb = embed(&out.params, &split.unlabeled)?;
    println!("{} unlabeled rows embedded as {}-d logits", emb.len(), emb.dim());
    Ok(())
}
