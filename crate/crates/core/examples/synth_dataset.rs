//! Generates the 5-class synthetic dataset, writes it as CSV and reads it back.
//!
//! cargo run --release --example synth_dataset

use behavior_discovery::data::{load_csv, write_csv, SynthSpec};

fn main() -> behavior_discovery::Result<()> {
    let spec = SynthSpec::resolve("5class")?;
    let d = spec.generate(7)?;
    for (class, n) in d.class_counts() {
        println!("{class}:{:<10} {n:4} snippets", d.class_name(class));
    }

    let dir = std::env::temp_dir().join("bdisc-synth-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("five.csv");
    write_csv(&d, &path)?;
    let back = load_csv(&path)?;
    assert_eq!(back, d);
    println!("round-tripped {} snippets through {}", back.len(), path.display());

    let stream = spec.stream(3, 50, Some(1), 99)?;
    println!("stream of {} unlabeled snippets, window 1 holds an unseen class", stream.len());
    Ok(())
}
