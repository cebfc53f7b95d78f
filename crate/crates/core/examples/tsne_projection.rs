//! Exact t-SNE of two 10-dimensional Gaussian blobs.
//!
//! cargo run --release --example tsne_projection

use behavior_discovery::matrix::Matrix;
use behavior_discovery::projection::{tsne, TsneConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> behavior_discovery::Result<()> {
    let mut rng = behavior_discovery::seed::rng_from(3);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|i| {
            let shift = if i < 60 { 0.0 } else { 8.0 };
            (0..10).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let x = Matrix::from_rows(&rows);
    let p = tsne(&x, &TsneConfig::default(), 42)?;
    let (lo, hi) = p
        .row_perplexities
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!("row perplexities in [{lo:.5}, {hi:.5}]");
    println!("KL after exaggeration {:.4}, final {:.4}", p.kl_after_exaggeration, p.kl);
    let mean = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        r.fold([0.0, 0.0], |acc, i| {
            let q = p.point(i);
            [acc[0] + q[0] / n, acc[1] + q[1] / n]
        })
    };
    println!("blob centers in 2-D: {:.2?} and {:.2?}", mean(0..60), mean(60..120));
    Ok(())
}
