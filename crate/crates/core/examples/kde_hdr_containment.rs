//! HDR thresholds and containment between Gaussians and a fitted KDE.
//!
//! cargo run --release --example kde_hdr_containment

use behavior_discovery::density::{contain, fit_kde, hdr_threshold, Density2, Gaussian2, Hdr};

fn main() -> behavior_discovery::Result<()> {
    let standard = Gaussian2::standard();
    let t = hdr_threshold(&standard, 0.95, 2000, 1)?;
    println!(
        "standard normal 95% HDR density level {:.5} (exact {:.5})",
        t.exp(),
        0.05 / (2.0 * std::f64::consts::PI)
    );

    for d in [0.0, 1.0, 2.0, 4.0, 8.0] {
        let other = Gaussian2::isotropic([d, 0.0], 1.0);
        println!("Contain at distance {d}: {:.3}", contain(&standard, &other, 0.95, 2000, 7)?);
    }

    let sample = standard.sample(300, 5);
    let kde = fit_kde(&sample)?;
    println!("KDE over {} points, Silverman factor {:.4}", kde.len(), kde.factor());
    let hdr = Hdr::new(&kde, 0.95, 2000, 9)?;
    let fresh = standard.sample(2000, 10);
    println!("fresh-sample mass inside the KDE's 95% HDR: {:.3}", hdr.mass_of(&fresh));
    Ok(())
}
