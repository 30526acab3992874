//! Render the loss-curve and recognition-rate plots from a synthetic
//! training history.
//!
//!     cargo run --example plot_history

use lpsr::eval::plots::{plot_loss_curves, plot_recognition_rate};
use lpsr::trainer::EpochRecord;

fn main() -> lpsr::Result<()> {
    let history: Vec<EpochRecord> = (0..30)
        .map(|e| {
            let t = e as f64;
            EpochRecord {
                epoch: e,
                l_c: 3.6 * (-0.08 * t).exp() + 0.4,
                l_p: 0.8 * (-0.12 * t).exp(),
                l_s: 0.45 * (-0.05 * t).exp() + 0.05,
                total: 3.6 * (-0.08 * t).exp() + 0.8 * (-0.12 * t).exp() + 0.5,
                val_rr: 1.0 - (-0.1 * t).exp().min(1.0),
                lr: if e < 12 { 1e-4 } else { 9e-5 },
                weight_digest: String::new(),
            }
        })
        .collect();

    let dir = std::env::temp_dir().join("lpsr_example_plots");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    plot_loss_curves(&history, &dir.join("loss_curves.png"))?;
    plot_recognition_rate(&history, &dir.join("recognition_rate.png"))?;
    println!("plots written to {}", dir.display());
    Ok(())
}
