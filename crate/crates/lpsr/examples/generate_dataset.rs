//! Render a small synthetic plate dataset and print what ended up in it.
//!
//!     cargo run --example generate_dataset

use lpsr::data::{build_dataset, DataConfig, Split};

fn main() -> lpsr::Result<()> {
    let dir = std::env::temp_dir().join("lpsr_example_dataset");
    let config = DataConfig {
        count_brazilian: 10,
        count_mercosur: 10,
        out_dir: dir.clone(),
        seed: 42,
        ..DataConfig::default()
    };
    let manifest = build_dataset(&config)?;
    println!("dataset written to {}", dir.display());
    for split in Split::ALL {
        let entries = manifest.split_entries(split);
        println!("  {split:?}: {} pairs", entries.len());
    }
    // Every entry records the SSIM achieved by the degradation pipeline;
    // all of them sit below the 0.1 threshold.
    let worst = manifest
        .split_entries(Split::Train)
        .iter()
        .map(|e| e.ssim)
        .fold(f64::MIN, f64::max);
    println!("worst train SSIM: {worst:.4} (threshold {})", config.degrade.threshold);
    let entry = manifest.split_entries(Split::Train)[0];
    let sample = manifest.load_sample(entry)?;
    println!(
        "first train sample: '{}' hr {}x{} lr {}x{}",
        sample.label.text,
        sample.hr.height,
        sample.hr.width,
        sample.lr.height,
        sample.lr.width
    );
    Ok(())
}
