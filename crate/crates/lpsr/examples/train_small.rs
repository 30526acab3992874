//! Train a miniature generator/discriminator pair for a couple of epochs on
//! a freshly generated dataset and print the per-epoch history.
//!
//! This uses deliberately tiny models so it finishes in about a minute on a
//! laptop CPU; see the `train` subcommand of the CLI for real runs.
//!
//!     cargo run --release --example train_small

use lpsr::data::{build_dataset, DataConfig};
use lpsr::models::GeneratorConfig;
use lpsr::trainer::{TrainConfig, Trainer};

fn main() -> lpsr::Result<()> {
    let dir = std::env::temp_dir().join("lpsr_example_train");
    let data = DataConfig {
        count_brazilian: 8,
        count_mercosur: 8,
        out_dir: dir.join("dataset"),
        seed: 3,
        ..DataConfig::default()
    };
    let manifest = build_dataset(&data)?;

    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        warmup_epochs: 1,
        ocr_channels: 8,
        seed: 3,
        generator: GeneratorConfig {
            base_channels: 8,
            num_rcb: 1,
            units_per_rcb: 1,
            ..GeneratorConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg)?;
    trainer.train(&manifest, &dir.join("run"))?;

    println!("epoch  l_c      l_p      l_s      total    val_rr  lr");
    for r in &trainer.state.history {
        println!(
            "{:>5}  {:.5}  {:.5}  {:.5}  {:.5}  {:.4}  {:.1e}",
            r.epoch, r.l_c, r.l_p, r.l_s, r.total, r.val_rr, r.lr
        );
    }
    println!("checkpoints and history.csv under {}", dir.join("run").display());
    Ok(())
}
