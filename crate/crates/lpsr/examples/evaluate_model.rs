//! Evaluate a generator on the test split against the bicubic baseline and
//! the high-resolution ceiling, using a separately trained evaluation OCR.
//!
//! The generator here is untrained, so expect the super-resolved row to sit
//! near the bicubic one; the point is the report plumbing.
//!
//!     cargo run --release --example evaluate_model

use candle_core::{DType, Device};
use lpsr::data::{build_dataset, DataConfig, Split};
use lpsr::eval::{evaluate, train_evaluator};
use lpsr::loss::SsimParams;
use lpsr::models::{Generator, GeneratorConfig, ParamStore};

fn main() -> lpsr::Result<()> {
    let dir = std::env::temp_dir().join("lpsr_example_eval");
    let data = DataConfig {
        count_brazilian: 10,
        count_mercosur: 10,
        out_dir: dir.clone(),
        seed: 12,
        ..DataConfig::default()
    };
    let manifest = build_dataset(&data)?;

    let mut store = ParamStore::new(&Device::Cpu, DType::F32, 12);
    let generator = Generator::new(
        &mut store,
        &GeneratorConfig {
            base_channels: 8,
            num_rcb: 1,
            units_per_rcb: 1,
            ..GeneratorConfig::default()
        },
    )?;

    // The evaluation OCR trains on freshly rendered high-resolution plates
    // only; it never sees generator output, which keeps the comparison honest.
    let (_es, evaluator) = train_evaluator(40, 8, 1e-3, 99, 8)?;

    let suite = evaluate(
        &generator,
        &evaluator,
        &manifest,
        Split::Test,
        &SsimParams::default(),
        8,
    )?;
    for (name, report) in suite.rows() {
        println!(
            "{name:>15}: rr_all={:.3} rr_ge6={:.3} rr_ge5={:.3} psnr={:.2} ssim={:.3}",
            report.rr_all, report.rr_ge6, report.rr_ge5, report.mean_psnr, report.mean_ssim
        );
    }
    Ok(())
}
