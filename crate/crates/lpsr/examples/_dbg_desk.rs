use lpsr::data::{DatasetManifest, Split};
use lpsr::eval::{evaluate, train_evaluator};
use lpsr::loss::SsimParams;
use lpsr::models::GeneratorConfig;
use lpsr::trainer::{TrainConfig, Trainer};

fn main() {
    let manifest = DatasetManifest::load(std::path::Path::new("/tmp/.tmp5Ssrmw/dataset")).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        seed: 20,
        lr: 1e-3,
        warmup_epochs: 40,
        generator: GeneratorConfig {
            base_channels: 32,
            num_rcb: 3,
            units_per_rcb: 2,
            ..GeneratorConfig::default()
        },
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.train(&manifest, std::path::Path::new("/tmp/deskprobe")).unwrap();
    println!("train: {:.0}s", t.elapsed().as_secs_f64());
    for r in &trainer.state.history {
        println!(
            "epoch {} l_c={:.3} l_p={:.3} l_s={:.3} total={:.3} val_rr={:.3} lr={:.1e}",
            r.epoch, r.l_c, r.l_p, r.l_s, r.total, r.val_rr, r.lr
        );
    }
    let (_st, net) = train_evaluator(600, 16, 1e-3, 777, 48).unwrap();
    let suite = evaluate(&trainer.gen, &net, &manifest, Split::Test, &SsimParams::default(), 16).unwrap();
    for (name, r) in suite.rows() {
        println!(
            "{name}: rr_all={:.3} rr_ge6={:.3} rr_ge5={:.3} psnr={:.2} ssim={:.4}",
            r.rr_all, r.rr_ge6, r.rr_ge5, r.mean_psnr, r.mean_ssim
        );
    }
}
