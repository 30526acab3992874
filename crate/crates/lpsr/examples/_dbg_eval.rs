use lpsr::data::{DatasetManifest, Split};
use lpsr::eval::{evaluate, train_evaluator, correct_chars};
use lpsr::image::batch_tensor;
use lpsr::loss::{decode_batch, SsimParams};
use lpsr::alphabet::Alphabet;
use candle_core::{DType, Device};

fn char_acc(net: &lpsr::models::OcrNet, manifest: &DatasetManifest, split: Split) -> f64 {
    let device = Device::Cpu;
    let entries = manifest.split_entries(split);
    let mut correct = 0usize;
    let mut total = 0usize;
    for chunk in entries.chunks(16) {
        let samples: Vec<_> = chunk.iter().map(|e| manifest.load_sample(e).unwrap()).collect();
        let hr = batch_tensor(&samples.iter().map(|s| &s.hr).collect::<Vec<_>>(), &device, DType::F32).unwrap();
        let probs = net.forward(&hr).unwrap();
        let preds = decode_batch(&probs, &Alphabet).unwrap();
        for (p, s) in preds.iter().zip(&samples) {
            correct += correct_chars(p, &s.label.text).unwrap();
            total += 7;
        }
    }
    correct as f64 / total as f64
}

fn main() {
    let manifest = DatasetManifest::load(std::path::Path::new("/tmp/.tmp5Ssrmw/dataset")).unwrap();
    let t = std::time::Instant::now();
    let (_st, net) = train_evaluator(1500, 16, 1e-3, 777, 48).unwrap();
    println!(
        "eval trained in {:.0}s; HR char acc train={:.3} test={:.3}",
        t.elapsed().as_secs_f64(),
        char_acc(&net, &manifest, Split::Train),
        char_acc(&net, &manifest, Split::Test),
    );
    // Old run1 generator (trained at lr 1e-4): suite with the new evaluator.
    let gen_dir = std::path::Path::new("/tmp/.tmp5Ssrmw/run1/last/generator");
    let cfg: lpsr::models::GeneratorConfig =
        lpsr::models::checkpoint::load_config(gen_dir).unwrap();
    let mut store = lpsr::models::ParamStore::new(&Device::Cpu, DType::F32, 0);
    let gen = lpsr::models::Generator::new(&mut store, &cfg).unwrap();
    lpsr::models::checkpoint::load_weights(gen_dir, &mut store).unwrap();
    let suite = evaluate(&gen, &net, &manifest, Split::Test, &SsimParams::default(), 16).unwrap();
    for (name, r) in suite.rows() {
        println!(
            "{name}: rr_all={:.3} rr_ge6={:.3} rr_ge5={:.3} psnr={:.2} ssim={:.4}",
            r.rr_all, r.rr_ge6, r.rr_ge5, r.mean_psnr, r.mean_ssim
        );
    }
}
