use candle_core::{DType, Device};
use lpsr::data::{DatasetManifest, Split};
use lpsr::image::batch_tensor;
use lpsr::loss::{dissimilarity_loss_t, SsimParams};
use lpsr::models::{Generator, GeneratorConfig, ParamStore};
use lpsr::trainer::adam::Adam;

fn main() {
    let device = Device::Cpu;
    let manifest = DatasetManifest::load(std::path::Path::new("/tmp/.tmp5Ssrmw/dataset")).unwrap();
    let entries = manifest.split_entries(Split::Train);
    let samples: Vec<_> = entries[..16].iter().map(|e| manifest.load_sample(e).unwrap()).collect();
    let lr_b = batch_tensor(&samples.iter().map(|s| &s.lr).collect::<Vec<_>>(), &device, DType::F32).unwrap();
    let hr_b = batch_tensor(&samples.iter().map(|s| &s.hr).collect::<Vec<_>>(), &device, DType::F32).unwrap();
    let cfg = GeneratorConfig { base_channels: 32, num_rcb: 3, units_per_rcb: 2, ..GeneratorConfig::default() };
    let mut store = ParamStore::new(&device, DType::F32, 1);
    let gen = Generator::new(&mut store, &cfg).unwrap();
    let mut opt = Adam::new(store.named_vars().to_vec()).unwrap();
    let ssim = SsimParams::default();
    for step in 0..200 {
        let sr = gen.forward(&lr_b).unwrap();
        let loss = dissimilarity_loss_t(&sr, &hr_b, &ssim).unwrap();
        let grads = loss.backward().unwrap();
        opt.step(1e-3, &grads).unwrap();
        if step % 20 == 0 {
            println!("step {step} l_s={:.4}", loss.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap());
        }
    }
}
