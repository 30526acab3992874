//! Single entry point for the whole pipeline: dataset generation, single
//! image degradation, training, evaluation, ablation sweeps, report
//! rendering, loss inspection and a fast self-check of the numeric core.
//!
//! Precedence is config file < command line flags: a flag given on the
//! command line always wins over the value in `--config`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use candle_core::{DType, Device, Tensor};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpsr::alphabet::{Alphabet,LpLabel, NUM_CLASSES, PLATE_LEN};
use lpsr::config::RunConfig;
use lpsr::data::{build_dataset, degrade, DatasetManifest, Split};
use lpsr::error::{Error, Result};
use lpsr::eval::plots::{plot_loss_curves, plot_recognition_rate};
use lpsr::eval::report::{ablation_csv, ablation_markdown, collect_ablation_runs, write_suite, AblationRun};
use lpsr::eval::{evaluate, psnr, train_evaluator};
use lpsr::image::{ImageTensor, HR_HEIGHT, HR_WIDTH};
use lpsr::loss::{
    classification_loss_t, dissimilarity_loss_t, layout_penalty_hard, layout_penalty_soft_t,
    layout_violations, lcofl_t, ssim_images, update_penalty_weights, ClassProbabilities,
    ConfusionMatrix, ConfusionRule, PenaltyWeights, SsimParams,
};
use lpsr::models::{
    checkpoint, DeformConv2d, Generator, GeneratorConfig, OcrConfig, OcrNet, ParamStore,
};
use lpsr::trainer::{AblationFlags, TrainState, Trainer};
use lpsr::verify::{grad_check, layout_violations_bruteforce, ssim_reference};

#[derive(Parser)]
#[command(name = "lpsr", version, about = "License-plate super-resolution pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; missing sections fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override applied to every seeded component.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        if let Ok(dir) = std::env::var("LPSR_WORKDIR") {
            cfg.workdir = PathBuf::from(dir);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic plate dataset and write its manifest.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for images and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count_brazilian: Option<usize>,
        #[arg(long)]
        count_mercosur: Option<usize>,
    },
    /// Degrade one 32x96 plate image to its 16x48 low-resolution version.
    Degrade {
        #[command(flatten)]
        common: CommonArgs,
        /// High-resolution input PNG (32x96).
        #[arg(long)]
        input: PathBuf,
        /// Where to write the low-resolution PNG.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the super-resolution generator against the OCR discriminator.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory (contains manifest.json).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory for checkpoints, history and the config snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Continue from the `last` checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        /// Ablation switches, e.g. "arch_mod=off,gan_style=on,lcofl=off".
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Evaluate a trained generator on a dataset split.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Run or checkpoint directory holding generator weights.
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Output directory for report.csv / report.md / report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate all eight ablation combinations sequentially.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Epochs per combination (ablation runs are deliberately short).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Render plots and a summary from a finished run directory.
    Report {
        /// Run directory containing state.json.
        #[arg(long)]
        run: PathBuf,
        /// Output directory; defaults to the run directory itself.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the loss breakdown for one SR/HR image pair.
    LossEval {
        #[command(flatten)]
        common: CommonArgs,
        /// Super-resolved (or otherwise reconstructed) 32x96 PNG.
        #[arg(long)]
        sr: PathBuf,
        /// Ground-truth high-resolution 32x96 PNG.
        #[arg(long)]
        hr: PathBuf,
        /// Seven-character plate text, e.g. ABC1D23.
        #[arg(long)]
        gt: String,
        /// Optional run directory; its discriminator supplies probabilities.
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Run the fast numeric invariant suite and print pass/fail per property.
    Selfcheck {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!(
            "unknown split '{other}' (expected train, val or test)"
        ))),
    }
}

fn parse_ablation(s: &str) -> Result<AblationFlags> {
    let mut flags = AblationFlags::default();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::Config(format!("bad ablation item '{part}' (expected name=on|off)"))
        })?;
        let on = match value {
            "on" | "true" | "1" => true,
            "off" | "false" | "0" => false,
            _ => {
                return Err(Error::Config(format!(
                    "bad ablation value '{value}' for '{key}' (expected on or off)"
                )))
            }
        };
        match key {
            "arch_mod" => flags.arch_mod = on,
            "gan_style" => flags.gan_style = on,
            "lcofl" => flags.lcofl = on,
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation flag '{key}' (expected arch_mod, gan_style or lcofl)"
                )))
            }
        }
    }
    Ok(flags)
}

/// Accept a run directory, a `last`/`best` checkpoint directory, or the
/// generator directory itself.
fn resolve_generator_dir(ckpt: &Path) -> Result<PathBuf> {
    for candidate in [
        ckpt.join("last").join("generator"),
        ckpt.join("generator"),
        ckpt.to_path_buf(),
    ] {
        if candidate.join(checkpoint::CONFIG_FILE).exists() {
            return Ok(candidate);
        }
    }
    Err(Error::Config(format!(
        "no generator checkpoint under {}",
        ckpt.display()
    )))
}

fn load_generator(ckpt: &Path) -> Result<(ParamStore, Generator)> {
    let dir = resolve_generator_dir(ckpt)?;
    let cfg: GeneratorConfig = checkpoint::load_config(&dir)?;
    let mut store = ParamStore::new(&Device::Cpu, DType::F32, 0);
    let gen = Generator::new(&mut store, &cfg)?;
    checkpoint::load_weights(&dir, &mut store)?;
    Ok((store, gen))
}

fn load_discriminator(ckpt: &Path) -> Result<(ParamStore, OcrNet)> {
    let mut dir = ckpt.join("last").join("discriminator");
    if !dir.join(checkpoint::CONFIG_FILE).exists() {
        dir = ckpt.join("discriminator");
    }
    let cfg: OcrConfig = checkpoint::load_config(&dir)?;
    let mut store = ParamStore::new(&Device::Cpu, DType::F32, 0);
    let net = OcrNet::new(&mut store, &cfg)?;
    checkpoint::load_weights(&dir, &mut store)?;
    Ok((store, net))
}

fn cmd_gen_data(
    common: &CommonArgs,
    out: Option<PathBuf>,
    count_brazilian: Option<usize>,
    count_mercosur: Option<usize>,
) -> Result<()> {
    let cfg = common.load()?;
    let mut data = cfg.data.clone();
    if let Some(dir) = out {
        data.out_dir = dir;
    }
    if let Some(n) = count_brazilian {
        data.count_brazilian = n;
    }
    if let Some(n) = count_mercosur {
        data.count_mercosur = n;
    }
    let manifest = build_dataset(&data)?;
    let mut snapshot = cfg.clone();
    snapshot.data = data.clone();
    snapshot.snapshot_into(&data.out_dir)?;
    println!(
        "manifest written: {} ({} train / {} val / {} test)",
        DatasetManifest::manifest_path(&data.out_dir).display(),
        manifest.split_entries(Split::Train).len(),
        manifest.split_entries(Split::Val).len(),
        manifest.split_entries(Split::Test).len(),
    );
    Ok(())
}

fn cmd_degrade(common: &CommonArgs, input: &Path, output: &Path) -> Result<()> {
    let cfg = common.load()?;
    let hr = ImageTensor::load_png(input)?;
    let (lr, achieved) = degrade(&hr, &cfg.data.degrade, &cfg.data.ssim, cfg.seed)?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    lr.save_png(output)?;
    println!("degraded: {} ssim={achieved:.4}", output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    common: &CommonArgs,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    resume: bool,
    ablate: Option<String>,
) -> Result<()> {
    let mut cfg = common.load()?;
    let data_dir = data.unwrap_or_else(|| cfg.data.out_dir.clone());
    let out_dir = out.unwrap_or_else(|| cfg.workdir.join("run"));
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(l) = lr {
        cfg.train.lr = l;
    }
    if let Some(spec) = &ablate {
        cfg.train.ablation = parse_ablation(spec)?;
    }
    cfg.validate()?;
    let manifest = DatasetManifest::load(&data_dir)?;
    cfg.snapshot_into(&out_dir)?;
    let mut trainer = if resume {
        Trainer::resume(cfg.train.clone(), &out_dir.join("last"))?
    } else {
        Trainer::new(cfg.train.clone())?
    };
    trainer.train(&manifest, &out_dir)?;
    let last = trainer.state.history.last();
    println!(
        "trained: {} epochs={} val_rr={:.4}",
        out_dir.display(),
        trainer.state.epoch,
        last.map(|r| r.val_rr).unwrap_or(0.0),
    );
    Ok(())
}

fn cmd_evaluate(
    common: &CommonArgs,
    ckpt: &Path,
    data: Option<PathBuf>,
    split: &str,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = common.load()?;
    let split = parse_split(split)?;
    let data_dir = data.unwrap_or_else(|| cfg.data.out_dir.clone());
    let out_dir = out.unwrap_or_else(|| ckpt.join("eval"));
    let manifest = DatasetManifest::load(&data_dir)?;
    let (_gs, generator) = load_generator(ckpt)?;
    eprintln!(
        "training evaluation OCR ({} steps)...",
        cfg.eval.evaluator_steps
    );
    let (_es, evaluator) = train_evaluator(
        cfg.eval.evaluator_steps,
        cfg.eval.batch_size,
        cfg.eval.evaluator_lr,
        cfg.seed.wrapping_add(0x45564c),
        cfg.eval.evaluator_channels,
    )?;
    let suite = evaluate(
        &generator,
        &evaluator,
        &manifest,
        split,
        &cfg.data.ssim,
        cfg.eval.batch_size,
    )?;
    write_suite(&out_dir, &suite)?;
    cfg.snapshot_into(&out_dir)?;
    for (name, report) in suite.rows() {
        println!(
            "{name}: n={} rr_all={:.4} rr_ge6={:.4} rr_ge5={:.4} psnr={:.2} ssim={:.4}",
            report.n, report.rr_all, report.rr_ge6, report.rr_ge5, report.mean_psnr, report.mean_ssim
        );
    }
    println!("report written: {}", out_dir.join("report.md").display());
    Ok(())
}

fn cmd_ablate(
    common: &CommonArgs,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    epochs: Option<usize>,
) -> Result<()> {
    let mut cfg = common.load()?;
    let data_dir = data.unwrap_or_else(|| cfg.data.out_dir.clone());
    let out_dir = out.unwrap_or_else(|| cfg.workdir.join("ablation"));
    cfg.train.epochs = epochs.unwrap_or(5);
    cfg.validate()?;
    let manifest = DatasetManifest::load(&data_dir)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    eprintln!(
        "training shared evaluation OCR ({} steps)...",
        cfg.eval.evaluator_steps
    );
    let (_es, evaluator) = train_evaluator(
        cfg.eval.evaluator_steps,
        cfg.eval.batch_size,
        cfg.eval.evaluator_lr,
        cfg.seed.wrapping_add(0x45564c),
        cfg.eval.evaluator_channels,
    )?;
    let mut run_dirs = Vec::new();
    for (i, flags) in AblationFlags::all_combinations().into_iter().enumerate() {
        let label = flags.label().replace(['=', ','], "_");
        let run_dir = out_dir.join(format!("run{i}_{label}"));
        eprintln!("[{}/8] {}", i + 1, flags.label());
        let mut run_cfg = cfg.clone();
        run_cfg.train.ablation = flags;
        run_cfg.snapshot_into(&run_dir)?;
        let mut trainer = Trainer::new(run_cfg.train.clone())?;
        trainer.train(&manifest, &run_dir)?;
        let suite = evaluate(
            &trainer.gen,
            &evaluator,
            &manifest,
            Split::Test,
            &cfg.data.ssim,
            cfg.eval.batch_size,
        )?;
        let run = AblationRun {
            flags,
            report: suite.sr.clone(),
        };
        let path = run_dir.join("ablation.json");
        std::fs::write(&path, serde_json::to_string_pretty(&run)?)
            .map_err(|e| Error::io(&path, e))?;
        run_dirs.push(run_dir);
    }
    let runs = collect_ablation_runs(&run_dirs)?;
    let csv = ablation_csv(&runs)?;
    let md = ablation_markdown(&runs)?;
    std::fs::write(out_dir.join("table.csv"), &csv)
        .map_err(|e| Error::io(&out_dir.join("table.csv"), e))?;
    std::fs::write(out_dir.join("table.md"), &md)
        .map_err(|e| Error::io(&out_dir.join("table.md"), e))?;
    print!("{md}");
    Ok(())
}

fn cmd_report(run: &Path, out: Option<PathBuf>) -> Result<()> {
    let out_dir = out.unwrap_or_else(|| run.to_path_buf());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let state_path = run.join("last").join("state.json");
    let state_path = if state_path.exists() {
        state_path
    } else {
        run.join("state.json")
    };
    let raw = std::fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let state: TrainState = serde_json::from_str(&raw)?;
    if state.history.is_empty() {
        return Err(Error::Config(format!(
            "no epochs recorded in {}",
            state_path.display()
        )));
    }
    plot_loss_curves(&state.history, &out_dir.join("loss_curves.png"))?;
    plot_recognition_rate(&state.history, &out_dir.join("recognition_rate.png"))?;
    let last = state.history.last().unwrap();
    let mut md = String::from("# Training run\n\n");
    md.push_str(&format!(
        "- epochs: {}\n- final total loss: {:.6}\n- final val recognition rate: {:.4}\n- final lr: {:.3e}\n\n",
        state.epoch, last.total, last.val_rr, last.lr
    ));
    md.push_str("![loss](loss_curves.png)\n\n![recognition rate](recognition_rate.png)\n");
    let md_path = out_dir.join("summary.md");
    std::fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;
    println!("report written: {}", md_path.display());
    Ok(())
}

fn cmd_loss_eval(
    common: &CommonArgs,
    sr: &Path,
    hr: &Path,
    gt: &str,
    ckpt: Option<PathBuf>,
) -> Result<()> {
    let cfg = common.load()?;
    let sr_img = ImageTensor::load_png(sr)?;
    let hr_img = ImageTensor::load_png(hr)?;
    sr_img.expect_shape(HR_HEIGHT, HR_WIDTH)?;
    hr_img.expect_shape(HR_HEIGHT, HR_WIDTH)?;
    let label = LpLabel::new(gt, lpsr::alphabet::LayoutId::Brazilian)?;
    let alphabet = Alphabet;
    let mut gt_idx = [0usize; PLATE_LEN];
    for (i, c) in label.text.chars().enumerate() {
        gt_idx[i] = alphabet.class_of(c)?;
    }
    let (_ds, disc) = match &ckpt {
        Some(dir) => load_discriminator(dir)?,
        None => {
            let mut store = ParamStore::new(&Device::Cpu, DType::F32, cfg.seed);
            let net = OcrNet::new(&mut store, &OcrConfig::discriminator())?;
            (store, net)
        }
    };
    let device = Device::Cpu;
    let probs = disc.read_plate(&sr_img)?;
    let p = probs.to_tensor(&device, DType::F64)?.unsqueeze(0)?;
    let g = Tensor::from_vec(
        gt_idx.iter().map(|&i| i as u32).collect::<Vec<u32>>(),
        (1, PLATE_LEN),
        &device,
    )?;
    let sr_t = sr_img.to_chw_tensor(&device, DType::F64)?.unsqueeze(0)?;
    let hr_t = hr_img.to_chw_tensor(&device, DType::F64)?.unsqueeze(0)?;
    let weights = PenaltyWeights::new(cfg.train.w_max).to_tensor(&device, DType::F64)?;
    let breakdown = lcofl_t(&p, &g, &sr_t, &hr_t, &weights, cfg.train.beta, &cfg.data.ssim)?;
    let v = breakdown.values()?;
    let hard = layout_penalty_hard(&probs.argmax_indices(), &gt_idx, cfg.train.beta);
    let decoded: String = probs
        .argmax_indices()
        .iter()
        .map(|&i| alphabet.symbol(i))
        .collect();
    println!(
        "{}",
        serde_json::json!({
            "decoded": decoded,
            "l_c": v.l_c,
            "l_p_soft": v.l_p,
            "l_p_hard": hard,
            "l_s": v.l_s,
            "total": v.total,
        })
    );
    Ok(())
}

// ---- selfcheck -------------------------------------------------------------

struct Check {
    name: &'static str,
    outcome: Result<String>,
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _| {
        [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()]
    })
}

fn random_gt(rng: &mut ChaCha8Rng, b: usize) -> (Vec<u32>, Vec<[usize; PLATE_LEN]>) {
    let mut flat = Vec::with_capacity(b * PLATE_LEN);
    let mut rows = Vec::with_capacity(b);
    for _ in 0..b {
        let mut row = [0usize; PLATE_LEN];
        for slot in row.iter_mut() {
            *slot = rng.gen_range(0..NUM_CLASSES);
        }
        flat.extend(row.iter().map(|&i| i as u32));
        rows.push(row);
    }
    (flat, rows)
}

fn check_classification_gradient(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 2;
    let x0: Vec<f64> = (0..b * PLATE_LEN * NUM_CLASSES)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let (gt_flat, _) = random_gt(&mut rng, b);
    let device = Device::Cpu;
    let gt = Tensor::from_vec(gt_flat, (b, PLATE_LEN), &device)?;
    let w: Vec<f64> = (0..NUM_CLASSES).map(|i| 1.0 + 0.1 * (i % 5) as f64).collect();
    let weights = Tensor::from_vec(w, NUM_CLASSES, &device)?;
    let res = grad_check(
        |x| {
            let probs = candle_nn::ops::softmax(x, 2)?;
            classification_loss_t(&probs, &gt, &weights)
        },
        &x0,
        &[b, PLATE_LEN, NUM_CLASSES],
        1e-5,
        40,
    )?;
    if res.max_rel_error < 1e-4 {
        Ok(format!("max rel err {:.2e}", res.max_rel_error))
    } else {
        Err(Error::Config(format!(
            "classification gradient rel err {:.2e}",
            res.max_rel_error
        )))
    }
}

fn check_layout_gradient(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 2;
    let x0: Vec<f64> = (0..b * PLATE_LEN * NUM_CLASSES)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let (gt_flat, _) = random_gt(&mut rng, b);
    let device = Device::Cpu;
    let gt = Tensor::from_vec(gt_flat, (b, PLATE_LEN), &device)?;
    let res = grad_check(
        |x| {
            let probs = candle_nn::ops::softmax(x, 2)?;
            layout_penalty_soft_t(&probs, &gt, 0.2)
        },
        &x0,
        &[b, PLATE_LEN, NUM_CLASSES],
        1e-5,
        40,
    )?;
    if res.max_rel_error < 1e-4 {
        Ok(format!("max rel err {:.2e}", res.max_rel_error))
    } else {
        Err(Error::Config(format!(
            "layout gradient rel err {:.2e}",
            res.max_rel_error
        )))
    }
}

fn check_ssim_gradient(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [1usize, 3, 16, 16];
    let n: usize = shape.iter().product();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let hr_vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let device = Device::Cpu;
    let hr = Tensor::from_vec(hr_vals, &shape[..], &device)?;
    let params = SsimParams::default();
    // Larger step than the probability-space checks: the per-element
    // gradients here are tiny, so a smaller eps runs into cancellation noise.
    let res = grad_check(
        |x| dissimilarity_loss_t(x, &hr, &params),
        &x0,
        &shape,
        1e-4,
        32,
    )?;
    if res.max_rel_error < 1e-4 {
        Ok(format!("max rel err {:.2e}", res.max_rel_error))
    } else {
        Err(Error::Config(format!(
            "ssim gradient rel err {:.2e}",
            res.max_rel_error
        )))
    }
}

fn check_ssim_oracle(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SsimParams::default();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let a = random_image(&mut rng, HR_HEIGHT, HR_WIDTH);
        let b = random_image(&mut rng, HR_HEIGHT, HR_WIDTH);
        let module = ssim_images(&a, &b, &params)?;
        let reference = ssim_reference(&a, &b, &params);
        worst = worst.max((module - reference).abs());
    }
    let x = random_image(&mut rng, HR_HEIGHT, HR_WIDTH);
    let self_ssim = ssim_images(&x, &x, &params)?;
    if worst < 1e-6 && (self_ssim - 1.0).abs() < 1e-9 {
        Ok(format!("max oracle gap {worst:.2e}, ssim(x,x)={self_ssim:.12}"))
    } else {
        Err(Error::Config(format!(
            "ssim oracle gap {worst:.2e}, ssim(x,x)={self_ssim}"
        )))
    }
}

fn check_layout_oracle(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let (_, rows) = random_gt(&mut rng, 2);
        let got = layout_violations(&rows[0], &rows[1]);
        let want = layout_violations_bruteforce(&rows[0], &rows[1]);
        if got != want {
            return Err(Error::Config(format!(
                "layout mismatch: {got} vs {want} for {:?} / {:?}",
                rows[0], rows[1]
            )));
        }
    }
    Ok("1000 random pairs agree".into())
}

fn check_uniform_classification(_seed: u64) -> Result<String> {
    let probs = ClassProbabilities::uniform();
    let gt = [0usize, 11, 22, 33, 4, 15, 26];
    let loss = lpsr::loss::classification_loss(&probs, &gt, &PenaltyWeights::new(10.0))?;
    let expected = (NUM_CLASSES as f64).ln();
    let gap = (loss - expected).abs();
    if gap < 1e-9 {
        Ok(format!("ln 36 gap {gap:.2e}"))
    } else {
        Err(Error::Config(format!("uniform loss {loss} vs ln36 {expected}")))
    }
}

fn check_psnr_offset(_seed: u64) -> Result<String> {
    let a = ImageTensor::filled(8, 8, 0.25);
    let b = ImageTensor::filled(8, 8, 0.75);
    let value = psnr(&a, &b)?;
    let gap = (value - 6.020599913279624).abs();
    if gap < 1e-4 {
        Ok(format!("psnr {value:.6} dB"))
    } else {
        Err(Error::Config(format!("psnr {value} vs 6.0206")))
    }
}

fn check_deform_degeneracy(seed: u64) -> Result<String> {
    let device = Device::Cpu;
    let mut store = ParamStore::new(&device, DType::F32, seed);
    let layer = DeformConv2d::new(&mut store, "check", 4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let data: Vec<f32> = (0..4 * 8 * 12).map(|_| rng.gen::<f32>()).collect();
    let x = Tensor::from_vec(data, (1, 4, 8, 12), &device)?;
    let deformed = layer.forward(&x)?;
    let standard = layer.forward_zero_offsets(&x)?;
    let gap = (deformed - standard)?
        .abs()?
        .max_all()?
        .to_dtype(DType::F64)?
        .to_scalar::<f64>()?;
    if gap < 1e-6 {
        Ok(format!("max gap {gap:.2e}"))
    } else {
        Err(Error::Config(format!("deform vs standard conv gap {gap:.2e}")))
    }
}

fn check_weight_updates(_seed: u64) -> Result<String> {
    let alphabet = Alphabet;
    let rule = ConfusionRule::default();
    let base = PenaltyWeights::new(10.0);

    let mut diag = ConfusionMatrix::new();
    for c in 0..NUM_CLASSES {
        for _ in 0..20 {
            diag.record(c, c);
        }
    }
    let updated = update_penalty_weights(&base, &diag, 0.5, &rule);
    if updated.values() != base.values() {
        return Err(Error::Config("diagonal confusion changed weights".into()));
    }

    let s = alphabet.class_of('S')?;
    let five = alphabet.class_of('5')?;
    let mut cm = ConfusionMatrix::new();
    for _ in 0..10 {
        cm.record(s, five);
    }
    let bumped = update_penalty_weights(&base, &cm, 0.5, &rule);
    for c in 0..NUM_CLASSES {
        let expected = if c == s { base.get(c) + 0.5 } else { base.get(c) };
        if (bumped.get(c) - expected).abs() > 1e-12 {
            return Err(Error::Config(format!("unexpected weight change at class {c}")));
        }
    }

    let mut w = base.clone();
    for _ in 0..100 {
        w = update_penalty_weights(&w, &cm, 0.5, &rule);
    }
    if (w.get(s) - w.w_max()).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "weight did not saturate: {} vs {}",
            w.get(s),
            w.w_max()
        )));
    }
    Ok("diagonal no-op, single bump, saturation".into())
}

fn cmd_selfcheck(common: &CommonArgs) -> Result<()> {
    let cfg = common.load()?;
    let seed = cfg.seed;
    let checks = vec![
        Check {
            name: "classification_gradient",
            outcome: check_classification_gradient(seed),
        },
        Check {
            name: "layout_penalty_gradient",
            outcome: check_layout_gradient(seed.wrapping_add(1)),
        },
        Check {
            name: "structural_gradient",
            outcome: check_ssim_gradient(seed.wrapping_add(2)),
        },
        Check {
            name: "ssim_oracle",
            outcome: check_ssim_oracle(seed.wrapping_add(3)),
        },
        Check {
            name: "layout_penalty_oracle",
            outcome: check_layout_oracle(seed.wrapping_add(4)),
        },
        Check {
            name: "uniform_classification_loss",
            outcome: check_uniform_classification(seed),
        },
        Check {
            name: "psnr_closed_form",
            outcome: check_psnr_offset(seed),
        },
        Check {
            name: "deformable_degeneracy",
            outcome: check_deform_degeneracy(seed.wrapping_add(5)),
        },
        Check {
            name: "penalty_weight_updates",
            outcome: check_weight_updates(seed),
        },
    ];
    let mut failed = 0usize;
    for check in &checks {
        match &check.outcome {
            Ok(detail) => println!("PASS {} ({detail})", check.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {} ({e})", check.name);
            }
        }
    }
    if failed > 0 {
        Err(Error::Config(format!("{failed} selfcheck properties failed")))
    } else {
        println!("selfcheck: {} properties passed", checks.len());
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            common,
            out,
            count_brazilian,
            count_mercosur,
        } => cmd_gen_data(&common, out, count_brazilian, count_mercosur),
        Command::Degrade {
            common,
            input,
            output,
        } => cmd_degrade(&common, &input, &output),
        Command::Train {
            common,
            data,
            out,
            epochs,
            batch_size,
            lr,
            resume,
            ablate,
        } => cmd_train(&common, data, out, epochs, batch_size, lr, resume, ablate),
        Command::Evaluate {
            common,
            ckpt,
            data,
            split,
            out,
        } => cmd_evaluate(&common, &ckpt, data, &split, out),
        Command::Ablate {
            common,
            data,
            out,
            epochs,
        } => cmd_ablate(&common, data, out, epochs),
        Command::Report { run, out } => cmd_report(&run, out),
        Command::LossEval {
            common,
            sr,
            hr,
            gt,
            ckpt,
        } => cmd_loss_eval(&common, &sr, &hr, &gt, ckpt),
        Command::Selfcheck { common } => cmd_selfcheck(&common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One line, machine parsable: "error: <message>".
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
