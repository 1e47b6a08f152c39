//! Command-line interface: preprocess, train, eval, predict, bench.
//!
//! Exit codes: 0 success, 2 configuration/contract errors, 3 i/o errors,
//! 4 non-finite loss. All state flows through flags and the config file;
//! no environment variables.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataset::{
    prepare_image_for_model, scan_directory, stratified_split, DatasetManifest, Split,
};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::{emit_comparison_table, emit_confusion_svg, emit_csv, metrics, ConfusionMatrix};
use crate::mixprocessing::{mixprocess_timed, synthetic_phantom, StageTimings};
use crate::model::init_params;
use crate::tensor::Tensor;
use crate::training::{
    evaluate_split, load_checkpoint, predict_one, save_checkpoint, train, Checkpoint,
    checkpoint_bytes, ValSnapshot,
};

fn key_reference() -> &'static str {
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(|| {
        let mut s = String::from("Config file keys (one `key = value` per line, `#` comments):\n");
        for (key, default, doc) in RunConfig::default().key_entries() {
            s.push_str(&format!("  {key:<38} default {default:<8} {doc}\n"));
        }
        s
    })
}

#[derive(Parser)]
#[command(
    name = "nasnet-vit",
    about = "Lung-image classification pipeline: image enhancement, dual-branch model, training and evaluation",
    after_long_help = key_reference()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the five-stage enhancement chain to every image under a directory
    #[command(after_help = key_reference())]
    Preprocess {
        /// Input directory (scanned recursively for PNG/JPG)
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory; mirrors the input layout, writes PNG
        #[arg(long)]
        out: PathBuf,
        /// Config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on a class-labeled directory and keep the best checkpoint
    #[command(after_help = key_reference())]
    Train {
        /// Dataset root with one subdirectory per class
        #[arg(long)]
        data: PathBuf,
        /// Config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoint, history and manifests
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split and write the reports
    #[command(after_help = key_reference())]
    Eval {
        /// Dataset root with one subdirectory per class
        #[arg(long)]
        data: PathBuf,
        /// Trained checkpoint file
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for metrics CSV, confusion SVG and comparison table
        #[arg(long)]
        out: PathBuf,
        /// Which split to evaluate
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Classify one image and print the class probabilities
    #[command(after_help = key_reference())]
    Predict {
        /// Image file (PNG/JPG)
        #[arg(long)]
        image: PathBuf,
        /// Trained checkpoint file
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Report model size, parameter count, and per-stage/forward timings
    #[command(after_help = key_reference())]
    Bench {
        /// Config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of forward-latency samples
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
}

/// Parses arguments (without the binary name) and runs one subcommand,
/// returning the process exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let argv = std::iter::once("nasnet-vit".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Preprocess { input, out, config } => cmd_preprocess(&input, &out, config.as_deref()),
        Command::Train { data, config, out } => cmd_train(&data, config.as_deref(), &out),
        Command::Eval {
            data,
            checkpoint,
            out,
            split,
        } => cmd_eval(&data, &checkpoint, &out, &split),
        Command::Predict { image, checkpoint } => cmd_predict(&image, &checkpoint),
        Command::Bench { config, iterations } => cmd_bench(config.as_deref(), iterations),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => {
            let cfg = RunConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            let e = e.to_ascii_lowercase();
            e == "png" || e == "jpg" || e == "jpeg"
        })
        .unwrap_or(false)
}

fn cmd_preprocess(input: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(input)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && is_image_path(e.path()))
        .map(|e| e.path().to_path_buf())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Image {
            path: input.to_path_buf(),
            msg: "no images found".to_string(),
        });
    }
    ensure_dir(out)?;

    type Processed = (PathBuf, PathBuf, StageTimings);
    let results: Vec<std::result::Result<Processed, (PathBuf, Error)>> = files
        .par_iter()
        .map(|path| {
            let work = || -> Result<Processed> {
                let img = ImageBuffer::load(path)?;
                let (enhanced, times) = mixprocess_timed(&img, &cfg.preprocess)?;
                let rel = path.strip_prefix(input).unwrap_or(path);
                let dst = out.join(rel).with_extension("png");
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                enhanced.save_png(&dst)?;
                Ok((path.clone(), dst, times))
            };
            work().map_err(|e| (path.clone(), e))
        })
        .collect();

    let mut index = String::from(
        "input_path,output_path,wavelet_us,clahe_us,fourier_us,bilateral_us,morphology_us\n",
    );
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok((src, dst, t)) => index.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                src.display(),
                dst.display(),
                t.wavelet_us,
                t.clahe_us,
                t.fourier_us,
                t.bilateral_us,
                t.morphology_us
            )),
            Err((path, e)) => {
                eprintln!("failed: {}: {e}", path.display());
                failures += 1;
            }
        }
    }
    let index_path = out.join("index.csv");
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    if failures > 0 {
        return Err(Error::Input(format!("{failures} file(s) failed preprocessing")));
    }
    Ok(())
}

fn scan_and_split(data: &Path, cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = scan_directory(data)?;
    stratified_split(
        &manifest,
        (
            cfg.data.train_fraction,
            cfg.data.val_fraction,
            cfg.data.test_fraction,
        ),
        cfg.data.split_seed,
    )
}

fn cmd_train(data: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    // a broken dataset layout is an i/o problem for this command
    let manifest = scan_and_split(data, &cfg).map_err(|e| match e {
        Error::Input(msg) => Error::io(data, std::io::Error::new(std::io::ErrorKind::NotFound, msg)),
        other => other,
    })?;
    ensure_dir(out)?;

    let outcome = train(&cfg, &manifest, |stats| {
        println!(
            "epoch {:>4}/{} train_loss={:.6} val_loss={:.6} val_acc={:.6} val_f1={:.6}",
            stats.epoch, cfg.train.epochs, stats.train_loss, stats.val_loss,
            stats.val_accuracy, stats.val_macro_f1
        );
    })?;

    for epoch in outcome.history.smoothed_loss_violations() {
        println!("warning: smoothed train loss rose over the 20-epoch window starting at epoch {epoch}");
    }

    let ckpt_path = out.join("checkpoint.nvit");
    save_checkpoint(&outcome.best, &ckpt_path)?;
    let history_path = out.join("history.csv");
    fs::write(&history_path, outcome.history.to_csv()).map_err(|e| Error::io(&history_path, e))?;
    manifest.export_csv(&out.join("manifest.csv"))?;

    let mut hasher = Sha256::new();
    hasher.update(cfg.canonical_text().as_bytes());
    let counts: Vec<usize> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .map(|&s| manifest.split_indices(s).len())
        .collect();
    let run_manifest = format!(
        "config_sha256 = {:x}\nseed = {}\nsplit_seed = {}\ntrain_count = {}\nval_count = {}\ntest_count = {}\n",
        hasher.finalize(),
        cfg.train.seed,
        cfg.data.split_seed,
        counts[0],
        counts[1],
        counts[2],
    );
    let rm_path = out.join("run_manifest.txt");
    fs::write(&rm_path, run_manifest).map_err(|e| Error::io(&rm_path, e))?;

    println!(
        "best epoch {} val_macro_f1={:.6} -> {}",
        outcome.best.epoch,
        outcome.best.val.macro_f1,
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_eval(data: &Path, checkpoint: &Path, out: &Path, split: &str) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let split = match split {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => {
            return Err(Error::Config(format!(
                "invalid split \"{other}\"; expected train, val or test"
            )))
        }
    };
    // a dataset whose classes do not match the checkpoint's is a config error
    let manifest = scan_and_split(data, &ckpt.config).map_err(|e| match e {
        Error::Input(msg) if msg.contains("class directory") => Error::Config(format!(
            "dataset classes do not match the checkpoint: {msg}"
        )),
        other => other,
    })?;
    ensure_dir(out)?;

    let (mean_loss, records) = evaluate_split(&ckpt.params, &ckpt.config, &manifest, split)?;
    let pairs: Vec<(usize, usize)> = records
        .iter()
        .map(|r| (r.true_class, r.predicted_class))
        .collect();
    let cm = ConfusionMatrix::from_pairs(&pairs, &manifest.class_names)?;
    let report = metrics(&cm);

    emit_csv(&report, &cm, &out.join("metrics.csv"))?;
    emit_confusion_svg(&cm, &out.join("confusion.svg"))?;
    emit_comparison_table(&report, &out.join("comparison.csv"))?;

    let mut predictions = String::from(
        "path,true_class,predicted_class,p_normal,p_pneumonia,p_tuberculosis,p_covid19,p_lung_cancer\n",
    );
    for r in &records {
        let probs: Vec<String> = r.probabilities.iter().map(|p| format!("{p:.6}")).collect();
        predictions.push_str(&format!(
            "{},{},{},{}\n",
            manifest.samples[r.manifest_index].path.display(),
            manifest.class_names[r.true_class],
            manifest.class_names[r.predicted_class],
            probs.join(",")
        ));
    }
    let pred_path = out.join("predictions.csv");
    fs::write(&pred_path, predictions).map_err(|e| Error::io(&pred_path, e))?;

    println!(
        "split={split} samples={} loss={:.6} accuracy={:.6} macro_f1={:.6}",
        report.sample_count, mean_loss, report.accuracy, report.macro_f1
    );
    Ok(())
}

fn cmd_predict(image: &Path, checkpoint: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let img = ImageBuffer::load(image)?;
    let input = prepare_image_for_model(&img, ckpt.config.data.image_size, &ckpt.config.preprocess)?;
    let class_names: Vec<String> = crate::dataset::CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let probs = predict_one(&ckpt.params, &ckpt.config.model_config(), &class_names, input)?;
    println!("predicted = {}", probs.predicted_name());
    for (name, p) in class_names.iter().zip(&probs.probabilities) {
        println!("{name} = {p:.6}");
    }
    Ok(())
}

fn cmd_bench(config: Option<&Path>, iterations: usize) -> Result<()> {
    let cfg = load_config(config)?;
    if iterations == 0 {
        return Err(Error::Config("--iterations must be >= 1".to_string()));
    }
    let model_cfg = cfg.model_config();
    let params = init_params(&model_cfg, cfg.train.seed)?;
    println!("parameter_count = {}", params.total_values());

    let ckpt = Checkpoint::new(cfg.clone(), 0, ValSnapshot::default(), params.clone());
    let bytes = checkpoint_bytes(&ckpt);
    println!("checkpoint_bytes = {}", bytes.len());
    println!("checkpoint_size_mb = {:.6}", bytes.len() as f64 / 1_048_576.0);

    // enhancement throughput on a synthetic phantom at the model input size
    let phantom = synthetic_phantom(0).resize_bilinear(cfg.data.image_size, cfg.data.image_size);
    let (_, times) = mixprocess_timed(&phantom, &cfg.preprocess)?;
    println!("mixprocess_wavelet_us = {}", times.wavelet_us);
    println!("mixprocess_clahe_us = {}", times.clahe_us);
    println!("mixprocess_fourier_us = {}", times.fourier_us);
    println!("mixprocess_bilateral_us = {}", times.bilateral_us);
    println!("mixprocess_morphology_us = {}", times.morphology_us);

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let s = cfg.data.image_size;
    let input = Tensor::new(
        vec![3, s, s],
        (0..3 * s * s).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let mut samples_ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let _ = crate::training::forward_probs(&params, &model_cfg, input.clone())?;
        samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let mut sorted = samples_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = sorted[((0.95 * sorted.len() as f64).ceil() as usize).max(1) - 1];
    println!("forward_latency_ms_mean = {mean:.3}");
    println!("forward_latency_ms_p95 = {p95:.3}");
    println!("forward_latency_samples = {}", samples_ms.len());
    Ok(())
}
