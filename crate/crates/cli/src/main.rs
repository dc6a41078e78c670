//! `b2d`: synthetic EEG generation, band-power imaging, training,
//! evaluation, benchmarks, ablations and parameter accounting.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use b2d_core::eeg::{generate_synthetic, load_montage, read_recording, write_recording, ClassTopography, Montage, SyntheticSpec};
use b2d_core::nn::{count_params, solve_dense_width, Model, ModelConfig, Padding};
use b2d_core::pipeline::{
    ablation_csv, ablation_suite_a, ablation_suite_b, ablation_suite_c, benchmark, build_dataset,
    evaluate, load_dataset, loso_folds, run_ablation, run_report_csv, save_dataset, train_model,
    ImageDataset, TrainHyper,
};
use b2d_core::spectral::{BandName, WelchParams};
use b2d_core::{Error, Result};

use config::{resolve, FileConfig};

#[derive(Parser)]
#[command(name = "b2d", version, about = "EEG band-power imaging and CNN classification")]
struct Cli {
    /// Key=value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Rayon thread count for batch parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Single-threaded mode; reports omit wall-clock fields so repeated
    /// runs are byte-identical.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EEG cohort as .b2deeg files.
    Synth(SynthArgs),
    /// Render recordings into a band-power image dataset.
    Images(ImagesArgs),
    /// Train the classifier on one leave-one-subject-out fold.
    Train(TrainArgs),
    /// Evaluate saved weights on a fold's test subjects.
    Eval(EvalArgs),
    /// Measure train/test wall-clock times (median over repeats).
    Bench(BenchArgs),
    /// Run an ablation suite across folds.
    Ablate(AblateArgs),
    /// Print per-layer trainable parameter counts.
    Params(ParamsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for .b2deeg files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subjects per condition.
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    base_amplitude: Option<f64>,
    /// Per-class gain multiplier on that class's signature band.
    #[arg(long)]
    gain_separation: Option<f64>,
    /// Peak amplitude multiplier of the class-specific scalp focus
    /// (1 disables the focus).
    #[arg(long)]
    topography_strength: Option<f64>,
    #[arg(long)]
    topography_sigma: Option<f64>,
    /// Montage file (.b2dloc); defaults to the bundled 64-channel cap.
    #[arg(long)]
    montage: Option<PathBuf>,
}

#[derive(Args)]
struct ImagesArgs {
    /// Directory of .b2deeg recordings.
    #[arg(long)]
    recordings: Option<PathBuf>,
    #[arg(long)]
    montage: Option<PathBuf>,
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    welch_seg_len: Option<usize>,
    #[arg(long)]
    welch_overlap: Option<f64>,
    /// Output directory (dataset.b2dw + dataset.b2dmanifest).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export every image as a viewable PPM file.
    #[arg(long)]
    ppm: bool,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Image tensor (.b2dw) written by `images`.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Matching .b2dmanifest file.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Width of the first dense layer of the reference preset.
    #[arg(long)]
    dense_width: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Fold index to train (leave-one-subject-out).
    #[arg(long)]
    fold: Option<usize>,
    /// Output directory for weights and the CSV report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weight file written by `train`.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    dense_width: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Ablation suite: a (filters/kernels), b (layer order), c
    /// (depthwise to standard conv).
    #[arg(long)]
    suite: Option<String>,
    /// Limit the sweep to the first N folds.
    #[arg(long)]
    max_folds: Option<usize>,
    /// Output directory for the CSV table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    dense_width: Option<usize>,
    /// Search for configurations totalling this many parameters.
    #[arg(long)]
    solve_width: Option<usize>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) => 4,
        Error::Parse { .. } | Error::Io(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code_for(&e));
    }
    ExitCode::SUCCESS
}

fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let threads = if cli.strict { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::validation("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("thread pool setup failed: {e}")))?;
    }
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &file),
        Command::Images(args) => cmd_images(args, &file),
        Command::Train(args) => cmd_train(args, &file, cli.strict),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::Bench(args) => cmd_bench(args, &file),
        Command::Ablate(args) => cmd_ablate(args, &file, cli.strict),
        Command::Params(args) => cmd_params(args, &file),
    }
}

fn load_montage_arg(flag: &Option<PathBuf>, file: &FileConfig) -> Result<Montage> {
    let path = match flag {
        Some(p) => Some(p.clone()),
        None => file.get("paths.montage").map(PathBuf::from),
    };
    match path {
        Some(p) => load_montage(p),
        None => Ok(Montage::standard_64()),
    }
}

fn band_arg(flag: &Option<String>, file: &FileConfig) -> Result<BandName> {
    let name = resolve(flag.clone(), file, "band", "theta1".to_string())?;
    BandName::parse(&name)
        .ok_or_else(|| Error::validation(format!("unknown band {name:?} (theta1|theta2|alpha1|alpha2)")))
}

fn hyper_args(args: &HyperArgs, file: &FileConfig) -> Result<TrainHyper> {
    Ok(TrainHyper {
        batch: resolve(args.batch, file, "hyper.batch", 30)?,
        epochs: resolve(args.epochs, file, "hyper.epochs", 30)?,
        lr: resolve(args.lr, file, "hyper.lr", 1e-3)?,
        seed: resolve(args.seed, file, "hyper.seed", 0)?,
    })
}

fn model_config(dense_width: Option<usize>, file: &FileConfig) -> Result<ModelConfig> {
    let width = resolve(
        dense_width,
        file,
        "model.dense_width",
        b2d_core::nn::REFERENCE_DENSE_WIDTH,
    )?;
    Ok(ModelConfig::reference_variant([Padding::Same; 6], true, width))
}

fn out_dir(flag: &Option<PathBuf>, file: &FileConfig, key: &str) -> Result<PathBuf> {
    let dir = match flag {
        Some(p) => p.clone(),
        None => PathBuf::from(
            file.get(key)
                .ok_or_else(|| Error::validation(format!("missing output directory ({key} or --out)")))?,
        ),
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_dataset_args(data: &DataArgs, file: &FileConfig) -> Result<ImageDataset> {
    let images = match &data.images {
        Some(p) => p.clone(),
        None => PathBuf::from(
            file.get("paths.images")
                .ok_or_else(|| Error::validation("missing image tensor path (--images)"))?,
        ),
    };
    let manifest = match &data.manifest {
        Some(p) => p.clone(),
        None => images.with_extension("b2dmanifest"),
    };
    load_dataset(images, manifest)
}

fn fold_for(ds: &ImageDataset, index: usize) -> Result<(Vec<b2d_core::FoldSplit>, b2d_core::FoldSplit)> {
    let folds = loso_folds(&ds.subjects_by_condition())?;
    let fold = folds
        .get(index)
        .cloned()
        .ok_or_else(|| Error::validation(format!("fold {index} out of range (dataset has {} folds)", folds.len())))?;
    Ok((folds, fold))
}

fn cmd_synth(args: &SynthArgs, file: &FileConfig) -> Result<()> {
    let separation = resolve(args.gain_separation, file, "synth.gain_separation", 2.0)?;
    let strength = resolve(args.topography_strength, file, "synth.topography_strength", 3.0)?;
    let sigma = resolve(args.topography_sigma, file, "synth.topography_sigma", 0.45)?;

    // each condition boosts its signature band: expert theta1,
    // nonexpert theta2, control alpha1
    let mut gains = [[1.0; 4]; 3];
    for (class, g) in gains.iter_mut().enumerate() {
        g[class] = separation;
    }
    let spec = SyntheticSpec {
        n_subjects_per_condition: resolve(args.subjects, file, "synth.subjects", 12)?,
        duration_s: resolve(args.duration_s, file, "synth.duration_s", 24.0)?,
        sampling_rate_hz: resolve(args.fs, file, "synth.fs", 256.0)?,
        noise_sigma: resolve(args.noise_sigma, file, "synth.noise_sigma", 1.0)?,
        base_amplitude_uv: resolve(args.base_amplitude, file, "synth.base_amplitude", 10.0)?,
        class_band_gains: gains,
        topography: (strength != 1.0).then_some(ClassTopography { strength, sigma }),
    };
    let montage = load_montage_arg(&args.montage, file)?;
    let seed = resolve(args.seed, file, "synth.seed", 0)?;
    let out = out_dir(&args.out, file, "paths.recordings")?;

    let recordings = generate_synthetic(&spec, &montage, seed)?;
    let mut counts = std::collections::BTreeMap::new();
    for rec in &recordings {
        write_recording(rec, out.join(format!("{}.b2deeg", rec.subject_id)))?;
        *counts.entry(rec.condition).or_insert(0usize) += 1;
    }
    for (condition, n) in counts {
        println!("{condition}: {n} recordings");
    }
    println!("wrote {} files to {}", recordings.len(), out.display());
    Ok(())
}

fn cmd_images(args: &ImagesArgs, file: &FileConfig) -> Result<()> {
    let dir = match &args.recordings {
        Some(p) => p.clone(),
        None => PathBuf::from(
            file.get("paths.recordings")
                .ok_or_else(|| Error::validation("missing recordings directory (--recordings)"))?,
        ),
    };
    let montage = load_montage_arg(&args.montage, file)?;
    let band = band_arg(&args.band, file)?;
    let window_s = resolve(args.window_s, file, "window_s", 2.0)?;
    let welch = WelchParams {
        seg_len: resolve(args.welch_seg_len, file, "welch.seg_len", 256)?,
        overlap: resolve(args.welch_overlap, file, "welch.overlap", 0.5)?,
    };
    let out = out_dir(&args.out, file, "paths.out")?;

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "b2deeg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::parse(0, format!("no .b2deeg files in {}", dir.display())));
    }
    let recordings: Vec<_> = paths
        .iter()
        .map(read_recording)
        .collect::<Result<_>>()?;

    let ds = build_dataset(&recordings, &montage, band, window_s, &welch)?;
    let tensor_path = out.join("dataset.b2dw");
    let manifest_path = out.join("dataset.b2dmanifest");
    save_dataset(&ds, &tensor_path, &manifest_path)?;
    println!(
        "rendered {} images ({} band, {window_s} s windows) to {}",
        ds.len(),
        band,
        tensor_path.display()
    );

    if args.ppm {
        let ppm_dir = out.join("ppm");
        std::fs::create_dir_all(&ppm_dir)?;
        write_dataset_ppms(&ds, &ppm_dir)?;
        println!("wrote {} PPM files to {}", ds.len(), ppm_dir.display());
    }
    Ok(())
}

fn write_dataset_ppms(ds: &ImageDataset, dir: &Path) -> Result<()> {
    use b2d_core::topomap::IMAGE_SIZE;
    let px = IMAGE_SIZE * IMAGE_SIZE * 3;
    for (i, meta) in ds.meta.iter().enumerate() {
        let mut bytes = format!("P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
        bytes.extend(
            ds.images.data[i * px..(i + 1) * px]
                .iter()
                .map(|&v| (v as f64 * 255.0).round() as u8),
        );
        let name = format!("{}_{}_w{:03}.ppm", meta.subject_id, meta.band, meta.window_index);
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, file: &FileConfig, strict: bool) -> Result<()> {
    let ds = load_dataset_args(&args.data, file)?;
    let fold_index = resolve(args.fold, file, "fold", 0)?;
    let (_, fold) = fold_for(&ds, fold_index)?;
    let cfg = model_config(args.hyper.dense_width, file)?;
    let hyper = hyper_args(&args.hyper, file)?;
    let out = out_dir(&args.out, file, "paths.out")?;

    let (model, report) = train_model(&cfg, &ds, &fold, &hyper)?;
    let weights_path = out.join(format!("model_fold{fold_index}.b2dw"));
    model.save_weights(&weights_path)?;
    let csv_path = out.join(format!("train_fold{fold_index}.csv"));
    std::fs::write(&csv_path, run_report_csv(&report, strict))?;

    println!(
        "fold {fold_index}: test accuracy {:.4}, macro F1 {:.4} ({} epochs)",
        report.test.accuracy,
        report.test.macro_f1,
        report.epochs.len()
    );
    if !strict {
        println!(
            "train {:.3} s, test {:.6} s ({:.4} ms/sample)",
            report.train_s, report.test_s, report.test_ms_per_sample
        );
    }
    println!("weights: {}", weights_path.display());
    println!("report:  {}", csv_path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let ds = load_dataset_args(&args.data, file)?;
    let fold_index = resolve(args.fold, file, "fold", 0)?;
    let (_, fold) = fold_for(&ds, fold_index)?;
    let cfg = model_config(args.dense_width, file)?;
    let weights = match &args.weights {
        Some(p) => p.clone(),
        None => PathBuf::from(
            file.get("paths.weights")
                .ok_or_else(|| Error::validation("missing weight file (--weights)"))?,
        ),
    };
    let mut model: Model<f32> = Model::init(&cfg, 0)?;
    model.load_weights(weights)?;

    let metrics = evaluate(&mut model, &ds, &fold.test_subjects)?;
    println!("fold {fold_index} test subjects: {:?}", fold.test_subjects.iter().collect::<Vec<_>>());
    println!("accuracy:        {:.4}", metrics.accuracy);
    println!("macro precision: {:.4}", metrics.macro_precision);
    println!("macro recall:    {:.4}", metrics.macro_recall);
    println!("macro F1:        {:.4}", metrics.macro_f1);
    println!("confusion (rows = true class):");
    for row in metrics.confusion {
        println!("  {row:?}");
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, file: &FileConfig) -> Result<()> {
    let ds = load_dataset_args(&args.data, file)?;
    let fold_index = resolve(args.fold, file, "fold", 0)?;
    let (_, fold) = fold_for(&ds, fold_index)?;
    let cfg = model_config(args.hyper.dense_width, file)?;
    let hyper = hyper_args(&args.hyper, file)?;
    let repeats = resolve(args.repeats, file, "bench.repeats", 3)?;

    let bench = benchmark(&cfg, &ds, &fold, &hyper, repeats)?;
    println!("repeats:        {}", bench.repeats);
    println!("threads:        {}", bench.threads);
    println!("numeric mode:   {}", bench.numeric_mode);
    println!("train_s:        {}", bench.train_s);
    println!("test_s:         {}", bench.test_s);
    println!("ms/sample:      {}", bench.test_ms_per_sample);
    println!("test samples:   {}", bench.n_test_samples);
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, file: &FileConfig, strict: bool) -> Result<()> {
    let ds = load_dataset_args(&args.data, file)?;
    let suite_name = resolve(args.suite.clone(), file, "ablate.suite", "b".to_string())?;
    let suite = match suite_name.as_str() {
        "a" => ablation_suite_a(),
        "b" => ablation_suite_b(),
        "c" => ablation_suite_c(),
        other => {
            return Err(Error::validation(format!("unknown suite {other:?} (a|b|c)")))
        }
    };
    let hyper = hyper_args(&args.hyper, file)?;
    let folds = loso_folds(&ds.subjects_by_condition())?;
    let max_folds = resolve(args.max_folds, file, "ablate.max_folds", folds.len())?;
    let folds = &folds[..max_folds.min(folds.len())];

    let rows = run_ablation(&suite, &ds, folds, &hyper)?;
    let csv = ablation_csv(&rows, strict);
    print!("{csv}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let path = out.join(format!("ablation_{suite_name}.csv"));
        std::fs::write(&path, csv)?;
        println!("table: {}", path.display());
    }
    Ok(())
}

fn cmd_params(args: &ParamsArgs, file: &FileConfig) -> Result<()> {
    let cfg = model_config(args.dense_width, file)?;
    let report = count_params(&cfg)?;
    println!("{:<6} {:<18} {:>10}", "layer", "kind", "params");
    for (i, kind, count) in &report.per_layer {
        println!("{i:<6} {kind:<18} {count:>10}");
    }
    println!("{:<6} {:<18} {:>10}", "", "total", report.total);

    if let Some(target) = args.solve_width {
        let candidates = solve_dense_width(target);
        let exact = candidates.iter().any(|c| c.delta == 0);
        if exact {
            println!("\nconfigurations matching {target} exactly:");
        } else {
            println!("\nno searched configuration attains {target}; nearest:");
        }
        for c in candidates.iter().take(10) {
            let pads: Vec<&str> = c.paddings.iter().map(|p| p.as_str()).collect();
            println!(
                "  width {:>4}  total {:>7}  delta {:+}  block3_pool {}  paddings {}",
                c.width,
                c.total,
                c.delta,
                c.block3_pool,
                pads.join(",")
            );
        }
    }
    Ok(())
}
