//! Dataset assembly, leave-one-subject-out folds, training, metrics,
//! timing and ablation sweeps.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eeg::{Condition, EegRecording, Montage};
use crate::error::{Error, Result};
use crate::nn::{Adam, LayerSpec, Mode, Model, ModelConfig};
use crate::spectral::{band_power, extract_windows, welch_psd, BandName, WelchParams};
use crate::tensor::{read_tensors, write_tensors, DynTensor, Tensor};
use crate::topomap::{render_image, WindowRef, IMAGE_SIZE};

/// Per-sample provenance carried alongside the image tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub subject_id: String,
    pub condition: Condition,
    pub band: BandName,
    pub window_index: usize,
    pub window_s: f64,
}

/// A rendered dataset: `[M, 32, 32, 3]` images plus labels and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub meta: Vec<SampleMeta>,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.labels.len();
        if self.meta.len() != m {
            return Err(Error::validation(format!(
                "{} meta rows for {} labels",
                self.meta.len(),
                m
            )));
        }
        if self.images.shape != [m, IMAGE_SIZE, IMAGE_SIZE, 3] {
            return Err(Error::shape(format!(
                "image tensor shape {:?} does not match {m} samples",
                self.images.shape
            )));
        }
        for (label, meta) in self.labels.iter().zip(&self.meta) {
            if *label != meta.condition.class_index() {
                return Err(Error::validation(format!(
                    "label {label} inconsistent with condition {}",
                    meta.condition
                )));
            }
        }
        Ok(())
    }

    /// Copies the selected samples into a batch tensor `[B, 32, 32, 3]`.
    pub fn gather(&self, indices: &[usize]) -> Tensor<f32> {
        let px = IMAGE_SIZE * IMAGE_SIZE * 3;
        let mut data = Vec::with_capacity(indices.len() * px);
        for &i in indices {
            data.extend_from_slice(&self.images.data[i * px..(i + 1) * px]);
        }
        Tensor {
            shape: vec![indices.len(), IMAGE_SIZE, IMAGE_SIZE, 3],
            data,
        }
    }

    /// One-hot label tensor for the selected samples.
    pub fn one_hot(&self, indices: &[usize], n_classes: usize) -> Tensor<f32> {
        let mut t = Tensor::zeros(&[indices.len(), n_classes]);
        for (row, &i) in indices.iter().enumerate() {
            t.data[row * n_classes + self.labels[i]] = 1.0;
        }
        t
    }

    /// Sorted unique subject ids per condition (index = class index).
    pub fn subjects_by_condition(&self) -> [Vec<String>; 3] {
        let mut sets: [BTreeSet<String>; 3] = Default::default();
        for meta in &self.meta {
            sets[meta.condition.class_index()].insert(meta.subject_id.clone());
        }
        sets.map(|s| s.into_iter().collect())
    }
}

/// Renders every window of every recording into band-power images.
/// Sample order is deterministic: subjects sorted by id, windows in time
/// order within a subject.
pub fn build_dataset(
    recordings: &[EegRecording],
    montage: &Montage,
    band: BandName,
    window_s: f64,
    welch: &WelchParams,
) -> Result<ImageDataset> {
    let mut order: Vec<&EegRecording> = recordings.iter().collect();
    order.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut meta = Vec::new();
    for rec in order {
        let windows = extract_windows(rec, window_s)?;
        for (wi, window) in windows.iter().enumerate() {
            let psd = welch_psd(window, rec.sampling_rate_hz, welch)?;
            let powers = band_power(&psd, &band.band())?;
            let image = render_image(
                &powers,
                montage,
                &rec.channels,
                band.band(),
                WindowRef {
                    subject_id: rec.subject_id.clone(),
                    condition: rec.condition,
                    window_index: wi,
                },
            )?;
            pixels.extend_from_slice(&image.pixels);
            labels.push(rec.condition.class_index());
            meta.push(SampleMeta {
                subject_id: rec.subject_id.clone(),
                condition: rec.condition,
                band,
                window_index: wi,
                window_s,
            });
        }
    }

    let ds = ImageDataset {
        images: Tensor {
            shape: vec![labels.len(), IMAGE_SIZE, IMAGE_SIZE, 3],
            data: pixels,
        },
        labels,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}

/// One leave-one-subject-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
    pub validation_fraction: f64,
}

/// Builds n folds from n subjects per condition; fold i holds out the
/// i-th subject (after sorting) of each condition.
pub fn loso_folds(subjects_by_condition: &[Vec<String>; 3]) -> Result<Vec<FoldSplit>> {
    let n = subjects_by_condition[0].len();
    if subjects_by_condition.iter().any(|s| s.len() != n) {
        return Err(Error::validation(format!(
            "unequal subject counts per condition: {:?}",
            subjects_by_condition.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    if n == 0 {
        return Err(Error::validation("no subjects to fold"));
    }
    let mut sorted = subjects_by_condition.clone();
    for list in &mut sorted {
        list.sort();
    }
    let all: BTreeSet<String> = sorted.iter().flatten().cloned().collect();
    if all.len() != 3 * n {
        return Err(Error::validation("subject ids repeat across conditions"));
    }

    let mut folds = Vec::with_capacity(n);
    for i in 0..n {
        let test: BTreeSet<String> = sorted.iter().map(|list| list[i].clone()).collect();
        let train: BTreeSet<String> = all.difference(&test).cloned().collect();
        folds.push(FoldSplit {
            fold_index: i,
            train_subjects: train,
            test_subjects: test,
            validation_fraction: 0.1,
        });
    }
    Ok(folds)
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            batch: 30,
            epochs: 30,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Classification metrics over a 3-class confusion matrix
/// (rows = true class, columns = predicted class).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub confusion: [[usize; 3]; 3],
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Full record of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub epochs: Vec<EpochRow>,
    pub test: Metrics,
    pub train_s: f64,
    pub test_s: f64,
    pub test_ms_per_sample: f64,
    pub n_test_samples: usize,
    pub config_hash: u64,
    pub seed: u64,
}

fn indices_for<'a>(
    ds: &ImageDataset,
    subjects: impl Fn(&str) -> bool + 'a,
) -> Vec<usize> {
    (0..ds.len())
        .filter(|&i| subjects(&ds.meta[i].subject_id))
        .collect()
}

/// Splits the fold's training samples into train/validation parts:
/// per condition, the last `validation_fraction` of samples (in dataset
/// order) become validation.
fn split_validation(ds: &ImageDataset, fold: &FoldSplit) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for condition in Condition::ALL {
        let pool: Vec<usize> = (0..ds.len())
            .filter(|&i| {
                ds.meta[i].condition == condition
                    && fold.train_subjects.contains(&ds.meta[i].subject_id)
            })
            .collect();
        let n_val = (pool.len() as f64 * fold.validation_fraction).floor() as usize;
        let cut = pool.len() - n_val;
        train.extend_from_slice(&pool[..cut]);
        val.extend_from_slice(&pool[cut..]);
    }
    (train, val)
}

fn batch_accuracy(probs: &Tensor<f32>, labels: &[usize]) -> usize {
    let k = probs.shape[1];
    probs
        .data
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            pred == label
        })
        .count()
}

/// Mean loss and accuracy of a fixed sample set in inference mode.
fn eval_loss_acc(model: &mut Model<f32>, ds: &ImageDataset, indices: &[usize]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for chunk in indices.chunks(64) {
        let x = ds.gather(chunk);
        let y = ds.one_hot(chunk, 3);
        let probs = model.forward(&x, Mode::Infer)?;
        loss_sum += crate::nn::layers::cross_entropy_loss(&probs, &y)? * chunk.len() as f64;
        let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
        correct += batch_accuracy(&probs, &labels);
    }
    Ok((
        loss_sum / indices.len() as f64,
        correct as f64 / indices.len() as f64,
    ))
}

/// Trains the model on a fold and evaluates it on the fold's test
/// subjects. Wall-clock covers the training loop and test forward passes
/// only, not dataset construction.
pub fn train_model(
    cfg: &ModelConfig,
    ds: &ImageDataset,
    fold: &FoldSplit,
    hyper: &TrainHyper,
) -> Result<(Model<f32>, RunReport)> {
    ds.validate()?;
    if hyper.batch == 0 {
        return Err(Error::validation("batch size must be >= 1"));
    }
    let (train_idx, val_idx) = split_validation(ds, fold);
    for condition in Condition::ALL {
        if !train_idx.iter().any(|&i| ds.meta[i].condition == condition) {
            return Err(Error::validation(format!(
                "no training samples for condition {condition}"
            )));
        }
    }

    let mut model: Model<f32> = Model::init(cfg, hyper.seed)?;
    let mut opt = Adam::new(hyper.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut epochs = Vec::with_capacity(hyper.epochs);

    let train_start = Instant::now();
    for epoch in 1..=hyper.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(hyper.batch) {
            let x = ds.gather(chunk);
            let y = ds.one_hot(chunk, 3);
            let probs = model.forward(&x, Mode::Train)?;
            loss_sum +=
                crate::nn::layers::cross_entropy_loss(&probs, &y)? * chunk.len() as f64;
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
            correct += batch_accuracy(&probs, &labels);
            model.backward(&probs, &y)?;
            let mut params = model.trainable_params();
            opt.step(&mut params);
        }
        let (val_loss, val_acc) = eval_loss_acc(&mut model, ds, &val_idx)?;
        epochs.push(EpochRow {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            train_acc: correct as f64 / train_idx.len() as f64,
            val_loss,
            val_acc,
        });
    }
    let train_s = train_start.elapsed().as_secs_f64();

    let test_idx = indices_for(ds, |s| fold.test_subjects.contains(s));
    let test_start = Instant::now();
    let test = evaluate_indices(&mut model, ds, &test_idx)?;
    let measured_test_s = test_start.elapsed().as_secs_f64();
    let n = test_idx.len();
    let test_ms_per_sample = 1000.0 * measured_test_s / n as f64;
    // derive test_s back from the ms/sample figure so the identity
    // ms * n / 1000 == test_s holds exactly in f64
    let test_s = test_ms_per_sample * n as f64 / 1000.0;

    Ok((
        model,
        RunReport {
            epochs,
            test,
            train_s,
            test_s,
            test_ms_per_sample,
            n_test_samples: n,
            config_hash: cfg.hash(),
            seed: hyper.seed,
        },
    ))
}

fn metrics_from_confusion(confusion: [[usize; 3]; 3]) -> Metrics {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..3).map(|k| confusion[k][k]).sum();
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    let mut f1 = [0.0; 3];
    for k in 0..3 {
        let col: usize = (0..3).map(|r| confusion[r][k]).sum();
        let row: usize = confusion[k].iter().sum();
        precision[k] = if col > 0 { confusion[k][k] as f64 / col as f64 } else { 0.0 };
        recall[k] = if row > 0 { confusion[k][k] as f64 / row as f64 } else { 0.0 };
        f1[k] = if precision[k] + recall[k] > 0.0 {
            2.0 * precision[k] * recall[k] / (precision[k] + recall[k])
        } else {
            0.0
        };
    }
    Metrics {
        confusion,
        accuracy: trace as f64 / total as f64,
        macro_precision: precision.iter().sum::<f64>() / 3.0,
        macro_recall: recall.iter().sum::<f64>() / 3.0,
        macro_f1: f1.iter().sum::<f64>() / 3.0,
    }
}

fn evaluate_indices(
    model: &mut Model<f32>,
    ds: &ImageDataset,
    indices: &[usize],
) -> Result<Metrics> {
    if indices.is_empty() {
        return Err(Error::validation("empty evaluation set"));
    }
    let mut confusion = [[0usize; 3]; 3];
    for chunk in indices.chunks(64) {
        let x = ds.gather(chunk);
        let probs = model.forward(&x, Mode::Infer)?;
        for (row, &i) in probs.data.chunks_exact(3).zip(chunk) {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            confusion[ds.labels[i]][pred] += 1;
        }
    }
    Ok(metrics_from_confusion(confusion))
}

/// Argmax evaluation of a trained model on the given subjects' samples.
pub fn evaluate(
    model: &mut Model<f32>,
    ds: &ImageDataset,
    subjects: &BTreeSet<String>,
) -> Result<Metrics> {
    ds.validate()?;
    let indices = indices_for(ds, |s| subjects.contains(s));
    evaluate_indices(model, ds, &indices)
}

/// Timing summary of repeated train/test runs (medians).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub train_s: f64,
    pub test_s: f64,
    pub test_ms_per_sample: f64,
    pub n_test_samples: usize,
    pub repeats: usize,
    pub threads: usize,
    pub numeric_mode: &'static str,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Runs train+test `repeats` times and reports median timings. The
/// ms/sample figure satisfies `ms * n / 1000 == test_s` exactly.
pub fn benchmark(
    cfg: &ModelConfig,
    ds: &ImageDataset,
    fold: &FoldSplit,
    hyper: &TrainHyper,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats < 1 {
        return Err(Error::validation("benchmark repeats must be >= 1"));
    }
    let mut train_times = Vec::with_capacity(repeats);
    let mut ms_values = Vec::with_capacity(repeats);
    let mut n = 0;
    for _ in 0..repeats {
        let (_, report) = train_model(cfg, ds, fold, hyper)?;
        train_times.push(report.train_s);
        ms_values.push(report.test_ms_per_sample);
        n = report.n_test_samples;
    }
    let test_ms_per_sample = median(ms_values);
    Ok(BenchReport {
        train_s: median(train_times),
        test_s: test_ms_per_sample * n as f64 / 1000.0,
        test_ms_per_sample,
        n_test_samples: n,
        repeats,
        threads: rayon::current_num_threads(),
        numeric_mode: "f32",
    })
}

/// One min-max-normalized activation map of a conv-family filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub layer_index: usize,
    pub filter: usize,
    pub height: usize,
    pub width: usize,
    /// Normalized to [0, 1]; constant maps render mid-gray (0.5).
    pub values: Vec<f32>,
}

impl ActivationMap {
    /// Grayscale PPM (P6) export.
    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for &v in &self.values {
            let g = (v as f64 * 255.0).round() as u8;
            bytes.extend_from_slice(&[g, g, g]);
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// Extracts per-filter activation maps of the selected conv-family
/// layers for a single input image `[1, H, W, C]`. At most `n_filters`
/// maps per layer (the first ones, matching filter order).
pub fn dump_activations(
    model: &mut Model<f32>,
    image: &Tensor<f32>,
    layer_indices: &[usize],
    n_filters: usize,
) -> Result<Vec<ActivationMap>> {
    for &li in layer_indices {
        match model.config.layers.get(li) {
            Some(
                LayerSpec::Conv2D { .. }
                | LayerSpec::DepthwiseConv2D { .. }
                | LayerSpec::SeparableConv2D { .. },
            ) => {}
            Some(other) => {
                return Err(Error::validation(format!(
                    "layer {li} ({}) is not a convolution layer",
                    other.kind_name()
                )))
            }
            None => return Err(Error::validation(format!("layer index {li} out of range"))),
        }
    }
    let outputs = model.forward_collect(image, Mode::Infer)?;
    let mut maps = Vec::new();
    for &li in layer_indices {
        let out = &outputs[li];
        let (h, w, c) = (out.shape[1], out.shape[2], out.shape[3]);
        for f in 0..c.min(n_filters) {
            let raw: Vec<f32> = (0..h * w)
                .map(|p| out.data[p * c + f])
                .collect();
            let lo = raw.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = raw.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let values = if (hi - lo) < 1e-12 {
                vec![0.5; raw.len()]
            } else {
                raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
            };
            maps.push(ActivationMap {
                layer_index: li,
                filter: f,
                height: h,
                width: w,
                values,
            });
        }
    }
    Ok(maps)
}

/// One result row of an ablation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mutation_id: String,
    pub fold_index: usize,
    pub report: RunReport,
}

/// Suite A: filter-count and kernel-size variants of the reference preset.
pub fn ablation_suite_a() -> Vec<(String, ModelConfig)> {
    let mut suite = Vec::new();
    for filters in [32usize, 128] {
        let mut cfg = ModelConfig::reference();
        for layer in &mut cfg.layers {
            if let LayerSpec::Conv2D { filters: f, .. } = layer {
                *f = filters;
            }
        }
        suite.push((format!("A-filters-{filters}"), cfg));
    }
    let mut cfg = ModelConfig::reference();
    for layer in &mut cfg.layers {
        if let LayerSpec::Conv2D { kernel, .. } = layer {
            *kernel = (3, 3);
        }
    }
    suite.push(("A-kernel-3x3".to_string(), cfg));
    suite
}

/// Suite B: the six orderings of [ReLU, MaxPool, BatchNorm] within
/// blocks 1 and 2.
pub fn ablation_suite_b() -> Vec<(String, ModelConfig)> {
    const ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    const NAMES: [&str; 3] = ["relu", "pool", "bn"];
    let base = ModelConfig::reference();
    let mut suite = Vec::new();
    for order in ORDERS {
        let tail = |o: usize| match o {
            0 => LayerSpec::ReLU,
            1 => LayerSpec::MaxPool2D,
            _ => LayerSpec::BatchNorm,
        };
        let mut layers = Vec::with_capacity(base.layers.len());
        // blocks 1 and 2 are [conv, depthwise, relu, pool, bn]
        for block in [0usize, 5] {
            layers.push(base.layers[block].clone());
            layers.push(base.layers[block + 1].clone());
            for o in order {
                layers.push(tail(o));
            }
        }
        layers.extend(base.layers[10..].iter().cloned());
        let id = format!(
            "B-{}-{}-{}",
            NAMES[order[0]], NAMES[order[1]], NAMES[order[2]]
        );
        suite.push((
            id,
            ModelConfig {
                layers,
                ..base.clone()
            },
        ));
    }
    suite
}

/// Suite C: every depthwise convolution replaced by a standard
/// convolution with the same kernel and channel-preserving filter count.
pub fn ablation_suite_c() -> Vec<(String, ModelConfig)> {
    let mut cfg = ModelConfig::reference();
    let shapes = cfg.layer_shapes().expect("reference preset is valid");
    let mut in_c = cfg.input_shape.2;
    for (i, layer) in cfg.layers.iter_mut().enumerate() {
        if let LayerSpec::DepthwiseConv2D { kernel, padding } = *layer {
            *layer = LayerSpec::Conv2D {
                kernel,
                filters: in_c,
                padding,
            };
        }
        if let crate::nn::DataShape::Spatial(_, _, c) = shapes[i] {
            in_c = c;
        }
    }
    vec![("C-standard-conv".to_string(), cfg)]
}

/// Trains every (mutation, fold) pair and collects the reports.
pub fn run_ablation(
    suite: &[(String, ModelConfig)],
    ds: &ImageDataset,
    folds: &[FoldSplit],
    hyper: &TrainHyper,
) -> Result<Vec<AblationRow>> {
    for (id, cfg) in suite {
        cfg.validate()
            .map_err(|e| Error::validation(format!("mutation {id}: {e}")))?;
    }
    let mut rows = Vec::new();
    for (id, cfg) in suite {
        for fold in folds {
            let (_, report) = train_model(cfg, ds, fold, hyper)?;
            rows.push(AblationRow {
                mutation_id: id.clone(),
                fold_index: fold.fold_index,
                report,
            });
        }
    }
    Ok(rows)
}

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub tensor_file: String,
    pub index: usize,
    pub label: usize,
    pub subject: String,
    pub condition: Condition,
    pub band: BandName,
    pub window_index: usize,
    pub window_s: f64,
}

/// Writes the image tensor (`.b2dw`) and its manifest (`.b2dmanifest`).
pub fn save_dataset(
    ds: &ImageDataset,
    tensor_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<()> {
    ds.validate()?;
    let tensor_path = tensor_path.as_ref();
    let labels: Tensor<f32> = Tensor::from_vec(
        &[ds.labels.len()],
        ds.labels.iter().map(|&l| l as f32).collect(),
    )?;
    write_tensors(
        tensor_path,
        &[
            ("images".to_string(), DynTensor::F32(ds.images.clone())),
            ("labels".to_string(), DynTensor::F32(labels)),
        ],
    )?;

    let tensor_file = tensor_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = String::from("B2DMANIFEST 1\n");
    for (i, meta) in ds.meta.iter().enumerate() {
        out.push_str(&format!(
            "{tensor_file},{i},{},{},{},{},{},{}\n",
            ds.labels[i], meta.subject_id, meta.condition, meta.band, meta.window_index,
            meta.window_s
        ));
    }
    std::fs::write(manifest_path, out)?;
    Ok(())
}

/// Parses a `.b2dmanifest` file.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty manifest"))?;
    if header != "B2DMANIFEST 1" {
        return Err(Error::parse(ln, format!("bad manifest header {header:?}")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::parse(ln, format!("expected 8 fields, found {}", parts.len())));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(ln, format!("bad {what} {s:?}")))
        };
        rows.push(ManifestRow {
            tensor_file: parts[0].to_string(),
            index: parse_usize(parts[1], "index")?,
            label: parse_usize(parts[2], "label")?,
            subject: parts[3].to_string(),
            condition: Condition::parse(parts[4])
                .ok_or_else(|| Error::parse(ln, format!("bad condition {:?}", parts[4])))?,
            band: BandName::parse(parts[5])
                .ok_or_else(|| Error::parse(ln, format!("bad band {:?}", parts[5])))?,
            window_index: parse_usize(parts[6], "window index")?,
            window_s: parts[7]
                .parse()
                .map_err(|_| Error::parse(ln, format!("bad window length {:?}", parts[7])))?,
        });
    }
    Ok(rows)
}

/// Loads a dataset previously written by `save_dataset`.
pub fn load_dataset(
    tensor_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<ImageDataset> {
    let entries = read_tensors(tensor_path)?;
    let images = entries
        .iter()
        .find(|(n, _)| n == "images")
        .and_then(|(_, t)| match t {
            DynTensor::F32(t) => Some(t.clone()),
            DynTensor::F64(_) => None,
        })
        .ok_or_else(|| Error::validation("tensor file has no f32 \"images\" entry"))?;
    let rows = read_manifest(manifest_path)?;
    if images.shape.first() != Some(&rows.len()) {
        return Err(Error::shape(format!(
            "tensor holds {:?} images but manifest lists {} rows",
            images.shape.first(),
            rows.len()
        )));
    }
    let ds = ImageDataset {
        images,
        labels: rows.iter().map(|r| r.label).collect(),
        meta: rows
            .iter()
            .map(|r| SampleMeta {
                subject_id: r.subject.clone(),
                condition: r.condition,
                band: r.band,
                window_index: r.window_index,
                window_s: r.window_s,
            })
            .collect(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Serializes a run report as CSV: one row per epoch, then a summary row.
/// With `strict`, wall-clock fields are left empty so reports from
/// identical runs are byte-identical.
pub fn run_report_csv(report: &RunReport, strict: bool) -> String {
    let mut out = String::from(
        "row,epoch,train_loss,train_acc,val_loss,val_acc,test_acc,macro_precision,macro_recall,macro_f1,train_s,test_s,test_ms_per_sample,n_test,config_hash,seed\n",
    );
    for row in &report.epochs {
        out.push_str(&format!(
            "epoch,{},{},{},{},{},,,,,,,,,,\n",
            row.epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc
        ));
    }
    let (train_s, test_s, ms) = if strict {
        (String::new(), String::new(), String::new())
    } else {
        (
            report.train_s.to_string(),
            report.test_s.to_string(),
            report.test_ms_per_sample.to_string(),
        )
    };
    out.push_str(&format!(
        "summary,,,,,,{},{},{},{},{train_s},{test_s},{ms},{},{},{}\n",
        report.test.accuracy,
        report.test.macro_precision,
        report.test.macro_recall,
        report.test.macro_f1,
        report.n_test_samples,
        report.config_hash,
        report.seed
    ));
    out
}

/// Serializes ablation results as CSV keyed by mutation id and fold.
pub fn ablation_csv(rows: &[AblationRow], strict: bool) -> String {
    let mut out =
        String::from("mutation,fold,test_acc,macro_precision,macro_recall,macro_f1,train_s\n");
    for row in rows {
        let train_s = if strict {
            String::new()
        } else {
            row.report.train_s.to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{train_s}\n",
            row.mutation_id,
            row.fold_index,
            row.report.test.accuracy,
            row.report.test.macro_precision,
            row.report.test.macro_recall,
            row.report.test.macro_f1
        ));
    }
    out
}
