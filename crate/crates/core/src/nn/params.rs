//! Trainable-parameter accounting and the dense-width search.

use crate::error::Result;
use crate::nn::{DataShape, LayerSpec, ModelConfig, Padding};

/// Per-layer trainable parameter counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    /// (layer index, layer kind, trainable count) per layer.
    pub per_layer: Vec<(usize, String, usize)>,
    pub total: usize,
}

/// Counts trainable parameters per layer. Batch-norm running statistics
/// are not trainable and are excluded.
pub fn count_params(cfg: &ModelConfig) -> Result<ParamReport> {
    let shapes = cfg.layer_shapes()?;
    let mut per_layer = Vec::with_capacity(cfg.layers.len());
    let mut total = 0;
    let mut in_shape = DataShape::Spatial(cfg.input_shape.0, cfg.input_shape.1, cfg.input_shape.2);
    for (i, layer) in cfg.layers.iter().enumerate() {
        let in_channels = match in_shape {
            DataShape::Spatial(_, _, c) => c,
            DataShape::Flat(n) => n,
        };
        let count = match layer {
            LayerSpec::Conv2D {
                kernel, filters, ..
            } => kernel.0 * kernel.1 * in_channels * filters + filters,
            LayerSpec::DepthwiseConv2D { kernel, .. } => {
                kernel.0 * kernel.1 * in_channels + in_channels
            }
            LayerSpec::SeparableConv2D {
                kernel, filters, ..
            } => kernel.0 * kernel.1 * in_channels + in_channels * filters + filters,
            LayerSpec::BatchNorm => 2 * in_channels,
            LayerSpec::Dense { units } => in_channels * units + units,
            LayerSpec::ReLU | LayerSpec::MaxPool2D | LayerSpec::Flatten | LayerSpec::Softmax => 0,
        };
        per_layer.push((i, layer.kind_name().to_string(), count));
        total += count;
        in_shape = shapes[i];
    }
    Ok(ParamReport { per_layer, total })
}

/// One configuration found by the dense-width search.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthCandidate {
    pub paddings: [Padding; 6],
    pub block3_pool: bool,
    pub width: usize,
    pub total: usize,
    /// `total - target` (0 for exact matches).
    pub delta: i64,
}

/// Exhaustively searches first-dense widths in `[1, 4096]` combined with
/// per-layer padding choices and the optional block-3 pool, looking for
/// configurations whose trainable total equals `target`. Returns all exact
/// matches, or (when none exist) the nearest candidates by absolute delta.
pub fn solve_dense_width(target: usize) -> Vec<WidthCandidate> {
    let mut exact = Vec::new();
    let mut nearest: Vec<WidthCandidate> = Vec::new();

    for mask in 0..64u32 {
        let paddings: [Padding; 6] = std::array::from_fn(|i| {
            if mask >> i & 1 == 1 {
                Padding::Valid
            } else {
                Padding::Same
            }
        });
        for block3_pool in [true, false] {
            for width in 1..=4096 {
                let cfg = ModelConfig::reference_variant(paddings, block3_pool, width);
                let Ok(report) = count_params(&cfg) else {
                    continue; // variant shrank a map below the kernel size
                };
                let delta = report.total as i64 - target as i64;
                let cand = WidthCandidate {
                    paddings,
                    block3_pool,
                    width,
                    total: report.total,
                    delta,
                };
                if delta == 0 {
                    exact.push(cand);
                } else {
                    match nearest.first() {
                        Some(best) if best.delta.abs() < delta.abs() => {}
                        Some(best) if best.delta.abs() == delta.abs() => nearest.push(cand),
                        _ => nearest = vec![cand],
                    }
                }
            }
        }
    }

    if exact.is_empty() {
        nearest
    } else {
        exact
    }
}
