//! Minimal NN engine: exactly the layer set of the four-block classifier,
//! with forward, reverse-mode gradients, Adam/SGD, parameter accounting
//! and weight serialization.

pub mod layers;
pub mod model;
pub mod optim;
pub mod params;

pub use model::{Mode, Model};
pub use optim::{Adam, Sgd};
pub use params::{count_params, solve_dense_width, ParamReport, WidthCandidate};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }

    pub fn parse(s: &str) -> Option<Padding> {
        match s {
            "valid" => Some(Padding::Valid),
            "same" => Some(Padding::Same),
            _ => None,
        }
    }
}

/// One layer of a model architecture. Stride is fixed at (1,1) for
/// convolutions and the pool window at 2x2/stride 2.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2D {
        kernel: (usize, usize),
        filters: usize,
        padding: Padding,
    },
    DepthwiseConv2D {
        kernel: (usize, usize),
        padding: Padding,
    },
    SeparableConv2D {
        kernel: (usize, usize),
        filters: usize,
        padding: Padding,
    },
    ReLU,
    MaxPool2D,
    BatchNorm,
    Flatten,
    Dense {
        units: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::DepthwiseConv2D { .. } => "DepthwiseConv2D",
            LayerSpec::SeparableConv2D { .. } => "SeparableConv2D",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::MaxPool2D => "MaxPool2D",
            LayerSpec::BatchNorm => "BatchNorm",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Softmax => "Softmax",
        }
    }
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataShape {
    /// Height, width, channels (batch dimension implicit).
    Spatial(usize, usize, usize),
    Flat(usize),
}

/// Declarative model architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    pub input_shape: (usize, usize, usize),
    pub n_classes: usize,
}

/// Default width of the first dense layer in the reference preset.
///
/// 204 gives a total of 76,631 trainable parameters, the closest the
/// same-padding preset gets to the published 76,627 (no searched width
/// matches it exactly; see `solve_dense_width`).
pub const REFERENCE_DENSE_WIDTH: usize = 204;

impl ModelConfig {
    /// The four-block reference preset with same-padded convolutions and
    /// a max-pool in every spatial block.
    pub fn reference() -> ModelConfig {
        ModelConfig::reference_variant([Padding::Same; 6], true, REFERENCE_DENSE_WIDTH)
    }

    /// Reference structure with explicit padding per convolution layer
    /// (conv1, dw1, conv2, dw2, conv3, sep3), an optional block-3 pool
    /// and a chosen first-dense width.
    pub fn reference_variant(
        paddings: [Padding; 6],
        block3_pool: bool,
        dense_width: usize,
    ) -> ModelConfig {
        let mut layers = vec![
            // Block 1
            LayerSpec::Conv2D {
                kernel: (3, 3),
                filters: 64,
                padding: paddings[0],
            },
            LayerSpec::DepthwiseConv2D {
                kernel: (2, 2),
                padding: paddings[1],
            },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D,
            LayerSpec::BatchNorm,
            // Block 2
            LayerSpec::Conv2D {
                kernel: (2, 2),
                filters: 64,
                padding: paddings[2],
            },
            LayerSpec::DepthwiseConv2D {
                kernel: (2, 2),
                padding: paddings[3],
            },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D,
            LayerSpec::BatchNorm,
            // Block 3
            LayerSpec::Conv2D {
                kernel: (2, 2),
                filters: 64,
                padding: paddings[4],
            },
            LayerSpec::SeparableConv2D {
                kernel: (2, 2),
                filters: 12,
                padding: paddings[5],
            },
        ];
        if block3_pool {
            layers.push(LayerSpec::MaxPool2D);
        }
        layers.push(LayerSpec::BatchNorm);
        // Block 4
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { units: dense_width });
        layers.push(LayerSpec::Dense { units: 3 });
        layers.push(LayerSpec::Softmax);

        ModelConfig {
            layers,
            input_shape: (32, 32, 3),
            n_classes: 3,
        }
    }

    /// A width-scaled copy of the reference structure for cheap tests:
    /// same layer sequence, smaller filter counts and input.
    pub fn reference_toy() -> ModelConfig {
        let mut cfg = ModelConfig::reference_variant([Padding::Same; 6], true, 10);
        cfg.input_shape = (8, 8, 3);
        for layer in &mut cfg.layers {
            match layer {
                LayerSpec::Conv2D { filters, .. } => *filters = 5,
                LayerSpec::SeparableConv2D { filters, .. } => *filters = 4,
                _ => {}
            }
        }
        cfg
    }

    /// Output shape after each layer; errors on statically invalid configs.
    pub fn layer_shapes(&self) -> Result<Vec<DataShape>> {
        let mut shape = DataShape::Spatial(self.input_shape.0, self.input_shape.1, self.input_shape.2);
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = self.next_shape(i, layer, shape)?;
            out.push(shape);
        }
        Ok(out)
    }

    fn next_shape(&self, i: usize, layer: &LayerSpec, shape: DataShape) -> Result<DataShape> {
        let spatial = |shape: DataShape| match shape {
            DataShape::Spatial(h, w, c) => Ok((h, w, c)),
            DataShape::Flat(_) => Err(Error::shape(format!(
                "layer {i} ({}) requires spatial input",
                layer.kind_name()
            ))),
        };
        let conv_hw = |h: usize, w: usize, k: (usize, usize), p: Padding| -> Result<(usize, usize)> {
            match p {
                Padding::Same => Ok((h, w)),
                Padding::Valid => {
                    if h < k.0 || w < k.1 {
                        Err(Error::shape(format!(
                            "layer {i}: kernel {k:?} larger than input {h}x{w}"
                        )))
                    } else {
                        Ok((h - k.0 + 1, w - k.1 + 1))
                    }
                }
            }
        };
        Ok(match layer {
            LayerSpec::Conv2D {
                kernel,
                filters,
                padding,
            } => {
                let (h, w, _) = spatial(shape)?;
                let (h, w) = conv_hw(h, w, *kernel, *padding)?;
                DataShape::Spatial(h, w, *filters)
            }
            LayerSpec::DepthwiseConv2D { kernel, padding } => {
                let (h, w, c) = spatial(shape)?;
                let (h, w) = conv_hw(h, w, *kernel, *padding)?;
                DataShape::Spatial(h, w, c)
            }
            LayerSpec::SeparableConv2D {
                kernel,
                filters,
                padding,
            } => {
                let (h, w, _) = spatial(shape)?;
                let (h, w) = conv_hw(h, w, *kernel, *padding)?;
                DataShape::Spatial(h, w, *filters)
            }
            LayerSpec::ReLU | LayerSpec::BatchNorm => shape,
            LayerSpec::MaxPool2D => {
                let (h, w, c) = spatial(shape)?;
                if h < 2 || w < 2 {
                    return Err(Error::shape(format!(
                        "layer {i}: cannot pool {h}x{w} input"
                    )));
                }
                DataShape::Spatial(h / 2, w / 2, c)
            }
            LayerSpec::Flatten => {
                let (h, w, c) = spatial(shape)?;
                DataShape::Flat(h * w * c)
            }
            LayerSpec::Dense { units } => match shape {
                DataShape::Flat(_) => DataShape::Flat(*units),
                DataShape::Spatial(..) => {
                    return Err(Error::shape(format!("layer {i}: Dense requires flattened input")))
                }
            },
            LayerSpec::Softmax => shape,
        })
    }

    /// Checks the structural invariants of a classifier config.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.layer_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return Err(Error::validation("last layer must be Softmax")),
        }
        match self.layers.get(self.layers.len().wrapping_sub(2)) {
            Some(LayerSpec::Dense { units }) if *units == self.n_classes => {}
            _ => {
                return Err(Error::validation(format!(
                    "layer before Softmax must be Dense({})",
                    self.n_classes
                )))
            }
        }
        match shapes.last() {
            Some(DataShape::Flat(n)) if *n == self.n_classes => Ok(()),
            other => Err(Error::validation(format!(
                "model output shape {other:?} does not match {} classes",
                self.n_classes
            ))),
        }
    }

    /// Stable hash of the architecture, used to key reports.
    pub fn hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        format!("{:?}", self).hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_preset_validates() {
        let cfg = ModelConfig::reference();
        cfg.validate().unwrap();
        let shapes = cfg.layer_shapes().unwrap();
        // block pools: 32 -> 16 -> 8 -> 4
        assert!(shapes.contains(&DataShape::Spatial(4, 4, 12)));
        assert_eq!(*shapes.last().unwrap(), DataShape::Flat(3));
    }

    #[test]
    fn valid_padding_shrinks_maps() {
        let cfg = ModelConfig::reference_variant([Padding::Valid; 6], true, 32);
        let shapes = cfg.layer_shapes().unwrap();
        // 32 -3x3-> 30 -2x2-> 29 -pool-> 14
        assert_eq!(shapes[0], DataShape::Spatial(30, 30, 64));
        assert_eq!(shapes[3], DataShape::Spatial(14, 14, 64));
    }

    #[test]
    fn dense_before_flatten_rejected() {
        let cfg = ModelConfig {
            layers: vec![LayerSpec::Dense { units: 3 }, LayerSpec::Softmax],
            input_shape: (8, 8, 3),
            n_classes: 3,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toy_preset_validates() {
        ModelConfig::reference_toy().validate().unwrap();
    }
}
