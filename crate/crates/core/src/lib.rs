//! EEG band-power imaging and lightweight CNN classification.
//!
//! The pipeline turns multichannel EEG time series into 32x32 RGB
//! topographic band-power images and classifies them with a small
//! four-block convolutional network:
//!
//! ```text
//! recording (.b2deeg)
//!   ├─ extract_windows        non-overlapping 2/4/6 s windows
//!   ├─ welch_psd              averaged Hamming-tapered periodograms
//!   ├─ band_power             theta1/theta2/alpha1/alpha2 bin means
//!   ├─ render_image           IDW interpolation on a 32x32 head grid + jet
//!   └─ train / evaluate       4-block CNN, leave-one-subject-out folds
//! ```
//!
//! Everything is verifiable at desk scale: a seeded synthetic EEG
//! generator stands in for real recordings, and every numeric stage has
//! a brute-force oracle in its test suite.

pub mod eeg;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod spectral;
pub mod tensor;
pub mod topomap;

pub use eeg::{Condition, EegRecording, Montage, SyntheticSpec};
pub use error::{Error, Result};
pub use nn::{LayerSpec, Model, ModelConfig, Padding, ParamReport};
pub use pipeline::{FoldSplit, ImageDataset, RunReport};
pub use spectral::{Band, BandName, PsdEstimate, WelchParams, Window};
pub use tensor::Tensor;
pub use topomap::{HeadGrid, SpectralImage};
