//! Static hand-gesture recognition toolkit.
//!
//! The crate implements a complete batch pipeline for recognising static
//! hand gestures in still images:
//!
//! 1. [`denoise`] — random-value impulse noise (RVIN) injection and the
//!    modified directional weighted median filter that removes it.
//! 2. [`segmentation`] — sRGB→CIELAB conversion, automatic thresholding of
//!    the b* channel, morphological cleanup and Canny edge extraction.
//! 3. [`features`] — six first-order histogram statistics of the segmented
//!    region (mean, variance, skewness, kurtosis, energy, entropy).
//! 4. [`classifier`] — one-against-all ensembles of small 6-3-1 sigmoid
//!    networks trained by full-batch gradient descent.
//! 5. [`eval`] — dataset ingestion, stratified k-fold cross-validation and
//!    confusion-matrix reporting.
//!
//! [`imagecore`] supplies the pixel-buffer types and binary PNM I/O shared
//! by every stage. All types are plain immutable values and every operation
//! is a pure function, so images, folds and per-class trainings can be
//! processed concurrently without shared state.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod classifier;
pub mod denoise;
pub mod eval;
pub mod features;
pub mod imagecore;
pub mod segmentation;

pub use classifier::{BinaryNet, Normalizer, OvAModel, TrainConfig};
pub use denoise::{DirectionSet, MdwmfConfig};
pub use eval::{Dataset, EvalReport, FoldPlan};
pub use features::{FeatureVector, Histogram};
pub use imagecore::{BinaryMask, FloatPlane, GrayImage, RgbImage};
pub use segmentation::{CannyParams, LabImage, SegmentationResult, StructuringElement};
