//! WiFi CSI fingerprint localization toolkit.
//!
//! End-to-end pipeline: a synthetic indoor multipath channel simulator
//! generates labeled CSI bursts at surveyed reference points; phase
//! calibration strips per-packet timing/offset distortion; feature tensors
//! feed four localizers (MLP and CNN coordinate regressors trained on a
//! mean-distance loss, a softmax classification baseline with
//! probability-weighted coordinate fusion, and a KNN baseline); and an
//! evaluation harness reports distance-error statistics, method comparisons,
//! and augmentation ablations.
//!
//! The numeric core ([`nn`], [`calibration`], feature assembly, metrics) is
//! generic over the scalar type via [`scalar::Scalar`]; the aliases below pin
//! the shipped configuration to `f64`, which is also what every file format
//! stores for model parameters.

mod byteio;

pub mod augment;
pub mod calibration;
pub mod channel_sim;
pub mod config;
pub mod csi_data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod localizers;
pub mod nn;
pub mod scalar;
pub mod streams;

pub use error::{Error, Result};
pub use geometry::Point2;
pub use scalar::Scalar;

/// Scalar type used by the shipped pipeline.
pub type Real = f64;

/// Concrete aliases of the generic core at [`Real`] precision.
pub type Tensor = nn::Tensor<Real>;
pub type Network = nn::Network<Real>;
pub type PolarCsi = csi_data::PolarCsi<Real>;
pub type FeatureTensor = csi_data::FeatureTensor<Real>;
pub type CalibrationResult = calibration::CalibrationResult<Real>;
pub type TrainSet = nn::TrainSet<Real>;
