//! Simulation and identification toolkit for LED hardware fingerprints over
//! optical wireless links.
//!
//! The pipeline, end to end:
//!
//! 1. [`frame`] — builds the enhanced physical-layer frame that embeds a
//!    200-bit fingerprint payload, bit-exact, with CRC-16 frame check and
//!    preamble synchronization.
//! 2. [`modem`] — OOK modulation at 200 kHz, integrate-and-dump demodulation
//!    with a data-aided threshold, and BER measurement.
//! 3. [`device`] — a population of virtual LEDs with manufacturing-tolerance
//!    jitter; each device imprints its transfer function (DC gain, single-pole
//!    bandwidth, soft saturation) on the transmitted waveform.
//! 4. [`channel`] — Lambertian line-of-sight channel gain, photodetector
//!    receiver gain, and seeded AWGN at a configured SNR.
//! 5. [`features`] — the three amplitude features (per-period mean, per-period
//!    variance, bit-rate spectral magnitude) plus min-max normalization.
//! 6. [`classifier`] — from-scratch KNN, bagged ensemble KNN, and one-vs-rest
//!    linear SVM with a uniform fit/predict/serialize contract.
//! 7. [`harness`] — experiment orchestration over the device × SNR × distance
//!    grid, producing plot-ready CSV artifacts.
//!
//! Everything is deterministic: every stochastic step takes an explicit seed,
//! and identical configurations produce byte-identical output files.

pub mod bits;
pub mod channel;
pub mod classifier;
pub mod config;
pub mod device;
pub mod features;
pub mod frame;
pub mod harness;
pub mod modem;
pub mod seeds;

pub use bits::BitSequence;
pub use channel::{ChannelGeometry, ReceiverParams};
pub use classifier::{LabeledDataset, ModelKind, TrainedModel};
pub use config::ExperimentConfig;
pub use device::{DeviceParams, PopulationSpec};
pub use features::{FeatureVector, NormalizationStats};
pub use frame::{FingerprintFrame, PhysicalFrame};
pub use modem::{ModemConfig, Waveform};
