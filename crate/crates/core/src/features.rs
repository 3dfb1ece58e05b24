//! Amplitude-feature extraction from a received fingerprint segment, plus
//! min-max normalization.
//!
//! Three features summarize how a device reshapes the on-off keyed payload:
//!
//! - `mean_mean` — average over bit periods of the per-period sample mean;
//!   homogeneous of degree 1 in the waveform amplitude.
//! - `period_variance` — average over bit periods of the per-period
//!   population variance; degree 2.
//! - `f_base` — amplitude of the segment's spectral component at the bit
//!   rate, `(2/N) * |DFT bin|`; degree 1. For an ideal rectangular payload
//!   this component is exactly zero (each bit period sums a full twiddle
//!   cycle), so whatever shows up there is put there by the transmitter's
//!   finite bandwidth.
//!
//! Segment lengths produced by the frame pipeline make the bit rate an exact
//! DFT bin (bin index = number of bits in the segment); ingested captures
//! with mismatched sample rates are rejected rather than scalloped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modem::{ModemConfig, Waveform};

/// Relative slack when checking that the bit rate lands on an integer DFT
/// bin; generous against rounding in `bit_rate * N / sample_rate`, strict
/// against real mismatches.
const BIN_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("segment needs {needed} samples from offset {offset}, waveform has {have}")]
    SegmentTooShort {
        offset: usize,
        needed: usize,
        have: usize,
    },
    #[error("bit rate {bit_rate} Hz is not an exact DFT bin for {n} samples at {sample_rate} Hz")]
    BinMismatch {
        bit_rate: f64,
        sample_rate: f64,
        n: usize,
    },
    #[error("feature {index} has zero range on the training set")]
    DegenerateFeature { index: usize },
    #[error("normalization needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
}

/// The three amplitude features, optionally labeled with the source device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean_mean: f64,
    pub period_variance: f64,
    pub f_base: f64,
    pub device_id: Option<u32>,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mean_mean, self.period_variance, self.f_base]
    }

    pub const NAMES: [&'static str; 3] = ["mean_mean", "period_variance", "f_base"];
}

/// Per-feature minimum and maximum observed on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl NormalizationStats {
    /// Stats that leave vectors unchanged; useful for pre-normalized data.
    pub fn identity() -> Self {
        Self {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }
}

/// Extracts the feature vector from `n_bits` bit periods starting at
/// `segment_offset` samples into the waveform. The caller is responsible for
/// pointing the offset at the fingerprint data region (via frame sync) and
/// for keeping filter-settling periods out of the segment.
pub fn extract_features(
    rx: &Waveform,
    cfg: &ModemConfig,
    segment_offset: usize,
    n_bits: usize,
) -> Result<FeatureVector, FeatureError> {
    let spb = cfg.samples_per_bit;
    let n = n_bits * spb;
    if n == 0 || rx.len() < segment_offset + n {
        return Err(FeatureError::SegmentTooShort {
            offset: segment_offset,
            needed: n,
            have: rx.len(),
        });
    }
    let segment = &rx.samples[segment_offset..segment_offset + n];

    let mut mean_sum = 0.0;
    let mut var_sum = 0.0;
    for period in segment.chunks_exact(spb) {
        let mean = period.iter().sum::<f64>() / spb as f64;
        let var = period.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / spb as f64;
        mean_sum += mean;
        var_sum += var;
    }
    let mean_mean = mean_sum / n_bits as f64;
    let period_variance = var_sum / n_bits as f64;

    // Bit-rate bin: k = bit_rate * N / fs, which the pipeline's segment
    // construction makes exactly n_bits.
    let k_exact = cfg.bit_rate * n as f64 / rx.sample_rate;
    let k = k_exact.round();
    if (k_exact - k).abs() > BIN_MATCH_TOL * k_exact.max(1.0) || k < 1.0 || k >= n as f64 / 2.0 {
        return Err(FeatureError::BinMismatch {
            bit_rate: cfg.bit_rate,
            sample_rate: rx.sample_rate,
            n,
        });
    }
    let k = k as u64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &s) in segment.iter().enumerate() {
        // Reduce k*i modulo N before forming the angle: k*i stays an exact
        // integer, so the twiddle phase never loses precision.
        let phase = -2.0 * std::f64::consts::PI * ((k * i as u64) % n as u64) as f64 / n as f64;
        let (sin, cos) = phase.sin_cos();
        re += s * cos;
        im += s * sin;
    }
    let f_base = 2.0 / n as f64 * (re * re + im * im).sqrt();

    Ok(FeatureVector {
        mean_mean,
        period_variance,
        f_base,
        device_id: None,
    })
}

/// Per-feature min/max over a training set.
pub fn fit_normalization(vectors: &[FeatureVector]) -> Result<NormalizationStats, FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::TooFewVectors(vectors.len()));
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for v in vectors {
        for (i, x) in v.as_array().into_iter().enumerate() {
            min[i] = min[i].min(x);
            max[i] = max[i].max(x);
        }
    }
    for i in 0..3 {
        if !(max[i] > min[i]) {
            return Err(FeatureError::DegenerateFeature { index: i });
        }
    }
    Ok(NormalizationStats { min, max })
}

/// Maps each feature to `(x - min) / (max - min)`. Training vectors land in
/// [0, 1]; test vectors may fall outside, deliberately unclamped.
pub fn normalize(v: &FeatureVector, s: &NormalizationStats) -> FeatureVector {
    let a = v.as_array();
    let n: Vec<f64> = (0..3)
        .map(|i| (a[i] - s.min[i]) / (s.max[i] - s.min[i]))
        .collect();
    FeatureVector {
        mean_mean: n[0],
        period_variance: n[1],
        f_base: n[2],
        device_id: v.device_id,
    }
}
