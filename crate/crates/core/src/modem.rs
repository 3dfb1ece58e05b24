//! OOK modulation at 200 kHz, integrate-and-dump demodulation, and BER
//! measurement.
//!
//! The demodulator is data-aided: it estimates the received high/low levels
//! from the per-period means of its estimation window (the 32-period frame
//! preamble in normal operation) and thresholds at their midpoint, so it
//! tracks any link-gain scaling without an explicit gain input. Bit timing is
//! ideal: the caller supplies the sample offset of the first bit, normally
//! derived from preamble localization.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;

/// Periods used for the demodulator's level estimate; matches the 32-bit
/// frame preamble, which carries equal counts of ones and zeros.
const LEVEL_ESTIMATE_PERIODS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModemError {
    #[error("waveform too short: need {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("bit sequences differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
}

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Self {
        assert!(!samples.is_empty(), "waveform must be nonempty");
        assert!(sample_rate > 0.0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|&s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Writes the waveform as a two-column CSV (sample_index, value) plus a
    /// JSON sidecar holding the sample rate. The sidecar path is the data
    /// path with its extension replaced by `json`. This is also the ingestion
    /// format for real oscilloscope captures.
    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::with_capacity(self.samples.len() * 24);
        out.push_str("sample_index,value\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        fs::File::create(path)?.write_all(out.as_bytes())?;
        let sidecar = path.with_extension("json");
        let meta = serde_json::json!({ "sample_rate": self.sample_rate });
        fs::write(sidecar, format!("{:#}\n", meta))
    }

    /// Loads a waveform written by [`Waveform::save_csv`], or any capture in
    /// the same layout.
    pub fn load_csv(path: &Path) -> std::io::Result<Waveform> {
        let data = fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (lineno, line) in data.lines().enumerate() {
            if lineno == 0 && line.starts_with("sample_index") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("bad waveform CSV line {}: {line:?}", lineno + 1),
                    )
                })?;
            samples.push(value);
        }
        let sidecar = path.with_extension("json");
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
        let sample_rate = meta["sample_rate"].as_f64().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, "sidecar lacks sample_rate")
        })?;
        Ok(Waveform::new(samples, sample_rate))
    }
}

/// OOK modem parameters. The sample rate is always
/// `bit_rate * samples_per_bit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModemConfig {
    pub bit_rate: f64,
    pub samples_per_bit: usize,
    pub high_level: f64,
    pub low_level: f64,
}

impl Default for ModemConfig {
    fn default() -> Self {
        Self {
            bit_rate: 200_000.0,
            samples_per_bit: 25,
            high_level: 1.0,
            low_level: 0.0,
        }
    }
}

impl ModemConfig {
    pub fn sample_rate(&self) -> f64 {
        self.bit_rate * self.samples_per_bit as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.bit_rate > 0.0) {
            return Err("bit_rate must be positive".into());
        }
        if self.samples_per_bit < 4 {
            return Err("samples_per_bit must be at least 4".into());
        }
        if !(self.high_level > self.low_level) {
            return Err("high_level must exceed low_level".into());
        }
        Ok(())
    }
}

/// Maps each bit to `samples_per_bit` samples at the high or low level.
pub fn modulate(bits: &BitSequence, cfg: &ModemConfig) -> Waveform {
    assert!(!bits.is_empty(), "cannot modulate an empty bit sequence");
    let mut samples = Vec::with_capacity(bits.len() * cfg.samples_per_bit);
    for &bit in bits.iter() {
        let level = if bit == 1 {
            cfg.high_level
        } else {
            cfg.low_level
        };
        samples.extend(std::iter::repeat(level).take(cfg.samples_per_bit));
    }
    Waveform::new(samples, cfg.sample_rate())
}

/// Integrate-and-dump demodulation of every full bit period from
/// `bit_offset_samples` to the end of the waveform.
///
/// The decision threshold is the midpoint between the averages of the upper
/// and lower halves of the sorted per-period means over the first
/// [`LEVEL_ESTIMATE_PERIODS`] periods. When those periods are the frame
/// preamble (16 ones, 16 zeros) this is exactly the midpoint of the mean
/// "one" and mean "zero" levels; for arbitrary payloads any threshold
/// strictly between the two received levels decides correctly in the
/// noise-free case.
pub fn demodulate(
    w: &Waveform,
    cfg: &ModemConfig,
    bit_offset_samples: usize,
) -> Result<BitSequence, ModemError> {
    let spb = cfg.samples_per_bit;
    if w.len() < bit_offset_samples + spb {
        return Err(ModemError::TooShort {
            needed: bit_offset_samples + spb,
            have: w.len(),
        });
    }
    let n_bits = (w.len() - bit_offset_samples) / spb;
    let period_means: Vec<f64> = (0..n_bits)
        .map(|i| {
            let start = bit_offset_samples + i * spb;
            w.samples[start..start + spb].iter().sum::<f64>() / spb as f64
        })
        .collect();

    let window = n_bits.min(LEVEL_ESTIMATE_PERIODS);
    let mut sorted = period_means[..window].to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite period mean"));
    let half = window / 2;
    let threshold = if half == 0 {
        sorted[0]
    } else {
        let low = sorted[..half].iter().sum::<f64>() / half as f64;
        let high = sorted[window - half..].iter().sum::<f64>() / half as f64;
        0.5 * (low + high)
    };

    Ok(period_means
        .iter()
        .map(|&m| u8::from(m > threshold))
        .collect())
}

/// Hamming distance divided by length.
pub fn measure_ber(tx_bits: &BitSequence, rx_bits: &BitSequence) -> Result<f64, ModemError> {
    if tx_bits.len() != rx_bits.len() {
        return Err(ModemError::LengthMismatch {
            a: tx_bits.len(),
            b: rx_bits.len(),
        });
    }
    let errors = tx_bits
        .iter()
        .zip(rx_bits.iter())
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / tx_bits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::add_awgn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, seed: u64) -> BitSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0..=1u8)).collect()
    }

    #[test]
    fn one_bit_gives_25_high_samples_at_5mhz() {
        let cfg = ModemConfig::default();
        let w = modulate(&BitSequence::from_bits(vec![1]), &cfg);
        assert_eq!(w.len(), 25);
        assert!(w.samples.iter().all(|&s| s == 1.0));
        assert_eq!(w.sample_rate, 5_000_000.0);
    }

    #[test]
    fn two_bits_give_high_then_low() {
        let cfg = ModemConfig::default();
        let w = modulate(&BitSequence::from_bits(vec![1, 0]), &cfg);
        assert!(w.samples[..25].iter().all(|&s| s == 1.0));
        assert!(w.samples[25..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_frame_is_26800_samples() {
        let cfg = ModemConfig::default();
        let bits = BitSequence::from_bytes(&[0x55; 134]);
        assert_eq!(modulate(&bits, &cfg).len(), 26_800);
    }

    #[test]
    fn noiseless_round_trip() {
        let cfg = ModemConfig::default();
        let bits = random_bits(1000, 1);
        let rx = demodulate(&modulate(&bits, &cfg), &cfg, 0).unwrap();
        assert_eq!(rx, bits);
    }

    #[test]
    fn round_trip_survives_tiny_link_gain() {
        let cfg = ModemConfig::default();
        let bits = random_bits(1000, 2);
        let rx = demodulate(&modulate(&bits, &cfg).scaled(3.7e-4), &cfg, 0).unwrap();
        assert_eq!(rx, bits, "gain-adaptive threshold failed under scaling");
    }

    #[test]
    fn heavy_noise_causes_errors() {
        let cfg = ModemConfig::default();
        let bits = random_bits(100_000, 3);
        let noisy = add_awgn(&modulate(&bits, &cfg), -20.0, 99).unwrap();
        let rx = demodulate(&noisy, &cfg, 0).unwrap();
        let ber = measure_ber(&bits, &rx).unwrap();
        assert!(ber > 0.0, "expected bit errors at -20 dB");
    }

    #[test]
    fn offset_shifts_bit_boundaries() {
        let cfg = ModemConfig::default();
        let bits = random_bits(64, 4);
        let mut samples = vec![0.0; 13];
        samples.extend_from_slice(&modulate(&bits, &cfg).samples);
        let w = Waveform::new(samples, cfg.sample_rate());
        let rx = demodulate(&w, &cfg, 13).unwrap();
        assert_eq!(rx, bits);
    }

    #[test]
    fn too_short_is_rejected() {
        let cfg = ModemConfig::default();
        let w = Waveform::new(vec![0.0; 20], cfg.sample_rate());
        assert_eq!(
            demodulate(&w, &cfg, 0),
            Err(ModemError::TooShort {
                needed: 25,
                have: 20
            })
        );
    }

    #[test]
    fn ber_counting() {
        let a = BitSequence::from_bits(vec![1, 0, 1, 1]);
        assert_eq!(measure_ber(&a, &a), Ok(0.0));
        let complement: BitSequence = a.iter().map(|&b| 1 - b).collect();
        assert_eq!(measure_ber(&a, &complement), Ok(1.0));

        let mut bits = vec![0u8; 1000];
        bits[123] = 1;
        let tx = BitSequence::from_bits(vec![0u8; 1000]);
        assert_eq!(
            measure_ber(&tx, &BitSequence::from_bits(bits)),
            Ok(0.001)
        );
    }

    #[test]
    fn ber_length_mismatch() {
        let a = random_bits(10, 5);
        let b = random_bits(11, 5);
        assert_eq!(
            measure_ber(&a, &b),
            Err(ModemError::LengthMismatch { a: 10, b: 11 })
        );
    }

    #[test]
    fn perfect_channel_round_trip_at_high_snr() {
        let cfg = ModemConfig::default();
        let bits = random_bits(100_000, 6);
        let noisy = add_awgn(&modulate(&bits, &cfg), 60.0, 7).unwrap();
        let rx = demodulate(&noisy, &cfg, 0).unwrap();
        assert_eq!(measure_ber(&bits, &rx), Ok(0.0));
    }

    #[test]
    fn waveform_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("capture.csv");
        let w = Waveform::new(vec![0.0, 1.5, -0.25, 3.0e-4], 5e6);
        w.save_csv(&path).unwrap();
        let loaded = Waveform::load_csv(&path).unwrap();
        assert_eq!(loaded, w);
    }
}
