//! Virtual LED devices: transfer-function parameters, waveform distortion,
//! and population generation with manufacturing-tolerance jitter.
//!
//! Each device is reduced to three fingerprint mechanisms:
//!
//! - a closed-form DC gain assembled from the electrical/optical loop
//!   parameters (phosphor attenuation, photon efficiency, spontaneous
//!   emission, loop impedances, quantum-well differential resistances),
//! - a single-pole low-pass at the device 3-dB cutoff, discretized by the
//!   bilinear transform (stable at any sample rate),
//! - a memoryless soft limiter `y = sat * tanh(x / sat)` standing in for the
//!   diode's compressive nonlinearity.
//!
//! Parameter jitter across a population is what makes devices separable; the
//! default tolerances are a calibrated knob, not physical constants.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modem::Waveform;

/// Lowest admissible device cutoff; keeps every generated device's bandwidth
/// above the 200 kHz signal fundamental.
pub const MIN_F_CUTOFF_HZ: f64 = 2.5e5;

const POSITIVE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeviceError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
}

/// One virtual LED's transfer-function parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub device_id: u32,
    /// Phosphor attenuation, dimensionless in (0, 1].
    pub gamma: f64,
    /// Photon emission efficiency, dimensionless in (0, 1].
    pub eta_ph: f64,
    /// Spontaneous emission coefficient, dimensionless, positive.
    pub beta_sp: f64,
    /// Electrical-loop impedance, ohms, positive.
    pub z_e: f64,
    /// Optical-loop impedance, ohms, positive.
    pub z_ph: f64,
    /// Source output impedance, ohms, nonnegative.
    pub z_s: f64,
    /// Parasitic package resistance, ohms, nonnegative.
    pub r_s: f64,
    /// Per-quantum-well differential resistances, ohms, positive.
    pub r_iqr: Vec<f64>,
    /// 3-dB bandwidth, Hz.
    pub f_cutoff: f64,
    /// Soft-saturation amplitude in output units.
    pub sat_level: f64,
}

impl DeviceParams {
    /// Fixed nominal device. The values are arbitrary-but-fixed defaults in
    /// plausible ranges; the saturation level sits at 1.5x the nominal peak
    /// output for a unit-amplitude input.
    pub fn nominal() -> Self {
        let mut p = Self {
            device_id: 0,
            gamma: 0.8,
            eta_ph: 0.6,
            beta_sp: 2.0,
            z_e: 50.0,
            z_ph: 30.0,
            z_s: 50.0,
            r_s: 0.5,
            r_iqr: vec![25.0; 5],
            f_cutoff: 2.0e6,
            sat_level: 1.0,
        };
        p.sat_level = 1.5 * p.dc_gain();
        p
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(DeviceError::InvalidParams(what.to_string()))
            }
        };
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma outside (0, 1]")?;
        check(
            self.eta_ph > 0.0 && self.eta_ph <= 1.0,
            "eta_ph outside (0, 1]",
        )?;
        check(self.beta_sp > 0.0, "beta_sp must be positive")?;
        check(self.z_e > 0.0, "z_e must be positive")?;
        check(self.z_ph > 0.0, "z_ph must be positive")?;
        check(self.z_s >= 0.0, "z_s must be nonnegative")?;
        check(self.r_s >= 0.0, "r_s must be nonnegative")?;
        check(
            !self.r_iqr.is_empty() && self.r_iqr.iter().all(|&r| r > 0.0),
            "r_iqr must be nonempty and positive",
        )?;
        check(
            self.f_cutoff >= MIN_F_CUTOFF_HZ,
            "f_cutoff below minimum bandwidth",
        )?;
        check(self.sat_level > 0.0, "sat_level must be positive")?;
        let g = self.dc_gain();
        check(g.is_finite() && g > 0.0, "dc gain must be positive and finite")?;
        Ok(())
    }

    /// Zero-frequency gain: the rational prefactor
    /// `gamma * eta_ph * beta_sp * z_e * z_ph * sum(1/r_iqr) / (z_e + r_s + z_s)`.
    pub fn dc_gain(&self) -> f64 {
        let well_conductance: f64 = self.r_iqr.iter().map(|&r| 1.0 / r).sum();
        self.gamma * self.eta_ph * self.beta_sp * self.z_e * self.z_ph * well_conductance
            / (self.z_e + self.r_s + self.z_s)
    }

    /// Complex small-signal response `dc_gain / (1 + j f / f_cutoff)`.
    pub fn frequency_response(&self, f_hz: f64) -> Complex64 {
        Complex64::new(self.dc_gain(), 0.0) / Complex64::new(1.0, f_hz / self.f_cutoff)
    }

    /// Runs a waveform through the device: DC-gain-scaled single-pole
    /// low-pass (bilinear discretization, zero initial state) followed by the
    /// soft limiter. The first couple of bit periods of the output carry the
    /// filter transient.
    pub fn apply(&self, tx: &Waveform) -> Waveform {
        let g = self.dc_gain();
        let omega_c = 2.0 * std::f64::consts::PI * self.f_cutoff;
        // H(s) = g / (1 + s/omega_c) with s = 2*fs*(1-z^-1)/(1+z^-1):
        // y[n] = (g*(x[n]+x[n-1]) + (c-1)*y[n-1]) / (1+c),  c = 2*fs/omega_c.
        let c = 2.0 * tx.sample_rate / omega_c;
        let a = (c - 1.0) / (c + 1.0);
        let b = g / (c + 1.0);
        let sat = self.sat_level;

        let mut samples = Vec::with_capacity(tx.len());
        let mut x_prev = 0.0;
        let mut y_prev = 0.0;
        for &x in &tx.samples {
            let y = b * (x + x_prev) + a * y_prev;
            x_prev = x;
            y_prev = y;
            samples.push(sat * (y / sat).tanh());
        }
        Waveform::new(samples, tx.sample_rate)
    }
}

/// Applies a device's transfer function to a transmitted waveform.
pub fn apply_device(p: &DeviceParams, tx: &Waveform) -> Waveform {
    p.apply(tx)
}

/// Per-field relative standard deviations used when jittering a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub gamma: f64,
    pub eta_ph: f64,
    pub beta_sp: f64,
    pub z_e: f64,
    pub z_ph: f64,
    pub z_s: f64,
    pub r_s: f64,
    pub r_iqr: f64,
    pub f_cutoff: f64,
    pub sat_level: f64,
}

impl Default for ToleranceSpec {
    /// Calibrated defaults: 5% on impedances and resistances, 3% on the
    /// emission parameters, 8% on bandwidth, saturation level left nominal.
    fn default() -> Self {
        Self {
            gamma: 0.03,
            eta_ph: 0.03,
            beta_sp: 0.03,
            z_e: 0.05,
            z_ph: 0.05,
            z_s: 0.05,
            r_s: 0.05,
            r_iqr: 0.05,
            f_cutoff: 0.08,
            sat_level: 0.0,
        }
    }
}

impl ToleranceSpec {
    fn all(&self) -> [f64; 10] {
        [
            self.gamma,
            self.eta_ph,
            self.beta_sp,
            self.z_e,
            self.z_ph,
            self.z_s,
            self.r_s,
            self.r_iqr,
            self.f_cutoff,
            self.sat_level,
        ]
    }

    /// Returns a copy with every tolerance multiplied by `scale`; the
    /// calibration knob.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            gamma: self.gamma * scale,
            eta_ph: self.eta_ph * scale,
            beta_sp: self.beta_sp * scale,
            z_e: self.z_e * scale,
            z_ph: self.z_ph * scale,
            z_s: self.z_s * scale,
            r_s: self.r_s * scale,
            r_iqr: self.r_iqr * scale,
            f_cutoff: self.f_cutoff * scale,
            sat_level: self.sat_level * scale,
        }
    }
}

/// Recipe for a jittered device population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_devices: usize,
    pub nominal: DeviceParams,
    pub tolerance: ToleranceSpec,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n_devices: 39,
            nominal: DeviceParams::nominal(),
            tolerance: ToleranceSpec::default(),
            seed: 7,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.n_devices < 2 {
            return Err(DeviceError::InvalidSpec(
                "population needs at least 2 devices".into(),
            ));
        }
        if self
            .tolerance
            .all()
            .iter()
            .any(|&t| !(0.0..=0.5).contains(&t))
        {
            return Err(DeviceError::InvalidSpec(
                "tolerances must lie in [0, 0.5]".into(),
            ));
        }
        self.nominal.validate()?;
        Ok(())
    }
}

/// Tracks how often jittered draws had to be clamped into validity ranges.
struct ClampCounter {
    clamped: usize,
    total: usize,
}

impl ClampCounter {
    fn jitter<R: rand::Rng>(
        &mut self,
        rng: &mut R,
        nominal: f64,
        tol: f64,
        lo: f64,
        hi: f64,
    ) -> f64 {
        let draw: f64 = StandardNormal.sample(rng);
        let value = nominal * (1.0 + tol * draw);
        self.total += 1;
        if value < lo {
            self.clamped += 1;
            lo
        } else if value > hi {
            self.clamped += 1;
            hi
        } else {
            value
        }
    }
}

/// Generates `spec.n_devices` jittered devices, deterministic per seed.
/// Each field is `nominal * (1 + tolerance * N(0,1))`, clamped into its
/// validity range. A spec requiring clamps on more than 1% of draws is
/// rejected as unusable.
pub fn generate_population(spec: &PopulationSpec) -> Result<Vec<DeviceParams>, DeviceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut counter = ClampCounter {
        clamped: 0,
        total: 0,
    };
    let nominal = &spec.nominal;
    let tol = &spec.tolerance;
    let mut devices = Vec::with_capacity(spec.n_devices);
    for id in 0..spec.n_devices {
        let device = DeviceParams {
            device_id: id as u32,
            gamma: counter.jitter(&mut rng, nominal.gamma, tol.gamma, POSITIVE_FLOOR, 1.0),
            eta_ph: counter.jitter(&mut rng, nominal.eta_ph, tol.eta_ph, POSITIVE_FLOOR, 1.0),
            beta_sp: counter.jitter(
                &mut rng,
                nominal.beta_sp,
                tol.beta_sp,
                POSITIVE_FLOOR,
                f64::INFINITY,
            ),
            z_e: counter.jitter(&mut rng, nominal.z_e, tol.z_e, POSITIVE_FLOOR, f64::INFINITY),
            z_ph: counter.jitter(
                &mut rng,
                nominal.z_ph,
                tol.z_ph,
                POSITIVE_FLOOR,
                f64::INFINITY,
            ),
            z_s: counter.jitter(&mut rng, nominal.z_s, tol.z_s, 0.0, f64::INFINITY),
            r_s: counter.jitter(&mut rng, nominal.r_s, tol.r_s, 0.0, f64::INFINITY),
            r_iqr: nominal
                .r_iqr
                .iter()
                .map(|&r| counter.jitter(&mut rng, r, tol.r_iqr, POSITIVE_FLOOR, f64::INFINITY))
                .collect(),
            f_cutoff: counter.jitter(
                &mut rng,
                nominal.f_cutoff,
                tol.f_cutoff,
                MIN_F_CUTOFF_HZ,
                f64::INFINITY,
            ),
            sat_level: counter.jitter(
                &mut rng,
                nominal.sat_level,
                tol.sat_level,
                POSITIVE_FLOOR,
                f64::INFINITY,
            ),
        };
        devices.push(device);
    }
    if counter.clamped as f64 > 0.01 * counter.total as f64 {
        return Err(DeviceError::InvalidSpec(format!(
            "tolerances force clamping on {}/{} draws (> 1%)",
            counter.clamped, counter.total
        )));
    }
    Ok(devices)
}

/// One row per device with every parameter field plus the derived DC gain,
/// for auditing generated populations.
pub fn population_csv(devices: &[DeviceParams]) -> String {
    let m = devices.first().map_or(0, |d| d.r_iqr.len());
    let mut out = String::from("device_id,gamma,eta_ph,beta_sp,z_e,z_ph,z_s,r_s");
    for i in 0..m {
        out.push_str(&format!(",r_iqr_{i}"));
    }
    out.push_str(",f_cutoff,sat_level,dc_gain\n");
    for d in devices {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            d.device_id, d.gamma, d.eta_ph, d.beta_sp, d.z_e, d.z_ph, d.z_s, d.r_s
        ));
        for r in &d.r_iqr {
            out.push_str(&format!(",{r}"));
        }
        out.push_str(&format!(",{},{},{}\n", d.f_cutoff, d.sat_level, d.dc_gain()));
    }
    out
}

/// Writes [`population_csv`] to a file.
pub fn write_population_csv(devices: &[DeviceParams], path: &Path) -> std::io::Result<()> {
    fs::write(path, population_csv(devices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_params() -> DeviceParams {
        DeviceParams {
            device_id: 0,
            gamma: 1.0,
            eta_ph: 1.0,
            beta_sp: 1.0,
            z_e: 1.0,
            z_ph: 1.0,
            z_s: 0.0,
            r_s: 0.0,
            r_iqr: vec![1.0],
            f_cutoff: 1.0e9,
            sat_level: 1.0e6,
        }
    }

    fn sine(freq: f64, amp: f64, fs: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
                .collect(),
            fs,
        )
    }

    /// Coherent amplitude estimate over an integer number of cycles.
    fn measure_amplitude(samples: &[f64], freq: f64, fs: f64) -> f64 {
        let mut sum_cos = 0.0;
        let mut sum_sin = 0.0;
        for (i, &s) in samples.iter().enumerate() {
            let phase = 2.0 * PI * freq * i as f64 / fs;
            sum_cos += s * phase.cos();
            sum_sin += s * phase.sin();
        }
        let n = samples.len() as f64;
        2.0 * ((sum_cos / n).powi(2) + (sum_sin / n).powi(2)).sqrt()
    }

    #[test]
    fn dc_gain_unit_parameters() {
        assert_eq!(unit_params().dc_gain(), 1.0);
    }

    #[test]
    fn dc_gain_halves_when_r_s_matches_z_e() {
        let mut p = unit_params();
        p.r_s = 1.0;
        assert_eq!(p.dc_gain(), 0.5);
    }

    #[test]
    fn dc_gain_nominal_matches_hand_evaluation() {
        // 0.8 * 0.6 * 2.0 * 50 * 30 * (5/25) / (50 + 0.5 + 50), evaluated
        // independently.
        let expected = 2.86567164179104461;
        let got = DeviceParams::nominal().dc_gain();
        assert!(
            (got - expected).abs() / expected < 1e-12,
            "dc gain {got} != {expected}"
        );
    }

    #[test]
    fn frequency_response_at_dc_is_dc_gain() {
        let p = DeviceParams::nominal();
        let h = p.frequency_response(0.0);
        assert_eq!(h.re, p.dc_gain());
        assert_eq!(h.im, 0.0);
    }

    #[test]
    fn frequency_response_at_cutoff() {
        let p = DeviceParams::nominal();
        let h = p.frequency_response(p.f_cutoff);
        let expected_mag = p.dc_gain() / 2.0_f64.sqrt();
        assert!((h.norm() - expected_mag).abs() < 1e-12 * expected_mag);
        assert!((h.arg() + PI / 4.0).abs() < 1e-12, "phase {} != -45deg", h.arg());
    }

    #[test]
    fn frequency_response_at_ten_cutoffs() {
        let p = DeviceParams::nominal();
        let h = p.frequency_response(10.0 * p.f_cutoff);
        let expected = p.dc_gain() / 101.0_f64.sqrt();
        assert!((h.norm() - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn identity_device_passes_signal_through() {
        let p = unit_params();
        let tx = sine(200e3, 1.0, 5e6, 5000);
        let rx = p.apply(&tx);
        for (i, (&a, &b)) in tx.samples.iter().zip(rx.samples.iter()).enumerate().skip(10) {
            assert!(
                (a - b).abs() <= 1e-3 * a.abs().max(1.0),
                "sample {i}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn constant_input_settles_to_dc_gain() {
        let mut p = DeviceParams::nominal();
        p.sat_level = 1e9; // keep the limiter out of the picture
        let c = 0.35;
        let tx = Waveform::new(vec![c; 2000], 5e6);
        let rx = p.apply(&tx);
        let expected = c * p.dc_gain();
        let settled = rx.samples.last().unwrap();
        assert!(
            (settled - expected).abs() < 1e-6 * expected,
            "settled {settled}, expected {expected}"
        );
    }

    #[test]
    fn dc_gain_ratio_preserved_in_linear_region() {
        let mut a = DeviceParams::nominal();
        a.sat_level = 1e9;
        let mut b = a.clone();
        b.gamma *= 2.0; // doubles the DC gain, nothing else
        let tx = Waveform::new(vec![0.1; 2000], 5e6);
        let ya = *a.apply(&tx).samples.last().unwrap();
        let yb = *b.apply(&tx).samples.last().unwrap();
        assert!((yb / ya - 2.0).abs() < 1e-9, "ratio {}", yb / ya);
    }

    #[test]
    fn saturation_compresses_large_inputs() {
        let p = DeviceParams::nominal();
        let tx = Waveform::new(vec![10.0; 2000], 5e6);
        let rx = p.apply(&tx);
        let out = rx.samples.last().unwrap();
        assert!(*out < p.sat_level, "output {out} exceeds sat {}", p.sat_level);
    }

    #[test]
    fn sinusoid_amplitude_matches_frequency_response() {
        // Sample fast enough that bilinear warping stays well under the 1%
        // comparison tolerance, and probe the region around the pole.
        let mut p = DeviceParams::nominal();
        p.sat_level = 1e9;
        let fs = 100e6;
        for freq in [0.2e6, 1.0e6, 2.0e6, 4.0e6] {
            let amp = 1e-3;
            let n = 4000 + 200 * (fs / freq) as usize;
            let tx = sine(freq, amp, fs, n);
            let rx = p.apply(&tx);
            let window = &rx.samples[4000..4000 + (200.0 * fs / freq) as usize];
            let measured = measure_amplitude(window, freq, fs);
            let expected = amp * p.frequency_response(freq).norm();
            assert!(
                (measured / expected - 1.0).abs() < 0.01,
                "freq {freq}: measured {measured}, expected {expected}"
            );
        }
    }

    #[test]
    fn sinusoid_amplitude_at_operating_point() {
        let mut p = DeviceParams::nominal();
        p.sat_level = 1e9;
        let fs = 5e6;
        let freq = 200e3;
        let tx = sine(freq, 0.01, fs, 10_000);
        let rx = p.apply(&tx);
        let measured = measure_amplitude(&rx.samples[2500..10_000], freq, fs);
        let expected = 0.01 * p.frequency_response(freq).norm();
        assert!(
            (measured / expected - 1.0).abs() < 0.01,
            "measured {measured}, expected {expected}"
        );
    }

    #[test]
    fn zero_tolerance_population_equals_nominal() {
        let spec = PopulationSpec {
            n_devices: 5,
            nominal: DeviceParams::nominal(),
            tolerance: ToleranceSpec::default().scaled(0.0),
            seed: 1,
        };
        let devices = generate_population(&spec).unwrap();
        assert_eq!(devices.len(), 5);
        for (i, d) in devices.iter().enumerate() {
            assert_eq!(d.device_id, i as u32);
            let mut nominal = spec.nominal.clone();
            nominal.device_id = i as u32;
            assert_eq!(*d, nominal);
        }
    }

    #[test]
    fn same_seed_same_population() {
        let spec = PopulationSpec::default();
        assert_eq!(
            generate_population(&spec).unwrap(),
            generate_population(&spec).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = PopulationSpec::default();
        let mut b = PopulationSpec::default();
        a.seed = 1;
        b.seed = 2;
        assert_ne!(generate_population(&a).unwrap(), generate_population(&b).unwrap());
    }

    #[test]
    fn default_population_sample_spread_tracks_tolerances() {
        let spec = PopulationSpec::default();
        let devices = generate_population(&spec).unwrap();
        assert_eq!(devices.len(), 39);

        let rel_std = |values: Vec<f64>, nominal: f64| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() / nominal
        };
        let checks: [(&str, Vec<f64>, f64, f64); 5] = [
            (
                "gamma",
                devices.iter().map(|d| d.gamma).collect(),
                spec.nominal.gamma,
                spec.tolerance.gamma,
            ),
            (
                "z_e",
                devices.iter().map(|d| d.z_e).collect(),
                spec.nominal.z_e,
                spec.tolerance.z_e,
            ),
            (
                "z_ph",
                devices.iter().map(|d| d.z_ph).collect(),
                spec.nominal.z_ph,
                spec.tolerance.z_ph,
            ),
            (
                "f_cutoff",
                devices.iter().map(|d| d.f_cutoff).collect(),
                spec.nominal.f_cutoff,
                spec.tolerance.f_cutoff,
            ),
            (
                "r_s",
                devices.iter().map(|d| d.r_s).collect(),
                spec.nominal.r_s,
                spec.tolerance.r_s,
            ),
        ];
        for (name, values, nominal, tol) in checks {
            let got = rel_std(values, nominal);
            assert!(
                (got - tol).abs() <= 0.3 * tol,
                "{name}: sample rel std {got:.4} vs configured {tol:.4}"
            );
        }
    }

    #[test]
    fn excessive_tolerance_is_rejected_as_unusable() {
        let mut spec = PopulationSpec::default();
        spec.nominal.gamma = 0.9;
        spec.tolerance.gamma = 0.4; // upper clamp at 1.0 sits at ~0.3 sigma
        assert!(matches!(
            generate_population(&spec),
            Err(DeviceError::InvalidSpec(_))
        ));
    }

    #[test]
    fn out_of_range_tolerance_is_invalid() {
        let mut spec = PopulationSpec::default();
        spec.tolerance.z_e = 0.6;
        assert!(matches!(
            generate_population(&spec),
            Err(DeviceError::InvalidSpec(_))
        ));
    }

    #[test]
    fn population_csv_has_row_per_device() {
        let devices = generate_population(&PopulationSpec::default()).unwrap();
        let csv = population_csv(&devices);
        assert_eq!(csv.lines().count(), 40); // header + 39 rows
        assert!(csv.starts_with("device_id,gamma,"));
        assert!(csv.contains(",r_iqr_4,"));
    }
}
