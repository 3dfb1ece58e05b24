//! Line-of-sight optical channel: Lambertian geometric gain, photodetector
//! receiver gain, and seeded AWGN injection.
//!
//! The channel and receiver are frequency-flat, so the link cascade reduces
//! to a single scalar applied to the waveform. Absolute radiometric units are
//! not tracked; the identification features are normalized downstream, so
//! only relative scaling matters.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modem::Waveform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel geometry: {0}")]
    InvalidGeometry(String),
    #[error("responsivity table does not cover [{lambda_min} m, {lambda_max} m]")]
    EmptySupport { lambda_min: f64, lambda_max: f64 },
    #[error("cannot set an SNR on a zero-power signal")]
    ZeroSignal,
}

/// Transmitter/receiver geometry for the Lambertian LOS gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    /// Lambertian radiation order, dimensionless, >= 0.
    pub mu: f64,
    /// Receiver aperture area, m^2.
    pub a_rec: f64,
    /// Irradiance angle, radians in [0, pi/2).
    pub psi: f64,
    /// Incidence angle, radians in [0, pi/2).
    pub theta: f64,
    /// Transmitter-receiver distance, meters.
    pub d: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self {
            mu: 1.0,
            a_rec: 1.0e-4,
            psi: 0.0,
            theta: 0.0,
            d: 0.30,
        }
    }
}

impl ChannelGeometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ChannelError::InvalidGeometry(what.to_string()))
            }
        };
        check(self.mu >= 0.0, "mu must be nonnegative")?;
        check(self.a_rec > 0.0, "a_rec must be positive")?;
        check((0.0..half_pi).contains(&self.psi), "psi outside [0, pi/2)")?;
        check(
            (0.0..half_pi).contains(&self.theta),
            "theta outside [0, pi/2)",
        )?;
        check(self.d > 0.0, "distance must be positive")?;
        Ok(())
    }

    /// Returns a copy at a different link distance.
    pub fn at_distance(&self, d: f64) -> Self {
        Self { d, ..self.clone() }
    }

    /// Lambertian LOS gain:
    /// `(mu + 1) * A_rec * cos(psi)^mu * cos(theta) / (2 * pi * D^2)`.
    pub fn channel_gain(&self) -> f64 {
        (self.mu + 1.0) * self.a_rec * self.psi.cos().powf(self.mu) * self.theta.cos()
            / (2.0 * std::f64::consts::PI * self.d * self.d)
    }
}

/// Free-function form of [`ChannelGeometry::channel_gain`].
pub fn channel_gain(g: &ChannelGeometry) -> f64 {
    g.channel_gain()
}

/// Photodetector plus amplifier model: a tabulated responsivity curve
/// integrated over the detection band, scaled by the amplifier gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    /// Amplifier gain, dimensionless.
    pub g_am: f64,
    /// Piecewise-linear responsivity: (wavelength m, A/W), ascending.
    pub responsivity: Vec<(f64, f64)>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for ReceiverParams {
    /// Flat 0.5 A/W over 400-700 nm.
    fn default() -> Self {
        Self {
            g_am: 1.0e6,
            responsivity: vec![(400e-9, 0.5), (700e-9, 0.5)],
            lambda_min: 400e-9,
            lambda_max: 700e-9,
        }
    }
}

impl ReceiverParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.g_am >= 0.0) {
            return Err(ChannelError::InvalidGeometry(
                "amplifier gain must be nonnegative".into(),
            ));
        }
        if self.lambda_min >= self.lambda_max {
            return Err(ChannelError::InvalidGeometry(
                "lambda_min must be below lambda_max".into(),
            ));
        }
        if self.responsivity.iter().any(|&(_, k)| k < 0.0) {
            return Err(ChannelError::InvalidGeometry(
                "responsivity must be nonnegative".into(),
            ));
        }
        if self
            .responsivity
            .windows(2)
            .any(|w| w[0].0 >= w[1].0)
        {
            return Err(ChannelError::InvalidGeometry(
                "responsivity wavelengths must be strictly ascending".into(),
            ));
        }
        Ok(())
    }

    /// Loads a responsivity curve from a two-column CSV
    /// (wavelength_m, responsivity); a `wavelength` header row is skipped.
    pub fn load_responsivity_csv(&mut self, path: &Path) -> std::io::Result<()> {
        let data = fs::read_to_string(path)?;
        let mut table = Vec::new();
        for (lineno, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("wavelength")) {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |v: Option<&str>| {
                v.and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("bad responsivity CSV line {}: {line:?}", lineno + 1),
                    )
                })
            };
            let lambda = parse(cols.next())?;
            let kappa = parse(cols.next())?;
            table.push((lambda, kappa));
        }
        self.responsivity = table;
        Ok(())
    }

    /// `G_am * integral of kappa(lambda) d lambda` over
    /// `[lambda_min, lambda_max]`, by trapezoidal integration of the
    /// tabulated curve. The table must cover the whole band.
    pub fn receiver_gain(&self) -> Result<f64, ChannelError> {
        self.validate()?;
        let table = &self.responsivity;
        let empty_support = || ChannelError::EmptySupport {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
        };
        if table.len() < 2
            || table.first().unwrap().0 > self.lambda_min
            || table.last().unwrap().0 < self.lambda_max
        {
            return Err(empty_support());
        }
        let interp = |x: f64| -> f64 {
            let idx = table.partition_point(|&(l, _)| l <= x);
            let (x0, y0) = table[idx.saturating_sub(1).min(table.len() - 2)];
            let (x1, y1) = table[idx.clamp(1, table.len() - 1)];
            if x1 == x0 {
                y0
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        };
        // Trapezoid over the band edges plus every interior table knot.
        let mut knots = vec![self.lambda_min];
        knots.extend(
            table
                .iter()
                .map(|&(l, _)| l)
                .filter(|&l| l > self.lambda_min && l < self.lambda_max),
        );
        knots.push(self.lambda_max);
        let mut integral = 0.0;
        for pair in knots.windows(2) {
            integral += 0.5 * (interp(pair[0]) + interp(pair[1])) * (pair[1] - pair[0]);
        }
        Ok(self.g_am * integral)
    }
}

/// Free-function form of [`ReceiverParams::receiver_gain`].
pub fn receiver_gain(r: &ReceiverParams) -> Result<f64, ChannelError> {
    r.receiver_gain()
}

/// Applies the frequency-flat link cascade: every sample is multiplied by
/// `channel_gain(g) * receiver_gain(r)`.
pub fn apply_link(
    tx_out: &Waveform,
    g: &ChannelGeometry,
    r: &ReceiverParams,
) -> Result<Waveform, ChannelError> {
    g.validate()?;
    let gain = g.channel_gain() * r.receiver_gain()?;
    Ok(tx_out.scaled(gain))
}

/// Adds zero-mean white Gaussian noise at the requested SNR, defined as the
/// ratio of the signal's mean squared sample value to the per-sample noise
/// variance. An infinite `snr_db` is the noiseless sentinel and returns the
/// input unchanged. Deterministic per seed.
pub fn add_awgn(x: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform, ChannelError> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(x.clone());
    }
    let power = x.power();
    if power == 0.0 {
        return Err(ChannelError::ZeroSignal);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples
        .iter()
        .map(|&s| s + normal.sample(&mut rng))
        .collect();
    Ok(Waveform::new(samples, x.sample_rate))
}
