//! Experiment configuration: one JSON document drives dataset generation,
//! sweeps, and BER runs.
//!
//! SNR grid points are plain numbers in dB; the string `"inf"` is the
//! reserved noiseless sentinel, accepted and emitted by the (de)serializer
//! because JSON itself has no infinity literal.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelGeometry, ReceiverParams};
use crate::device::PopulationSpec;
use crate::modem::ModemConfig;

/// Supported config schema version.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// (De)serializes `Vec<f64>` SNR lists, mapping infinity to the string
/// `"inf"`.
pub mod snr_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for &v in values {
            if v.is_infinite() && v > 0.0 {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element(&v)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Number(f64),
            Text(String),
        }
        let entries = Vec::<Entry>::deserialize(de)?;
        entries
            .into_iter()
            .map(|e| match e {
                Entry::Number(v) => Ok(v),
                Entry::Text(s) if s == "inf" => Ok(f64::INFINITY),
                Entry::Text(s) => Err(D::Error::custom(format!(
                    "SNR entries are numbers or \"inf\", got {s:?}"
                ))),
            })
            .collect()
    }
}

/// Formats an SNR value the way configs and CSV files spell it.
pub fn snr_label(snr_db: f64) -> String {
    if snr_db.is_infinite() && snr_db > 0.0 {
        "inf".to_string()
    } else {
        format!("{snr_db}")
    }
}

/// Full experiment description; see the repository README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub population: PopulationSpec,
    pub geometry: ChannelGeometry,
    pub receiver: ReceiverParams,
    pub modem: ModemConfig,
    #[serde(with = "snr_serde")]
    pub snr_points_db: Vec<f64>,
    pub distance_points_m: Vec<f64>,
    pub frames_per_device: usize,
    pub split_ratio: f64,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            population: PopulationSpec::default(),
            geometry: ChannelGeometry::default(),
            receiver: ReceiverParams::default(),
            modem: ModemConfig::default(),
            snr_points_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            distance_points_m: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
            frames_per_device: 100,
            split_ratio: 0.7,
            master_seed: 20_240_157,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "schema_version {} unsupported, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.snr_points_db.is_empty() {
            return invalid("snr_points_db must be nonempty");
        }
        if self.snr_points_db.iter().any(|v| v.is_nan()) {
            return invalid("snr_points_db contains NaN");
        }
        if self.distance_points_m.is_empty() {
            return invalid("distance_points_m must be nonempty");
        }
        if self.distance_points_m.iter().any(|&d| !(d > 0.0)) {
            return invalid("distances must be positive");
        }
        if self.frames_per_device < 10 {
            return invalid("frames_per_device must be at least 10");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return invalid("split_ratio must lie in (0, 1)");
        }
        self.population
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.geometry
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.receiver
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.modem
            .validate()
            .map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_json_pretty())?;
        Ok(())
    }

    /// Hex-encoded SHA-256 of the canonical JSON serialization; stamps every
    /// output file set with the configuration that produced it.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_json_pretty().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}
