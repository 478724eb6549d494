//! Network configuration: cell geometry, frame structure, radio parameters.
//!
//! Loaded from TOML. Every field has a default matching the reference urban
//! macro setup (4 corner base stations on a 1 km square, 20 users, 200-symbol
//! coherence interval, -96 dBm noise), so an empty file is a valid config.
//! Powers are watts, distances kilometres, noise variances watts; dB shows up
//! only in the shadow-fading and path-loss fields.

use serde::Deserialize;

use crate::units::dbm_to_watt;
use crate::{Error, Result};

/// Per-BS or per-user fields accept either one number (broadcast) or a list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn broadcast(&self, len: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(x) => Ok(vec![*x; len]),
            ScalarOrVec::Vec(v) if v.len() == len => Ok(v.clone()),
            ScalarOrVec::Vec(v) => Err(Error::Config(format!(
                "{field}: expected {len} entries, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct NetworkConfig {
    /// Number of base stations L.
    pub num_bs: usize,
    /// Antennas per base station M.
    pub antennas_per_bs: usize,
    /// Number of single-antenna users K.
    pub num_users: usize,
    /// Coherence interval length tau_c in symbols.
    pub coherence_length: usize,
    /// Uplink pilot length tau_p in symbols (defaults to K: orthogonal pilots).
    pub pilot_length: usize,
    /// Fraction of payload symbols used for downlink, in (0, 1].
    pub dl_fraction: f64,
    /// Side of the square deployment area in km.
    pub square_side: f64,
    /// Minimum user to base station distance in km (rejection sampling).
    pub min_bs_user_distance: f64,
    /// Log-normal shadow fading standard deviation in dB.
    pub shadow_std_db: f64,
    /// Path loss at 1 km in dB (positive number).
    pub pathloss_intercept_db: f64,
    /// Path loss distance exponent premultiplied by 10, i.e. loss = intercept + slope*log10(d_km).
    pub pathloss_slope: f64,
    /// Uplink pilot power per user, watts.
    pub pilot_power: Vec<f64>,
    /// Uplink noise variance, watts.
    pub ul_noise: f64,
    /// Downlink noise variance, watts.
    pub dl_noise: f64,
    /// Power amplifier loss factor per BS (>= 1; 1 means ideal amplifier).
    pub amp_efficiency: Vec<f64>,
    /// Downlink transmit power budget per BS, watts.
    pub max_power: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    num_bs: Option<usize>,
    antennas_per_bs: Option<usize>,
    num_users: Option<usize>,
    coherence_length: Option<usize>,
    pilot_length: Option<usize>,
    dl_fraction: Option<f64>,
    square_side: Option<f64>,
    min_bs_user_distance: Option<f64>,
    shadow_std_db: Option<f64>,
    pathloss_intercept_db: Option<f64>,
    pathloss_slope: Option<f64>,
    pilot_power: Option<ScalarOrVec>,
    ul_noise: Option<f64>,
    dl_noise: Option<f64>,
    amp_efficiency: Option<ScalarOrVec>,
    max_power: Option<ScalarOrVec>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let noise = dbm_to_watt(-96.0);
        NetworkConfig {
            num_bs: 4,
            antennas_per_bs: 200,
            num_users: 20,
            coherence_length: 200,
            pilot_length: 20,
            dl_fraction: 1.0,
            square_side: 1.0,
            min_bs_user_distance: 0.1,
            shadow_std_db: 7.0,
            pathloss_intercept_db: 148.1,
            pathloss_slope: 37.6,
            pilot_power: vec![0.2; 20],
            ul_noise: noise,
            dl_noise: noise,
            amp_efficiency: vec![1.0; 4],
            max_power: vec![40.0; 4],
        }
    }
}

impl TryFrom<RawConfig> for NetworkConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let d = NetworkConfig::default();
        let num_bs = raw.num_bs.unwrap_or(d.num_bs);
        let num_users = raw.num_users.unwrap_or(d.num_users);
        let cfg = NetworkConfig {
            num_bs,
            antennas_per_bs: raw.antennas_per_bs.unwrap_or(d.antennas_per_bs),
            num_users,
            coherence_length: raw.coherence_length.unwrap_or(d.coherence_length),
            pilot_length: raw.pilot_length.unwrap_or(num_users),
            dl_fraction: raw.dl_fraction.unwrap_or(d.dl_fraction),
            square_side: raw.square_side.unwrap_or(d.square_side),
            min_bs_user_distance: raw.min_bs_user_distance.unwrap_or(d.min_bs_user_distance),
            shadow_std_db: raw.shadow_std_db.unwrap_or(d.shadow_std_db),
            pathloss_intercept_db: raw.pathloss_intercept_db.unwrap_or(d.pathloss_intercept_db),
            pathloss_slope: raw.pathloss_slope.unwrap_or(d.pathloss_slope),
            pilot_power: raw
                .pilot_power
                .unwrap_or(ScalarOrVec::Scalar(0.2))
                .broadcast(num_users, "pilot_power")?,
            ul_noise: raw.ul_noise.unwrap_or(d.ul_noise),
            dl_noise: raw.dl_noise.unwrap_or(d.dl_noise),
            amp_efficiency: raw
                .amp_efficiency
                .unwrap_or(ScalarOrVec::Scalar(1.0))
                .broadcast(num_bs, "amp_efficiency")?,
            max_power: raw
                .max_power
                .unwrap_or(ScalarOrVec::Scalar(40.0))
                .broadcast(num_bs, "max_power")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl NetworkConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_bs == 0 || self.antennas_per_bs == 0 || self.num_users == 0 {
            return fail("num_bs, antennas_per_bs, num_users must be >= 1".into());
        }
        if self.pilot_length < 1 || self.pilot_length > self.coherence_length {
            return fail(format!(
                "pilot_length must satisfy 1 <= tau_p <= tau_c (got {} / {})",
                self.pilot_length, self.coherence_length
            ));
        }
        let scalars = [
            self.dl_fraction,
            self.square_side,
            self.min_bs_user_distance,
            self.shadow_std_db,
            self.pathloss_intercept_db,
            self.pathloss_slope,
            self.ul_noise,
            self.dl_noise,
        ];
        let finite = scalars.iter().all(|v| v.is_finite())
            && self.pilot_power.iter().all(|v| v.is_finite())
            && self.max_power.iter().all(|v| v.is_finite())
            && self.amp_efficiency.iter().all(|v| v.is_finite());
        if !finite {
            return fail("all numeric fields must be finite".into());
        }
        if self.dl_fraction <= 0.0 || self.dl_fraction > 1.0 {
            return fail(format!("dl_fraction must be in (0, 1], got {}", self.dl_fraction));
        }
        if self.square_side <= 0.0 {
            return fail("square_side must be positive".into());
        }
        if self.min_bs_user_distance < 0.0 || self.min_bs_user_distance >= self.square_side {
            return fail(format!(
                "min_bs_user_distance must be in [0, square_side), got {}",
                self.min_bs_user_distance
            ));
        }
        if self.shadow_std_db < 0.0 {
            return fail("shadow_std_db must be nonnegative".into());
        }
        if self.ul_noise <= 0.0 || self.dl_noise <= 0.0 {
            return fail("noise variances must be strictly positive".into());
        }
        if self.pilot_power.iter().any(|&p| p <= 0.0) {
            return fail("pilot_power entries must be strictly positive".into());
        }
        if self.max_power.iter().any(|&p| p <= 0.0) {
            return fail("max_power entries must be strictly positive".into());
        }
        if self.amp_efficiency.iter().any(|&d| d < 1.0) {
            return fail("amp_efficiency entries must be >= 1".into());
        }
        Ok(())
    }

    /// Payload fraction of the coherence interval times the downlink share:
    /// the prefactor applied to log2(1+SINR) in all rate expressions.
    pub fn rate_prefactor(&self) -> f64 {
        self.dl_fraction * (1.0 - self.pilot_length as f64 / self.coherence_length as f64)
    }
}
