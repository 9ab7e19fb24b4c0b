//! Simulation parameters and their text representation.
//!
//! Every power and power density is held in linear units. Decibel values are
//! accepted through `_dbm` / `_db` suffixed aliases when a document is loaded
//! and never appear in downstream arithmetic. The antenna pattern parameters
//! (`max_gain_dbi`, `max_attenuation_db`) are the exception: the pattern itself
//! is defined on a dB scale and is converted at the point of use.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

/// Speed of light, m/s, rounded as in the link-budget reference values.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: cannot parse value for `{key}`: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("{key} {message}")]
    Invalid { key: &'static str, message: String },
}

/// Complete parameter set of one simulation run.
///
/// Defaults reproduce the reference highway scenario: a 3 km road, 2000 slots
/// of 0.1 ms, 28 GHz carrier with 800 MHz of bandwidth, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub road_length_m: f64,
    pub n_slots: usize,
    pub slot_duration_s: f64,
    pub n_obus: usize,
    pub n_contents: usize,
    pub content_size_range_bits: [f64; 2],
    pub tx_power_w: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub si_cancellation: f64,
    pub sinr_threshold: f64,
    pub carrier_freq_hz: f64,
    pub pathloss_exponent: f64,
    pub nakagami_m: f64,
    pub accel_mps2: f64,
    pub speed_change_prob: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub utility_factor: f64,
    pub pricing_factor: f64,
    pub max_beams: usize,
    pub max_gain_dbi: f64,
    pub max_attenuation_db: f64,
    pub beamwidth_3db_deg: f64,
    pub lane_separation_m: f64,
    pub mobility_update_interval_slots: usize,
    pub init_possession_prob: f64,
    /// Start each game run from a random partition instead of all singletons.
    pub random_initial_partition: bool,
    /// Switch count at which a game run is aborted as non-convergent.
    pub switch_ceiling: usize,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            road_length_m: 3000.0,
            n_slots: 2000,
            slot_duration_s: 1e-4,
            n_obus: 10,
            n_contents: 20,
            content_size_range_bits: [50e6, 500e6],
            tx_power_w: dbm_to_watts(30.0),
            bandwidth_hz: 800e6,
            noise_psd_w_per_hz: dbm_per_mhz_to_w_per_hz(-134.0),
            si_cancellation: 1e-8,
            sinr_threshold: db_to_linear(20.0),
            carrier_freq_hz: 28e9,
            pathloss_exponent: 2.0,
            nakagami_m: 2.0,
            accel_mps2: 1.0,
            speed_change_prob: 0.1,
            v_min_mps: 20.0,
            v_max_mps: 40.0,
            d_min_m: 50.0,
            d_max_m: 300.0,
            utility_factor: 10.0,
            pricing_factor: 1.0,
            max_beams: 3,
            max_gain_dbi: 20.0,
            max_attenuation_db: 26.0,
            beamwidth_3db_deg: 17.5,
            lane_separation_m: 4.0,
            mobility_update_interval_slots: 10,
            init_possession_prob: 0.3,
            random_initial_partition: false,
            switch_ceiling: 10_000,
            master_seed: 0,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn dbm_per_mhz_to_w_per_hz(dbm_per_mhz: f64) -> f64 {
    dbm_to_watts(dbm_per_mhz) / 1e6
}

impl SimConfig {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Thermal noise power over the whole channel, N0·W.
    pub fn noise_power_w(&self) -> f64 {
        self.noise_psd_w_per_hz * self.bandwidth_hz
    }

    pub fn max_gain_linear(&self) -> f64 {
        db_to_linear(self.max_gain_dbi)
    }

    pub fn sinr_threshold_db(&self) -> f64 {
        linear_to_db(self.sinr_threshold)
    }

    /// Number of epochs in a run; a trailing partial window counts as one.
    pub fn n_epochs(&self) -> usize {
        self.n_slots.div_ceil(self.mobility_update_interval_slots)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, message: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid {
                key,
                message: message.into(),
            })
        }
        let positive: [(&'static str, f64); 13] = [
            ("road_length_m", self.road_length_m),
            ("slot_duration_s", self.slot_duration_s),
            ("tx_power_w", self.tx_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("sinr_threshold", self.sinr_threshold),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("nakagami_m", self.nakagami_m),
            ("accel_mps2", self.accel_mps2),
            ("utility_factor", self.utility_factor),
            ("beamwidth_3db_deg", self.beamwidth_3db_deg),
            ("v_min_mps", self.v_min_mps),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(key, format!("must be a positive finite number, got {v}"));
            }
        }
        let non_negative: [(&'static str, f64); 5] = [
            ("si_cancellation", self.si_cancellation),
            ("pricing_factor", self.pricing_factor),
            ("max_attenuation_db", self.max_attenuation_db),
            ("lane_separation_m", self.lane_separation_m),
            ("d_min_m", self.d_min_m),
        ];
        for (key, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(key, format!("must be non-negative, got {v}"));
            }
        }
        if !self.max_gain_dbi.is_finite() {
            return bad("max_gain_dbi", "must be finite");
        }
        if !(self.speed_change_prob > 0.0 && self.speed_change_prob < 0.5) {
            return if self.speed_change_prob >= 0.5 {
                bad("speed_change_prob", "must be < 0.5")
            } else {
                bad("speed_change_prob", "must be > 0")
            };
        }
        if self.v_min_mps >= self.v_max_mps {
            return bad("v_min_mps", "must be < v_max_mps");
        }
        if self.d_min_m >= self.d_max_m {
            return bad("d_min_m", "must be < d_max_m");
        }
        let [lo, hi] = self.content_size_range_bits;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(
                "content_size_range_bits",
                format!("must satisfy 0 < min <= max, got [{lo}, {hi}]"),
            );
        }
        if !(0.0..=1.0).contains(&self.init_possession_prob) {
            return bad("init_possession_prob", "must lie in [0, 1]");
        }
        if self.n_slots == 0 {
            return bad("n_slots", "must be >= 1");
        }
        if self.n_obus == 0 {
            return bad("n_obus", "must be >= 1");
        }
        if self.n_contents < 2 {
            return bad("n_contents", "must be >= 2");
        }
        if self.max_beams == 0 {
            return bad("max_beams", "must be >= 1");
        }
        if self.mobility_update_interval_slots == 0 {
            return bad("mobility_update_interval_slots", "must be >= 1");
        }
        if self.switch_ceiling == 0 {
            return bad("switch_ceiling", "must be >= 1");
        }
        Ok(())
    }

    /// Serialize to the `key = value` document format using canonical
    /// (linear-unit) keys. Floats are written in shortest round-trip form.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for key in CANONICAL_KEYS {
            let value = self.get(key);
            writeln!(out, "{key} = {value}").unwrap();
        }
        out
    }

    fn get(&self, key: &str) -> String {
        match key {
            "road_length_m" => fmt_f(self.road_length_m),
            "n_slots" => self.n_slots.to_string(),
            "slot_duration_s" => fmt_f(self.slot_duration_s),
            "n_obus" => self.n_obus.to_string(),
            "n_contents" => self.n_contents.to_string(),
            "content_size_range_bits" => format!(
                "{}, {}",
                fmt_f(self.content_size_range_bits[0]),
                fmt_f(self.content_size_range_bits[1])
            ),
            "tx_power_w" => fmt_f(self.tx_power_w),
            "bandwidth_hz" => fmt_f(self.bandwidth_hz),
            "noise_psd_w_per_hz" => fmt_f(self.noise_psd_w_per_hz),
            "si_cancellation" => fmt_f(self.si_cancellation),
            "sinr_threshold" => fmt_f(self.sinr_threshold),
            "carrier_freq_hz" => fmt_f(self.carrier_freq_hz),
            "pathloss_exponent" => fmt_f(self.pathloss_exponent),
            "nakagami_m" => fmt_f(self.nakagami_m),
            "accel_mps2" => fmt_f(self.accel_mps2),
            "speed_change_prob" => fmt_f(self.speed_change_prob),
            "v_min_mps" => fmt_f(self.v_min_mps),
            "v_max_mps" => fmt_f(self.v_max_mps),
            "d_min_m" => fmt_f(self.d_min_m),
            "d_max_m" => fmt_f(self.d_max_m),
            "utility_factor" => fmt_f(self.utility_factor),
            "pricing_factor" => fmt_f(self.pricing_factor),
            "max_beams" => self.max_beams.to_string(),
            "max_gain_dbi" => fmt_f(self.max_gain_dbi),
            "max_attenuation_db" => fmt_f(self.max_attenuation_db),
            "beamwidth_3db_deg" => fmt_f(self.beamwidth_3db_deg),
            "lane_separation_m" => fmt_f(self.lane_separation_m),
            "mobility_update_interval_slots" => self.mobility_update_interval_slots.to_string(),
            "init_possession_prob" => fmt_f(self.init_possession_prob),
            "random_initial_partition" => self.random_initial_partition.to_string(),
            "switch_ceiling" => self.switch_ceiling.to_string(),
            "master_seed" => self.master_seed.to_string(),
            _ => unreachable!("not a canonical key: {key}"),
        }
    }
}

const CANONICAL_KEYS: [&str; 32] = [
    "road_length_m",
    "n_slots",
    "slot_duration_s",
    "n_obus",
    "n_contents",
    "content_size_range_bits",
    "tx_power_w",
    "bandwidth_hz",
    "noise_psd_w_per_hz",
    "si_cancellation",
    "sinr_threshold",
    "carrier_freq_hz",
    "pathloss_exponent",
    "nakagami_m",
    "accel_mps2",
    "speed_change_prob",
    "v_min_mps",
    "v_max_mps",
    "d_min_m",
    "d_max_m",
    "utility_factor",
    "pricing_factor",
    "max_beams",
    "max_gain_dbi",
    "max_attenuation_db",
    "beamwidth_3db_deg",
    "lane_separation_m",
    "mobility_update_interval_slots",
    "init_possession_prob",
    "random_initial_partition",
    "switch_ceiling",
    "master_seed",
];

fn fmt_f(x: f64) -> String {
    // `{:?}` is the shortest representation that parses back to the same bits.
    format!("{x:?}")
}

/// Parse a `key = value` document. Keys not present keep their defaults.
pub fn load_config(source: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut seen: Vec<&'static str> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if text.is_empty() {
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let target = field_for(key).ok_or_else(|| ConfigError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        if seen.contains(&target) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push(target);
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        apply(&mut cfg, key, value).ok_or_else(bad)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Maps a document key (canonical or alias) to the field it sets, so that a
/// canonical key and its alias cannot both be given.
fn field_for(key: &str) -> Option<&'static str> {
    let alias = match key {
        "tx_power_dbm" => "tx_power_w",
        "noise_psd_dbm_per_mhz" | "noise_psd_dbm_per_hz" => "noise_psd_w_per_hz",
        "si_cancellation_db" => "si_cancellation",
        "sinr_threshold_db" => "sinr_threshold",
        _ => key,
    };
    CANONICAL_KEYS.iter().copied().find(|k| *k == alias)
}

fn num<T: FromStr>(value: &str) -> Option<T> {
    value.parse().ok()
}

fn apply(cfg: &mut SimConfig, key: &str, value: &str) -> Option<()> {
    match key {
        "road_length_m" => cfg.road_length_m = num(value)?,
        "n_slots" => cfg.n_slots = num(value)?,
        "slot_duration_s" => cfg.slot_duration_s = num(value)?,
        "n_obus" => cfg.n_obus = num(value)?,
        "n_contents" => cfg.n_contents = num(value)?,
        "content_size_range_bits" => {
            let (lo, hi) = value.split_once(',')?;
            cfg.content_size_range_bits = [num(lo.trim())?, num(hi.trim())?];
        }
        "tx_power_w" => cfg.tx_power_w = num(value)?,
        "tx_power_dbm" => cfg.tx_power_w = dbm_to_watts(num(value)?),
        "bandwidth_hz" => cfg.bandwidth_hz = num(value)?,
        "noise_psd_w_per_hz" => cfg.noise_psd_w_per_hz = num(value)?,
        "noise_psd_dbm_per_hz" => cfg.noise_psd_w_per_hz = dbm_to_watts(num(value)?),
        "noise_psd_dbm_per_mhz" => cfg.noise_psd_w_per_hz = dbm_per_mhz_to_w_per_hz(num(value)?),
        "si_cancellation" => cfg.si_cancellation = num(value)?,
        "si_cancellation_db" => cfg.si_cancellation = db_to_linear(num(value)?),
        "sinr_threshold" => cfg.sinr_threshold = num(value)?,
        "sinr_threshold_db" => cfg.sinr_threshold = db_to_linear(num(value)?),
        "carrier_freq_hz" => cfg.carrier_freq_hz = num(value)?,
        "pathloss_exponent" => cfg.pathloss_exponent = num(value)?,
        "nakagami_m" => cfg.nakagami_m = num(value)?,
        "accel_mps2" => cfg.accel_mps2 = num(value)?,
        "speed_change_prob" => cfg.speed_change_prob = num(value)?,
        "v_min_mps" => cfg.v_min_mps = num(value)?,
        "v_max_mps" => cfg.v_max_mps = num(value)?,
        "d_min_m" => cfg.d_min_m = num(value)?,
        "d_max_m" => cfg.d_max_m = num(value)?,
        "utility_factor" => cfg.utility_factor = num(value)?,
        "pricing_factor" => cfg.pricing_factor = num(value)?,
        "max_beams" => cfg.max_beams = num(value)?,
        "max_gain_dbi" => cfg.max_gain_dbi = num(value)?,
        "max_attenuation_db" => cfg.max_attenuation_db = num(value)?,
        "beamwidth_3db_deg" => cfg.beamwidth_3db_deg = num(value)?,
        "lane_separation_m" => cfg.lane_separation_m = num(value)?,
        "mobility_update_interval_slots" => cfg.mobility_update_interval_slots = num(value)?,
        "init_possession_prob" => cfg.init_possession_prob = num(value)?,
        "random_initial_partition" => cfg.random_initial_partition = num(value)?,
        "switch_ceiling" => cfg.switch_ceiling = num(value)?,
        "master_seed" => cfg.master_seed = num(value)?,
        _ => return None,
    }
    Some(())
}
