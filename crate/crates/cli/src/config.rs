//! `key=value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key can also be given as a command-line flag (`alpha_qd_db` is
//! `--alpha-qd-db`); flags are applied after the file with [`RunConfig::set`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use midlink::analytic::TimingParams;
use midlink::optics::{
    BsmVariant, ChannelGeometry, DetectorModel, EncodingVariant, LossBudget, MidpointVariant,
};
use midlink::protocol::SimMode;

use crate::error::{CliError, Location};

/// Output encoding for rate tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Distances `start, start + step, …` up to and including `stop`, in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Hard cap on the number of sweep points.
pub const MAX_SWEEP_POINTS: usize = 1_000_000;

impl SweepSpec {
    pub fn distances(&self) -> Vec<f64> {
        let span = (self.stop - self.start) / self.step;
        // Tolerate a stop that misses the grid by rounding.
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got `{s}`"));
        };
        let spec = SweepSpec {
            start: parse_f64(start)?,
            stop: parse_f64(stop)?,
            step: parse_f64(step)?,
        };
        if !(spec.start > 0.0) {
            return Err("start must be positive".into());
        }
        if !(spec.stop >= spec.start) {
            return Err("stop must not be below start".into());
        }
        if !(spec.step > 0.0) {
            return Err("step must be positive".into());
        }
        if (spec.stop - spec.start) / spec.step >= MAX_SWEEP_POINTS as f64 {
            return Err(format!("more than {MAX_SWEEP_POINTS} points"));
        }
        Ok(spec)
    }
}

/// Every setting a run can take.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha_qd_db: f64,
    pub alpha_bsm_db: f64,
    pub fiber_db_per_km: f64,
    pub source_penalty_db: f64,
    pub bsm_split_fraction: f64,
    pub length_km: f64,
    pub delay_us_per_km: f64,
    pub dark_count_rate_hz: f64,
    pub window_ns: f64,
    pub bsm_variant: BsmVariant,
    pub encoding: EncodingVariant,
    pub midpoint: MidpointVariant,
    pub tau_c_ns: f64,
    pub sweep: SweepSpec,
    pub cycles: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub trace_limit: usize,
    pub simulate: bool,
    pub format: OutputFormat,
    /// `None` writes to standard output.
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha_qd_db: 10.0,
            alpha_bsm_db: 5.0,
            fiber_db_per_km: 0.2,
            source_penalty_db: 0.0,
            bsm_split_fraction: 0.5,
            length_km: 50.0,
            delay_us_per_km: 5.0,
            dark_count_rate_hz: 100.0,
            window_ns: 10.0,
            bsm_variant: BsmVariant::SingletPlusTriplet,
            encoding: EncodingVariant::Polarization,
            midpoint: MidpointVariant::EntangledPairSource,
            tau_c_ns: 500.0,
            sweep: SweepSpec {
                start: 10.0,
                stop: 100.0,
                step: 5.0,
            },
            cycles: 10_000_000,
            seed: 0,
            mode: SimMode::Omniscient,
            trace_limit: 0,
            simulate: false,
            format: OutputFormat::Csv,
            output: None,
        }
    }
}

/// Config keys in file order, with flag help text.
pub const KEYS: &[(&str, &str)] = &[
    ("alpha_qd_db", "loss per quantum-dot photon path, dB"),
    ("alpha_bsm_db", "loss per BSM apparatus, dB"),
    ("fiber_db_per_km", "fiber attenuation, dB/km"),
    ("source_penalty_db", "extra loss at the midpoint source, dB"),
    ("bsm_split_fraction", "share of the BSM loss charged to the dot-photon arm"),
    ("length_km", "end-to-end link length for single-point commands, km"),
    ("delay_us_per_km", "signal delay, µs/km"),
    ("dark_count_rate_hz", "dark counts per second per detector"),
    ("window_ns", "coincidence filtering window, ns"),
    ("bsm_variant", "singlet_only | singlet_plus_triplet"),
    ("encoding", "polarization | time_bin_converted"),
    ("midpoint", "entangled_pair_source | two_single_photon_sources"),
    ("tau_c_ns", "protocol clock cycle, ns"),
    ("sweep", "distance sweep start:stop:step, km"),
    ("cycles", "simulated clock cycles"),
    ("seed", "random seed"),
    ("mode", "omniscient | literal"),
    ("trace_limit", "maximum simulation trace events kept"),
    ("simulate", "attach simulated rates to sweeps (true | false)"),
    ("format", "csv | json"),
    ("output", "output file; `-` for standard output"),
];

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("must be non-negative, got {v}"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err(format!("must be positive, got {v}"));
    }
    Ok(v)
}

fn parse_int<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

/// Lowercase with separators removed, so `SingletOnly` and `singlet-only` agree.
fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

fn choose<T: Copy>(s: &str, options: &[(&str, T)]) -> Result<T, String> {
    let wanted = normalize(s);
    options
        .iter()
        .find(|(name, _)| normalize(name) == wanted)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("`{s}` is not one of {}", names.join(", "))
        })
}

const BSM_NAMES: &[(&str, BsmVariant)] = &[
    ("singlet_only", BsmVariant::SingletOnly),
    ("singlet_plus_triplet", BsmVariant::SingletPlusTriplet),
];
const ENCODING_NAMES: &[(&str, EncodingVariant)] = &[
    ("polarization", EncodingVariant::Polarization),
    ("time_bin_converted", EncodingVariant::TimeBinConverted),
];
const MIDPOINT_NAMES: &[(&str, MidpointVariant)] = &[
    ("entangled_pair_source", MidpointVariant::EntangledPairSource),
    ("two_single_photon_sources", MidpointVariant::TwoSinglePhotonSources),
];
const MODE_NAMES: &[(&str, SimMode)] = &[
    ("omniscient", SimMode::Omniscient),
    ("literal", SimMode::Literal),
];
const FORMAT_NAMES: &[(&str, OutputFormat)] = &[("csv", OutputFormat::Csv), ("json", OutputFormat::Json)];

fn name_of<T: PartialEq + Copy>(value: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, v)| *v == value).map(|(n, _)| *n).unwrap_or("?")
}

impl RunConfig {
    /// Sets one key from its text value, checking only that key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "alpha_qd_db" => self.alpha_qd_db = non_negative(value)?,
            "alpha_bsm_db" => self.alpha_bsm_db = non_negative(value)?,
            "fiber_db_per_km" => self.fiber_db_per_km = non_negative(value)?,
            "source_penalty_db" => self.source_penalty_db = non_negative(value)?,
            "bsm_split_fraction" => {
                let v = parse_f64(value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("must lie in [0, 1], got {v}"));
                }
                self.bsm_split_fraction = v;
            }
            "length_km" => self.length_km = positive(value)?,
            "delay_us_per_km" => self.delay_us_per_km = positive(value)?,
            "dark_count_rate_hz" => self.dark_count_rate_hz = non_negative(value)?,
            "window_ns" => self.window_ns = non_negative(value)?,
            "bsm_variant" => self.bsm_variant = choose(value, BSM_NAMES)?,
            "encoding" => self.encoding = choose(value, ENCODING_NAMES)?,
            "midpoint" => self.midpoint = choose(value, MIDPOINT_NAMES)?,
            "tau_c_ns" => self.tau_c_ns = positive(value)?,
            "sweep" => self.sweep = value.parse()?,
            "cycles" => {
                let v: u64 = parse_int(value)?;
                if v == 0 {
                    return Err("must be at least 1".into());
                }
                self.cycles = v;
            }
            "seed" => self.seed = parse_int(value)?,
            "mode" => self.mode = choose(value, MODE_NAMES)?,
            "trace_limit" => self.trace_limit = parse_int(value)?,
            "simulate" => {
                self.simulate = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not true or false"))?
            }
            "format" => self.format = choose(value, FORMAT_NAMES)?,
            "output" => {
                self.output = match value {
                    "" | "-" => None,
                    path => Some(PathBuf::from(path)),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Text form of one key, in the syntax [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha_qd_db" => self.alpha_qd_db.to_string(),
            "alpha_bsm_db" => self.alpha_bsm_db.to_string(),
            "fiber_db_per_km" => self.fiber_db_per_km.to_string(),
            "source_penalty_db" => self.source_penalty_db.to_string(),
            "bsm_split_fraction" => self.bsm_split_fraction.to_string(),
            "length_km" => self.length_km.to_string(),
            "delay_us_per_km" => self.delay_us_per_km.to_string(),
            "dark_count_rate_hz" => self.dark_count_rate_hz.to_string(),
            "window_ns" => self.window_ns.to_string(),
            "bsm_variant" => name_of(self.bsm_variant, BSM_NAMES).into(),
            "encoding" => name_of(self.encoding, ENCODING_NAMES).into(),
            "midpoint" => name_of(self.midpoint, MIDPOINT_NAMES).into(),
            "tau_c_ns" => self.tau_c_ns.to_string(),
            "sweep" => self.sweep.to_string(),
            "cycles" => self.cycles.to_string(),
            "seed" => self.seed.to_string(),
            "mode" => name_of(self.mode, MODE_NAMES).into(),
            "trace_limit" => self.trace_limit.to_string(),
            "simulate" => self.simulate.to_string(),
            "format" => name_of(self.format, FORMAT_NAMES).into(),
            "output" => match &self.output {
                None => "-".into(),
                Some(path) => path.display().to_string(),
            },
            _ => return None,
        })
    }

    /// Checks that span several keys. The error names the key it is
    /// attributed to.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        DetectorModel::new(self.dark_count_rate_hz, self.window_ns)
            .map_err(|e| ("window_ns", e.to_string()))?;
        Ok(())
    }

    pub fn loss_budget(&self) -> LossBudget {
        LossBudget {
            alpha_qd: self.alpha_qd_db,
            alpha_bsm: self.alpha_bsm_db,
            fiber_db_per_km: self.fiber_db_per_km,
            source_penalty_db: self.source_penalty_db,
            bsm_split_fraction: self.bsm_split_fraction,
        }
    }

    pub fn geometry(&self, length_km: f64) -> midlink::Result<ChannelGeometry> {
        ChannelGeometry::with_delay(length_km, self.delay_us_per_km)
    }

    pub fn detector(&self) -> midlink::Result<DetectorModel> {
        DetectorModel::new(self.dark_count_rate_hz, self.window_ns)
    }

    pub fn timing(&self, geom: &ChannelGeometry) -> midlink::Result<TimingParams> {
        TimingParams::new(self.tau_c_ns, geom.tau_t_us())
    }

    /// Every key, one per line, in a form [`parse_config`] reads back unchanged.
    pub fn to_config_text(&self) -> String {
        let mut text = String::new();
        for (key, _) in KEYS {
            text.push_str(key);
            text.push('=');
            text.push_str(&self.get(key).expect("listed key"));
            text.push('\n');
        }
        text
    }
}

/// Reads a config file on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Config {
                location: Location::Line(line),
                key: content.to_string(),
                message: "expected key=value".into(),
            });
        };
        let key = key.trim();
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(CliError::Config {
                location: Location::Line(line),
                key: key.to_string(),
                message: format!("already set on line {first}"),
            });
        }
        config.set(key, value).map_err(|message| CliError::Config {
            location: Location::Line(line),
            key: key.to_string(),
            message,
        })?;
        seen.push((key.to_string(), line));
    }
    config.validate().map_err(|(key, message)| CliError::Config {
        location: seen
            .iter()
            .find(|(k, _)| k == key)
            .map_or(Location::Defaults, |&(_, l)| Location::Line(l)),
        key: key.to_string(),
        message,
    })?;
    Ok(config)
}
