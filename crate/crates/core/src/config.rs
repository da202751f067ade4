//! Line-oriented run configuration.
//!
//! ```text
//! # comments start with '#'
//! clearance_m = 10e-6
//! beta_deg = 5
//! sweep_clearances_m = 0, 0.05e-6, 10e-6, 50e-6
//! ```
//!
//! Missing keys keep their defaults. Values are SI except `beta_deg`.

use crate::model::{ParamError, State, SystemParams};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

pub const DEFAULT_SAMPLE_EVERY: usize = 10;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub initial: State,
    pub sample_every: usize,
    pub output_dir: PathBuf,
    pub clearance_sweep: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            initial: State::at_rest(),
            sample_every: DEFAULT_SAMPLE_EVERY,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            clearance_sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` appears more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: {source}")]
    OutOfRange {
        line: usize,
        #[source]
        source: ParamError,
    },
    #[error("{0}")]
    Invalid(#[from] ParamError),
}

const KEYS: &[&str] = &[
    "j1",
    "j2x",
    "j2y",
    "j2z",
    "j3",
    "ks",
    "cs",
    "r1_m",
    "clearance_m",
    "beta_deg",
    "arm_length_m",
    "eps_n",
    "eps_t",
    "mu",
    "omega_rad_s",
    "t0_nm",
    "dt_s",
    "t_final_s",
    "sample_every",
    "output_dir",
    "sweep_clearances_m",
];

fn param_key(field: &str) -> &'static str {
    match field {
        "r1" => "r1_m",
        "clearance" => "clearance_m",
        "beta" => "beta_deg",
        "arm_length" => "arm_length_m",
        "omega" => "omega_rad_s",
        "torque_amplitude" => "t0_nm",
        "dt" => "dt_s",
        "t_final" => "t_final_s",
        other => KEYS.iter().find(|k| **k == other).copied().unwrap_or("?"),
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let invalid = |reason: &str| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    };
    let v: f64 = value.parse().map_err(|_| invalid("not a number"))?;
    if !v.is_finite() {
        return Err(invalid("must be finite"));
    }
    Ok(v)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<&'static str, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: raw.trim().to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if value.is_empty() && key != "sweep_clearances_m" {
            return Err(ConfigError::Malformed {
                line,
                text: raw.trim().to_string(),
            });
        }
        if seen.insert(key, line).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }

        let p = &mut cfg.params;
        match key {
            "sample_every" => {
                let n: usize = value.parse().map_err(|_| ConfigError::InvalidValue {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: "expected a positive integer".to_string(),
                })?;
                if n == 0 {
                    return Err(ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                        reason: "must be at least 1".to_string(),
                    });
                }
                cfg.sample_every = n;
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "sweep_clearances_m" => {
                let mut list = Vec::new();
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let c = parse_f64(line, key, item)?;
                    if c < 0.0 {
                        return Err(ConfigError::InvalidValue {
                            line,
                            key: key.to_string(),
                            value: item.to_string(),
                            reason: "clearances must be >= 0".to_string(),
                        });
                    }
                    list.push(c);
                }
                cfg.clearance_sweep = (!list.is_empty()).then_some(list);
            }
            _ => {
                let v = parse_f64(line, key, value)?;
                let slot = match key {
                    "j1" => &mut p.j1,
                    "j2x" => &mut p.j2x,
                    "j2y" => &mut p.j2y,
                    "j2z" => &mut p.j2z,
                    "j3" => &mut p.j3,
                    "ks" => &mut p.ks,
                    "cs" => &mut p.cs,
                    "r1_m" => &mut p.r1,
                    "clearance_m" => &mut p.clearance,
                    "beta_deg" => &mut p.beta,
                    "arm_length_m" => &mut p.arm_length,
                    "eps_n" => &mut p.eps_n,
                    "eps_t" => &mut p.eps_t,
                    "mu" => &mut p.mu,
                    "omega_rad_s" => &mut p.omega,
                    "t0_nm" => &mut p.torque_amplitude,
                    "dt_s" => &mut p.dt,
                    "t_final_s" => &mut p.t_final,
                    _ => unreachable!("key list and match arms agree"),
                };
                *slot = if key == "beta_deg" { v.to_radians() } else { v };
            }
        }
    }

    if let Err(source) = cfg.params.validate() {
        return Err(match seen.get(param_key(source.name)) {
            Some(&line) => ConfigError::OutOfRange { line, source },
            None => ConfigError::Invalid(source),
        });
    }
    Ok(cfg)
}

/// Degrees value whose conversion back to radians reproduces `beta` exactly,
/// when one exists within a few ulps of the naive conversion.
fn degrees_for(beta: f64) -> f64 {
    let d = beta.to_degrees();
    let mut candidates = [d; 9];
    let (mut up, mut down) = (d, d);
    for i in 0..4 {
        up = f64::from_bits(up.to_bits().wrapping_add(1));
        down = f64::from_bits(down.to_bits().wrapping_sub(1));
        candidates[1 + 2 * i] = up;
        candidates[2 + 2 * i] = down;
    }
    candidates
        .into_iter()
        .find(|c| c.to_radians() == beta)
        .unwrap_or(d)
}

/// Renders every key, so the output parses back to the same configuration.
pub fn render_config(cfg: &RunConfig) -> String {
    let p = &cfg.params;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    for (k, v) in [
        ("j1", p.j1),
        ("j2x", p.j2x),
        ("j2y", p.j2y),
        ("j2z", p.j2z),
        ("j3", p.j3),
        ("ks", p.ks),
        ("cs", p.cs),
        ("r1_m", p.r1),
        ("clearance_m", p.clearance),
        ("beta_deg", degrees_for(p.beta)),
        ("arm_length_m", p.arm_length),
        ("eps_n", p.eps_n),
        ("eps_t", p.eps_t),
        ("mu", p.mu),
        ("omega_rad_s", p.omega),
        ("t0_nm", p.torque_amplitude),
        ("dt_s", p.dt),
        ("t_final_s", p.t_final),
    ] {
        put(k, format!("{v:?}"));
    }
    put("sample_every", cfg.sample_every.to_string());
    put("output_dir", cfg.output_dir.display().to_string());
    if let Some(list) = &cfg.clearance_sweep {
        let items: Vec<String> = list.iter().map(|c| format!("{c:?}")).collect();
        put("sweep_clearances_m", items.join(", "));
    }
    out
}
