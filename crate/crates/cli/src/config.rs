//! Layered `key = value` configuration: built-in defaults, then a config
//! file, then `AMBC_<KEY>` environment variables, then command-line flags.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ambc::codec::DiffState;
use ambc::harness::ExperimentConfig;
use ambc::model::check_tag_antennas;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "AMBC_";

pub struct KeySpec {
    pub name: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec {
        name: "M",
        help: "Tag antennas, one of 1, 2, 4, 8",
    },
    KeySpec {
        name: "Q",
        help: "Reader antennas",
    },
    KeySpec {
        name: "N",
        help: "averaging length when no gamma_r target applies",
    },
    KeySpec {
        name: "gamma_d_db",
        help: "direct-link SNR in dB",
    },
    KeySpec {
        name: "delta_gamma_db",
        help: "relative SNR (direct over backscatter power) in dB",
    },
    KeySpec {
        name: "alpha_db",
        help: "Tag hardware loss in dB",
    },
    KeySpec {
        name: "gamma_r_db",
        help: "fixed reference receive SNR in dB, or none",
    },
    KeySpec {
        name: "sweep",
        help: "swept variable: gamma_r_db, gamma_d_db or delta_gamma_db",
    },
    KeySpec {
        name: "grid",
        help: "comma-separated sweep values",
    },
    KeySpec {
        name: "detector",
        help: "ml_exact, ml_approx, linear, min_distance or differential",
    },
    KeySpec {
        name: "fidelity",
        help: "observation model: symbol_level, chi_square or gaussian",
    },
    KeySpec {
        name: "bias_mode",
        help: "perfect, estimated (pilot of N symbols) or estimated:<N_bias>",
    },
    KeySpec {
        name: "frame_blocks",
        help: "blocks per channel draw, or auto (1 coherent, 16 differential)",
    },
    KeySpec {
        name: "seed",
        help: "master seed",
    },
    KeySpec {
        name: "max_trials",
        help: "trial cap per point",
    },
    KeySpec {
        name: "target_bit_errors",
        help: "stop a point after this many bit errors",
    },
    KeySpec {
        name: "kappa_samples",
        help: "Monte Carlo samples for kappa",
    },
    KeySpec {
        name: "theory_channels",
        help: "channel draws per theoretical BER point",
    },
    KeySpec {
        name: "workers",
        help: "worker threads",
    },
    KeySpec {
        name: "diff_init",
        help: "initial differential symbol pair, e.g. 1,1",
    },
];

fn canonical(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|k| k.name)
        .find(|k| k.eq_ignore_ascii_case(key))
}

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File(PathBuf),
    Env(String),
    Flag,
    Preset(String),
    Merged,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File(p) => write!(f, "{}", p.display()),
            Origin::Env(v) => write!(f, "environment variable {v}"),
            Origin::Flag => f.write_str("command line"),
            Origin::Preset(p) => write!(f, "preset {p}"),
            Origin::Merged => f.write_str("configuration"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub origin: Origin,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(line) = self.line {
            write!(f, ", line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ", key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl ConfigError {
    pub fn new(origin: Origin, message: impl Into<String>) -> Self {
        Self {
            origin,
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("invalid value `{value}`: {e}"))
}

fn parse_grid(value: &str) -> Result<Vec<f64>, String> {
    let grid = value
        .split(',')
        .map(|v| parse::<f64>(v.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(format!("grid values must be finite: `{value}`"));
    }
    Ok(grid)
}

fn parse_diff_init(value: &str) -> Result<DiffState, String> {
    let parts: Vec<_> = value.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected two symbols like `1,-1`, got `{value}`"));
    };
    DiffState::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
}

/// Sets one key on `cfg`. `key` must already be canonical.
pub fn apply_value(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    let value = value.trim();
    match key {
        "M" => {
            let m = parse(value)?;
            check_tag_antennas(m).map_err(|e| e.to_string())?;
            cfg.m = m;
        }
        "Q" => cfg.q = parse(value)?,
        "N" => cfg.n = parse(value)?,
        "gamma_d_db" => cfg.gamma_d_db = parse(value)?,
        "delta_gamma_db" => cfg.delta_gamma_db = parse(value)?,
        "alpha_db" => cfg.alpha_db = parse(value)?,
        "gamma_r_db" => {
            cfg.gamma_r_db = if value.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(parse(value)?)
            }
        }
        "sweep" => cfg.sweep = parse(value)?,
        "grid" => cfg.grid = parse_grid(value)?,
        "detector" => cfg.detector = parse(value)?,
        "fidelity" => cfg.fidelity = parse(value)?,
        "bias_mode" => cfg.bias_mode = parse(value)?,
        "frame_blocks" => {
            cfg.frame_blocks = if value.eq_ignore_ascii_case("auto") {
                None
            } else {
                Some(parse(value)?)
            }
        }
        "seed" => cfg.master_seed = parse(value)?,
        "max_trials" => cfg.max_trials = parse(value)?,
        "target_bit_errors" => cfg.target_bit_errors = parse(value)?,
        "kappa_samples" => cfg.kappa_samples = parse(value)?,
        "theory_channels" => cfg.theory_channels = parse(value)?,
        "workers" => cfg.workers = parse(value)?,
        "diff_init" => cfg.diff_init = parse_diff_init(value)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

/// Current value of a key in config-file syntax.
pub fn format_value(cfg: &ExperimentConfig, key: &str) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    match key {
        "M" => cfg.m.to_string(),
        "Q" => cfg.q.to_string(),
        "N" => cfg.n.to_string(),
        "gamma_d_db" => cfg.gamma_d_db.to_string(),
        "delta_gamma_db" => cfg.delta_gamma_db.to_string(),
        "alpha_db" => cfg.alpha_db.to_string(),
        "gamma_r_db" => cfg.gamma_r_db.map_or("none".into(), |v| v.to_string()),
        "sweep" => cfg.sweep.to_string(),
        "grid" => join(&cfg.grid),
        "detector" => cfg.detector.to_string(),
        "fidelity" => cfg.fidelity.to_string(),
        "bias_mode" => cfg.bias_mode.to_string(),
        "frame_blocks" => cfg.frame_blocks.map_or("auto".into(), |v| v.to_string()),
        "seed" => cfg.master_seed.to_string(),
        "max_trials" => cfg.max_trials.to_string(),
        "target_bit_errors" => cfg.target_bit_errors.to_string(),
        "kappa_samples" => cfg.kappa_samples.to_string(),
        "theory_channels" => cfg.theory_channels.to_string(),
        "workers" => cfg.workers.to_string(),
        "diff_init" => {
            let [a, b] = cfg.diff_init.symbols();
            format!("{a},{b}")
        }
        other => panic!("unknown key `{other}`"),
    }
}

/// Text listing every key with its default, for `--help`.
pub fn keys_help() -> String {
    let defaults = ExperimentConfig::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out =
        String::from("Config keys (file `key = value`, env AMBC_<KEY>, or --set key=value):\n");
    for k in KEYS {
        out.push_str(&format!(
            "  {:width$}  {} [default: {}]\n",
            k.name,
            k.help,
            format_value(&defaults, k.name)
        ));
    }
    out.push_str("\nPrecedence: defaults < --config file < AMBC_<KEY> environment < flags.\n");
    out.push_str("Exit status: 0 success, 2 configuration error, 3 runtime failure.\n");
    out
}

/// A config under construction plus the keys the user set explicitly.
#[derive(Debug, Clone, Default)]
pub struct Layered {
    pub config: ExperimentConfig,
    pub explicit: BTreeSet<&'static str>,
}

impl Layered {
    pub fn set(
        &mut self,
        key: &str,
        value: &str,
        origin: Origin,
        line: Option<usize>,
    ) -> Result<(), ConfigError> {
        let err = |key: Option<String>, message: String| ConfigError {
            origin: origin.clone(),
            line,
            key,
            message,
        };
        let name =
            canonical(key).ok_or_else(|| err(Some(key.to_string()), "unknown key".into()))?;
        apply_value(&mut self.config, name, value).map_err(|m| err(Some(name.to_string()), m))?;
        self.explicit.insert(name);
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Applies `key = value` lines. Blank lines and lines starting with `#`
    /// or `;` are skipped; a single `[experiment]` section header is allowed.
    pub fn apply_text(&mut self, text: &str, origin: Origin) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty()
                || line.starts_with('#')
                || line.starts_with(';')
                || line == "[experiment]"
            {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    origin,
                    line: Some(idx + 1),
                    key: None,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(key.trim(), value, origin.clone(), Some(idx + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new(
                Origin::File(path.to_path_buf()),
                format!("cannot read: {e}"),
            )
        })?;
        self.apply_text(&text, Origin::File(path.to_path_buf()))
    }

    /// Applies every `AMBC_<KEY>` variable; unknown names are rejected.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        vars: I,
    ) -> Result<(), ConfigError> {
        let mut vars: Vec<_> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (name, value) in vars {
            let key = &name[ENV_PREFIX.len()..];
            self.set(key, &value, Origin::Env(name.clone()), None)?;
        }
        Ok(())
    }

    /// Validates the merged config.
    pub fn finish(&self, origin: Origin) -> Result<ExperimentConfig, ConfigError> {
        self.config.validate().map_err(|e| {
            let key = match &e {
                ambc::Error::UnsupportedAntennaCount(_) => Some("M".to_string()),
                ambc::Error::UnsupportedDifferential(_) => Some("detector".to_string()),
                ambc::Error::InvalidParameter { name, .. } => Some(name.to_string()),
                _ => None,
            };
            ConfigError {
                origin,
                line: None,
                key,
                message: e.to_string(),
            }
        })?;
        Ok(self.config.clone())
    }
}
