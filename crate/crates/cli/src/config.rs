//! Declarative experiment configuration (TOML) and command-line parsing
//! helpers. Command-line switches override config values, which override
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flagflow::FlagSpec;
use serde::Deserialize;

/// A point given either as text (`"1/2,1/2,0"`) or as a list of numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PointValue {
    Text(String),
    Values(Vec<f64>),
}

impl PointValue {
    pub fn resolve(&self, len: usize) -> Result<Vec<f64>> {
        match self {
            PointValue::Text(s) => parse_point(s, len),
            PointValue::Values(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            PointValue::Values(v) => bail!("expected {len} finite coordinates, got {v:?}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub flag: Option<String>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub t_max: Option<f64>,
    pub t_limit: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub grid: Option<usize>,
    pub newton_tol: Option<f64>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub blocks: Option<PointValue>,
    pub point: Option<PointValue>,
    pub x0: Option<PointValue>,
    pub h1: Option<PointValue>,
    pub h2: Option<PointValue>,
    pub out: Option<PathBuf>,
    pub verdict_out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("t_max", self.t_max),
            ("t_limit", self.t_limit),
            ("newton_tol", self.newton_tol),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    bail!("config field {name} must be positive, got {v}");
                }
            }
        }
        for (name, v) in [("grid", self.grid), ("count", self.count)] {
            if v == Some(0) {
                bail!("config field {name} must be positive");
            }
        }
        if let Some(f) = &self.flag {
            parse_flag(f)?;
        }
        Ok(())
    }
}

/// First of command line, config, default.
pub fn pick<T>(cli: Option<T>, cfg: Option<T>, default: T) -> T {
    cli.or(cfg).unwrap_or(default)
}

pub fn parse_flag(s: &str) -> Result<FlagSpec> {
    s.parse::<FlagSpec>().map_err(|e| anyhow::anyhow!("invalid flag {s:?}: {e}"))
}

/// A decimal (`0.25`, `1e-3`) or an exact rational (`-3/4`).
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().with_context(|| format!("bad numerator in {s:?}"))?;
        let den: i64 = den.trim().parse().with_context(|| format!("bad denominator in {s:?}"))?;
        if den == 0 {
            bail!("zero denominator in {s:?}");
        }
        const EXACT: i64 = 1 << 53;
        if num.abs() > EXACT || den.abs() > EXACT {
            bail!("rational {s:?} exceeds 2^53 and cannot be converted exactly");
        }
        num as f64 / den as f64
    } else {
        s.parse::<f64>().with_context(|| format!("bad number {s:?}"))?
    };
    if !value.is_finite() {
        bail!("non-finite number {s:?}");
    }
    Ok(value)
}

/// Comma-separated coordinates with exactly `len` entries.
pub fn parse_point(s: &str, len: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != len {
        bail!("expected {len} comma-separated coordinates, got {s:?}");
    }
    parts.into_iter().map(parse_real).collect()
}

pub fn parse_times(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() || v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || v.windows(2).any(|w| w[1] < w[0]) {
        bail!("times must be a non-empty, sorted list of nonnegative numbers");
    }
    Ok(v.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_and_rationals() {
        assert_eq!(parse_real("1/3").unwrap(), 1.0 / 3.0);
        assert_eq!(parse_real(" -3/4 ").unwrap(), -0.75);
        assert_eq!(parse_real("2.5e-1").unwrap(), 0.25);
        for bad in ["1/0", "x", "1/2/3", "nan", "inf", ""] {
            assert!(parse_real(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn points() {
        assert_eq!(parse_point("1/2,1/2,0", 3).unwrap(), vec![0.5, 0.5, 0.0]);
        assert!(parse_point("1,2", 3).is_err());
        assert!(parse_point("1,2,", 3).is_err());
        assert_eq!(PointValue::Values(vec![1.0, 2.0]).resolve(2).unwrap(), vec![1.0, 2.0]);
        assert!(PointValue::Values(vec![1.0]).resolve(2).is_err());
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg: ExperimentConfig = toml::from_str("flag = \"A:2,1,1\"\nrtol = 1e-9\nx0 = \"1/3,1/3,1/3\"\nh1 = [0.5, -0.5]").unwrap();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.x0.unwrap().resolve(3).unwrap(), vec![1.0 / 3.0; 3]);
        let bad: ExperimentConfig = toml::from_str("rtol = -1.0").unwrap();
        assert!(bad.validate().is_err());
        let bad: ExperimentConfig = toml::from_str("flag = \"B:1\"").unwrap();
        assert!(bad.validate().is_err());
        assert!(toml::from_str::<ExperimentConfig>("unknown = 1").is_err());
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(Some(1), Some(2), 3), 1);
    }
}
