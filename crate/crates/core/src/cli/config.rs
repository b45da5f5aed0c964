//! Run configurations echoed into every artifact.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::knn::KsgParams;
use crate::mif::GridMode;
use crate::timeseries::WindowCount;

/// `--n-s`: a window count or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowsArg(pub WindowCount);

impl FromStr for WindowsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self(WindowCount::Auto));
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Self(WindowCount::Fixed(n))),
            _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
        }
    }
}

impl fmt::Display for WindowsArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            WindowCount::Auto => f.write_str("auto"),
            WindowCount::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for WindowsArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            WindowCount::Auto => s.serialize_str("auto"),
            WindowCount::Fixed(n) => s.serialize_u64(n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for WindowsArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("n_s must be positive")),
            Raw::Count(n) => Ok(Self(WindowCount::Fixed(n))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Aggregation requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Pick from the significance mask.
    #[default]
    Auto,
    Joint,
    Linear,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridArg {
    #[default]
    Half,
    Full,
}

impl From<GridArg> for GridMode {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Half => GridMode::Half,
            GridArg::Full => GridMode::Full,
        }
    }
}

/// Everything that determines an estimate. Output locations are not part
/// of it, so the same config rerun elsewhere reproduces the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub n_f: usize,
    pub n_s: WindowsArg,
    pub gap: usize,
    pub k: usize,
    pub n_p: usize,
    pub seed: u64,
    pub grid: GridArg,
    pub method: MethodChoice,
}

impl RunConfig {
    pub const DEFAULT_N_F: usize = 64;
    pub const DEFAULT_N_P: usize = 99;

    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            n_f: Self::DEFAULT_N_F,
            n_s: WindowsArg::default(),
            gap: 0,
            k: KsgParams::default().k,
            n_p: Self::DEFAULT_N_P,
            seed: 0,
            grid: GridArg::default(),
            method: MethodChoice::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::io(path, e))?;
        // Accept either a bare config or a report that embeds one.
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| super::UsageError(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(value)
            .map_err(|e| super::UsageError(format!("{}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let fail = |m: &str| Err(super::UsageError(m.to_string()).into());
        if self.n_f < 2 {
            return fail("n_f must be at least 2");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.n_p == 0 && self.method != MethodChoice::Linear {
            return fail("n_p must be at least 1 unless --method linear");
        }
        Ok(())
    }

    pub fn ksg(&self) -> KsgParams {
        KsgParams::default().with_k(self.k).with_seed(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_arg_round_trip() {
        for s in ["auto", "10000"] {
            let w: WindowsArg = s.parse().unwrap();
            assert_eq!(w.to_string(), s);
            let json = serde_json::to_string(&w).unwrap();
            assert_eq!(serde_json::from_str::<WindowsArg>(&json).unwrap(), w);
        }
        assert!("0".parse::<WindowsArg>().is_err());
        assert!("many".parse::<WindowsArg>().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut v = serde_json::to_value(RunConfig::new("a.csv")).unwrap();
        assert!(serde_json::from_value::<RunConfig>(v.clone()).is_ok());
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
