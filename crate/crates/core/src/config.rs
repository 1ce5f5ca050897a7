//! Plain-text `key=value` configuration. Blank lines and lines starting
//! with `#` are ignored; later keys override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{LagomError, Result};
use crate::kernel::{builtin_kernel, AdmissibleFn, AdmissibleTriple, CompactCZKernel, COMPACT_1D};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl FromStr for Config {
    type Err = LagomError;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LagomError::Parse(format!("config line {}: expected key=value, got `{line}`", ln + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(LagomError::Parse(format!("config line {}: empty key", ln + 1)));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Config { entries })
    }
}

impl Config {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| LagomError::Parse(format!("{key} = {v}: {e}"))))
            .transpose()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// An admissible function written `family:gamma[:a]`, `family, gamma` or
/// `{family, gamma}`.
fn admissible(value: &str) -> Result<AdmissibleFn> {
    value.trim().trim_start_matches('{').trim_end_matches('}').parse()
}

/// The built-in kernel named by `kernel.name` (default `compact-1d`) with
/// `kernel.delta` and `kernel.L`, `kernel.S`, `kernel.D` overriding its
/// parameters.
pub fn kernel_from_config(cfg: &Config) -> Result<CompactCZKernel> {
    let mut k = builtin_kernel(cfg.get("kernel.name").unwrap_or(COMPACT_1D))?;
    if let Some(delta) = cfg.parsed::<f64>("kernel.delta")? {
        k = k.with_delta(delta)?;
    }
    let t = k.triple;
    let pick = |key: &str, current: AdmissibleFn| -> Result<AdmissibleFn> {
        cfg.get(key).map(admissible).unwrap_or(Ok(current))
    };
    let triple = AdmissibleTriple::new(pick("kernel.L", t.large)?, pick("kernel.S", t.small)?, pick("kernel.D", t.far)?)?;
    if triple != t {
        k = k.with_triple(triple)?;
    }
    Ok(k)
}
