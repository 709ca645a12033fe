//! Flat `key = value` configuration files and flag/config/default
//! resolution.
//!
//! Keys are the long flag names without dashes (`lambda`, `out-dir`).
//! Blank lines and lines starting with `#` are skipped. Keys that a command
//! does not use are ignored, so one file can serve every subcommand.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::ExperimentError;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "CUMGAN_SEED";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Usage(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ExperimentError::Usage(format!(
                    "config line {}: empty key",
                    n + 1
                )));
            }
            if values.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(ExperimentError::Usage(format!(
                    "config line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ExperimentError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ExperimentError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e| {
                    ExperimentError::Usage(format!("config key `{key}` = `{v}`: {e}"))
                })
            })
            .transpose()
    }

    /// `flag`, else the config value, else `default`.
    pub fn resolve<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, ExperimentError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.resolve_opt(key, flag)?.unwrap_or(default))
    }

    pub fn resolve_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, ExperimentError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Flag, then config `seed`, then `env` (the value of [`SEED_ENV`]),
    /// then 0.
    pub fn resolve_seed(&self, flag: Option<u64>, env: Option<&str>) -> Result<u64, ExperimentError> {
        if let Some(s) = self.resolve_opt("seed", flag)? {
            return Ok(s);
        }
        match env {
            Some(v) => v.trim().parse().map_err(|e| {
                ExperimentError::Usage(format!("{SEED_ENV}=`{v}` is not a seed: {e}"))
            }),
            None => Ok(0),
        }
    }
}

/// Comma-separated values, usable both as a flag and a config value.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T> FromStr for List<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let items = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse().map_err(|e| format!("`{x}`: {e}")))
            .collect::<Result<Vec<T>, _>>()?;
        if items.is_empty() {
            return Err("empty list".into());
        }
        Ok(List(items))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let c = ConfigFile::parse("# sweep\nlambda = 0.1\n\nbetas= -1, -2 \n").unwrap();
        assert_eq!(c.get::<f64>("lambda").unwrap(), Some(0.1));
        assert_eq!(
            c.get::<List<f64>>("betas").unwrap(),
            Some(List(vec![-1.0, -2.0]))
        );
        assert_eq!(c.get::<f64>("missing").unwrap(), None);
        assert!(ConfigFile::parse("lambda 0.1").is_err());
        assert!(ConfigFile::parse("a=1\na=2").is_err());
        assert!(c.get::<u64>("lambda").is_err());
    }

    #[test]
    fn precedence_is_flag_config_default() {
        let c = ConfigFile::parse("steps = 20").unwrap();
        assert_eq!(c.resolve("steps", Some(5u64), 1).unwrap(), 5);
        assert_eq!(c.resolve("steps", None, 1u64).unwrap(), 20);
        assert_eq!(c.resolve("other", None, 1u64).unwrap(), 1);
    }

    #[test]
    fn seed_falls_back_to_environment() {
        let empty = ConfigFile::default();
        assert_eq!(empty.resolve_seed(None, None).unwrap(), 0);
        assert_eq!(empty.resolve_seed(None, Some("17")).unwrap(), 17);
        assert_eq!(empty.resolve_seed(Some(3), Some("17")).unwrap(), 3);
        let c = ConfigFile::parse("seed = 9").unwrap();
        assert_eq!(c.resolve_seed(None, Some("17")).unwrap(), 9);
        assert!(empty.resolve_seed(None, Some("x")).is_err());
    }
}
