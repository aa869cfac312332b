//! Shared configuration: defaults, then a `key=value` file, then
//! `RACLIB_*` environment variables; command-line flags are applied last by
//! the caller.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cache::{CachePolicy, DEFAULT_BUCKET_TTL, DEFAULT_BUCKET_WIDTH};
use crate::error::{Error, Result};
use crate::store::DEFAULT_RECORD_SIZE;

pub const ENV_PREFIX: &str = "RACLIB_";

const KEYS: &[&str] = &[
    "library_dir",
    "cache_root",
    "record_size",
    "port",
    "bucket_ttl_seconds",
    "bucket_width_seconds",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub library_dir: PathBuf,
    pub cache_root: PathBuf,
    pub record_size: u64,
    pub port: u16,
    pub bucket_ttl_seconds: u64,
    pub bucket_width_seconds: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            library_dir: PathBuf::from("library"),
            cache_root: PathBuf::from("cache"),
            record_size: DEFAULT_RECORD_SIZE,
            port: 8080,
            bucket_ttl_seconds: DEFAULT_BUCKET_TTL,
            bucket_width_seconds: DEFAULT_BUCKET_WIDTH,
        }
    }
}

impl Config {
    /// Defaults, overridden by `file` (if given) and then by the environment.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut config = Config::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            config.apply_file(&text)?;
        }
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
            if let Some(value) = lookup(&var) {
                self.set(key, value.trim())?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: {value:?} is not a valid number")))
        }
        match key {
            "library_dir" => self.library_dir = PathBuf::from(value),
            "cache_root" => self.cache_root = PathBuf::from(value),
            "record_size" => self.record_size = num(key, value)?,
            "port" => self.port = num(key, value)?,
            "bucket_ttl_seconds" => self.bucket_ttl_seconds = num(key, value)?,
            "bucket_width_seconds" => self.bucket_width_seconds = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_size == 0 {
            return Err(Error::Config("record_size must be at least 1".into()));
        }
        self.cache_policy().map(|_| ())
    }

    pub fn cache_policy(&self) -> Result<CachePolicy> {
        CachePolicy::new(self.bucket_width_seconds, self.bucket_ttl_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn file_then_env_precedence() {
        let mut c = Config::default();
        c.apply_file("# comment\nport = 9000\ncache_root=/tmp/c\n\nbucket_ttl_seconds=4000\n")
            .unwrap();
        let env: HashMap<&str, &str> = [("RACLIB_PORT", "9100"), ("RACLIB_LIBRARY_DIR", "/srv/lib")]
            .into_iter()
            .collect();
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.port, 9100);
        assert_eq!(c.cache_root, PathBuf::from("/tmp/c"));
        assert_eq!(c.library_dir, PathBuf::from("/srv/lib"));
        assert_eq!(c.bucket_ttl_seconds, 4000);
        assert_eq!(c.bucket_width_seconds, 1000);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Config::default();
        assert!(c.apply_file("port=abc").is_err());
        assert!(c.apply_file("colour=blue").is_err());
        assert!(c.apply_file("just words").is_err());
        c.bucket_ttl_seconds = 500;
        assert!(c.validate().is_err());
        let c = Config {
            record_size: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
