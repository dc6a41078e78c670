//! Flat key=value config files with dotted keys, e.g. `welch.seg_len=256`.
//!
//! Every key can be overridden by a same-named command-line flag;
//! precedence is flags > file > defaults.

use std::collections::HashMap;
use std::path::Path;

use b2d_core::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)?;
        FileConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<FileConfig> {
        let mut values = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(i + 1, format!("expected key=value, got {line:?}"))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Typed lookup; a malformed value is a config error naming the key.
    pub fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::validation(format!("config key {key}: bad value {raw:?}"))
            }),
        }
    }
}

/// flag > file > default resolution for one setting.
pub fn resolve<T: Clone + std::str::FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(file.parse_key(key)?.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_precedence() {
        let cfg = FileConfig::parse("# comment\nwelch.seg_len=128\nband=alpha1\n").unwrap();
        assert_eq!(cfg.get("band"), Some("alpha1"));
        let v: usize = resolve(None, &cfg, "welch.seg_len", 256).unwrap();
        assert_eq!(v, 128);
        let v: usize = resolve(Some(64), &cfg, "welch.seg_len", 256).unwrap();
        assert_eq!(v, 64);
        let v: usize = resolve(None, &cfg, "hyper.batch", 30).unwrap();
        assert_eq!(v, 30);
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(FileConfig::parse("no_equals_here\n").is_err());
        let cfg = FileConfig::parse("welch.seg_len=abc\n").unwrap();
        assert!(cfg.parse_key::<usize>("welch.seg_len").is_err());
    }
}
