//! Flat `key = value` config files. Command-line flags always win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;

use crate::CliError;

/// Every key a config file may set. Names match the long flags.
pub const KNOWN_KEYS: &[&str] = &[
    "scheme",
    "population",
    "p0",
    "pr",
    "degree",
    "slots",
    "iterations",
    "table",
    "mode",
    "seed",
    "tau-max",
    "trials",
    "target",
    "pr-grid",
    "p0-grid",
    "m-min",
    "m-max",
    "boundary",
    "rule",
    "runs",
    "epochs",
    "stop-at",
    "analysis",
    "out-dir",
    "workers",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    i + 1
                )));
            };
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        self.values.get(key).map(String::as_str)
    }

    /// `flag` if given, else the parsed config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {s:?}: {e}")))
            })
            .transpose()
    }

    pub fn pick_choice<T: ValueEnum>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| {
                T::from_str(s, true).map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing --{key} (flag or config key)")))
    }
}

/// A sweep grid: `log:lo:hi:n`, `lin:lo:hi:n` or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        match parts.as_slice() {
            [kind @ ("log" | "lin"), lo, hi, n] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let n: usize = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
                if n < 2 || !(lo < hi) || (*kind == "log" && lo <= 0.0) {
                    return Err(format!("bad grid {s:?}"));
                }
                Ok(Grid(if *kind == "log" {
                    crdsa::optimize::log_grid(lo, hi, n)
                } else {
                    crdsa::optimize::linear_grid(lo, hi, n)
                }))
            }
            [_] => s.split(',').map(num).collect::<Result<_, _>>().map(Grid),
            _ => Err(format!("bad grid {s:?}; use log:lo:hi:n, lin:lo:hi:n or a list")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let c = FileConfig::parse("# sweep\npopulation = 200\n\np0=0.9 # per frame\npr_grid = log:1e-3:1:4\n")
            .unwrap();
        assert_eq!(c.pick::<usize>(None, "population").unwrap(), Some(200));
        assert_eq!(c.pick(Some(300usize), "population").unwrap(), Some(300));
        assert_eq!(c.raw("pr-grid"), Some("log:1e-3:1:4"));
        assert_eq!(c.pick::<f64>(None, "pr").unwrap(), None);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in ["population 200", "colour = red", "p0 = 1\np0 = 2"] {
            assert!(matches!(FileConfig::parse(bad), Err(CliError::Usage(_))), "{bad}");
        }
        let c = FileConfig::parse("p0 = lots").unwrap();
        assert!(c.pick::<f64>(None, "p0").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!("0.1,0.5".parse::<Grid>().unwrap().0, vec![0.1, 0.5]);
        assert_eq!("lin:0:1:3".parse::<Grid>().unwrap().0, vec![0.0, 0.5, 1.0]);
        let g = "log:1e-2:1:3".parse::<Grid>().unwrap().0;
        assert!((g[1] - 0.1).abs() < 1e-12);
        for bad in ["log:0:1:5", "lin:1:0:5", "lin:0:1:1", "a:b", "x"] {
            assert!(bad.parse::<Grid>().is_err(), "{bad}");
        }
    }
}
