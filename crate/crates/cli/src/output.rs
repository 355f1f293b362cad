//! Output files and human-readable formatting.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// Rounds to 4 significant digits for console summaries.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    if digits > 0 {
        format!("{:.*}", digits as usize, x)
    } else {
        let unit = 10f64.powi(-digits);
        format!("{}", (x / unit).round() * unit)
    }
}

/// Key-value report for one command.
pub struct Report {
    command: &'static str,
    lines: Vec<u8>,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            lines: Vec::new(),
        }
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        writeln!(self.lines, "{key} = {value}").expect("write to memory");
    }

    pub fn opt(&mut self, key: &str, value: Option<impl Display>) {
        match value {
            Some(v) => self.kv(key, v),
            None => self.kv(key, "none"),
        }
    }

    /// Sink for the library's own report writers.
    pub fn sink(&mut self) -> &mut Vec<u8> {
        &mut self.lines
    }
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `<command>.report.txt`. The timestamp is the only
    /// non-deterministic field.
    pub fn report(&self, r: &Report) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{}.report.txt", r.command));
        let mut f = BufWriter::new(File::create(&path)?);
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        writeln!(f, "command = {}", r.command)?;
        writeln!(f, "generated_unix = {now}")?;
        f.write_all(&r.lines)?;
        f.flush()?;
        Ok(path)
    }

    /// Writes `<name>.csv` through `fill`.
    pub fn csv(
        &self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{name}.csv"));
        let mut f = BufWriter::new(File::create(&path)?);
        fill(&mut f)?;
        f.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(321.5183), "321.5");
        assert_eq!(sig4(0.0024301), "0.002430");
        assert_eq!(sig4(6809.046), "6809");
        assert_eq!(sig4(123456.0), "123500");
        assert_eq!(sig4(-1.23456), "-1.235");
        assert_eq!(sig4(0.0), "0");
    }
}
