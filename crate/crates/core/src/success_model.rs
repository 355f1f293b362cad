//! Empirical CRDSA success distribution `q(τ, υ)`.
//!
//! For each attempt count `τ` the table stores how many of `trials_per_tau`
//! simulated frames decoded exactly `υ` users. Counts are kept as integers so
//! rows sum to one exactly and the on-disk format round-trips losslessly.
//!
//! # File format
//!
//! ```text
//! # crdsa success table
//! format_version = 1
//! d = 2
//! num_slots = 100
//! max_iterations = 10
//! tau_max = 3
//! trials_per_tau = 20000
//! master_seed = 2011
//! 0: 0:20000
//! 1: 1:20000
//! 2: 0:4 2:19996
//! 3: 1:12 3:19988
//! ```
//!
//! Lines starting with `#` are comments. Each row line is `τ:` followed by
//! `υ:count` pairs with nonzero counts, in increasing `υ`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::sic_sim::{check_frame, FrameLayout, SicDecoder};

pub const FORMAT_VERSION: u32 = 1;

/// Default trial count per attempt level.
pub const DEFAULT_TRIALS_PER_TAU: u64 = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub degree: usize,
    pub num_slots: usize,
    pub max_iterations: usize,
    pub tau_max: usize,
    pub trials_per_tau: u64,
    pub master_seed: u64,
    counts: Vec<Vec<u64>>,
    rows: Vec<Row>,
    means: Vec<f64>,
}

/// Dense probabilities over the nonzero support `[lo, lo + probs.len())`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub lo: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputCurve {
    /// `(G, S)` pairs in packets per slot.
    pub points: Vec<(f64, f64)>,
}

impl ThroughputCurve {
    /// The point with the largest throughput.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 >= p.1 => Some(b),
                _ => Some(p),
            })
    }
}

/// Simulation parameters of a table build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSpec {
    pub degree: usize,
    pub num_slots: usize,
    pub max_iterations: usize,
    pub tau_max: usize,
    pub trials_per_tau: u64,
    pub master_seed: u64,
}

impl TableSpec {
    /// The reference configuration: two replicas, 100-slot frames, 10 SIC
    /// rounds, attempt counts up to 500.
    pub fn reference(master_seed: u64) -> Self {
        Self {
            degree: 2,
            num_slots: 100,
            max_iterations: 10,
            tau_max: 500,
            trials_per_tau: DEFAULT_TRIALS_PER_TAU,
            master_seed,
        }
    }
}

/// Simulates `trials_per_tau` frames for every `τ ≤ tau_max`.
///
/// Trial `(τ, i)` draws from its own stream derived from
/// `(master_seed, τ, i)`, so the result is independent of the rayon pool
/// size or scheduling.
pub fn estimate_success_table(spec: TableSpec) -> Result<SuccessTable> {
    check_frame(spec.degree, spec.num_slots)?;
    if spec.tau_max < 1 {
        return Err(Error::config("tau_max must be at least 1"));
    }
    if spec.trials_per_tau < 1 {
        return Err(Error::config("trials_per_tau must be at least 1"));
    }
    if spec.max_iterations < 1 {
        return Err(Error::config("max_iterations must be at least 1"));
    }

    let counts: Vec<Vec<u64>> = (0..=spec.tau_max)
        .into_par_iter()
        .map(|tau| simulate_row(&spec, tau))
        .collect();

    SuccessTable::from_counts(spec, counts)
}

fn simulate_row(spec: &TableSpec, tau: usize) -> Vec<u64> {
    let mut hist = vec![0u64; tau + 1];
    let mut layout = FrameLayout::empty(spec.num_slots, spec.degree);
    let mut decoder = SicDecoder::new(spec.num_slots);
    for trial in 0..spec.trials_per_tau {
        let mut r = rng::stream(spec.master_seed, tau as u64, trial);
        layout.refill(tau, &mut r);
        let out = decoder.decode(&layout, spec.max_iterations);
        hist[out.decoded_count] += 1;
    }
    hist
}

impl SuccessTable {
    /// Builds a table from raw counts, validating every invariant.
    pub fn from_counts(spec: TableSpec, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != spec.tau_max + 1 {
            return Err(Error::config(format!(
                "expected {} rows, got {}",
                spec.tau_max + 1,
                counts.len()
            )));
        }
        for (tau, row) in counts.iter().enumerate() {
            if row.len() > tau + 1 && row[tau + 1..].iter().any(|&c| c > 0) {
                return Err(Error::InvalidRow {
                    tau,
                    reason: "more successes than attempts".into(),
                });
            }
            let total: u64 = row.iter().sum();
            if total != spec.trials_per_tau {
                return Err(Error::InvalidRow {
                    tau,
                    reason: format!(
                        "counts sum to {total}, expected {} (row sums to {:.6})",
                        spec.trials_per_tau,
                        total as f64 / spec.trials_per_tau as f64
                    ),
                });
            }
        }
        if spec.num_slots >= spec.degree {
            if counts[0].first() != Some(&spec.trials_per_tau) {
                return Err(Error::InvalidRow {
                    tau: 0,
                    reason: "an empty frame must decode nobody".into(),
                });
            }
            if counts[1].get(1) != Some(&spec.trials_per_tau) {
                return Err(Error::InvalidRow {
                    tau: 1,
                    reason: "a lone user must always decode".into(),
                });
            }
        }

        let counts: Vec<Vec<u64>> = counts
            .into_iter()
            .enumerate()
            .map(|(tau, mut row)| {
                row.resize(tau + 1, 0);
                row
            })
            .collect();
        let n = spec.trials_per_tau as f64;
        let rows = counts
            .iter()
            .map(|row| {
                let lo = row.iter().position(|&c| c > 0).unwrap_or(0);
                let hi = row.iter().rposition(|&c| c > 0).unwrap_or(0);
                Row {
                    lo,
                    probs: row[lo..=hi].iter().map(|&c| c as f64 / n).collect(),
                }
            })
            .collect();
        let means = counts
            .iter()
            .map(|row| {
                let s: u128 = row
                    .iter()
                    .enumerate()
                    .map(|(u, &c)| u as u128 * c as u128)
                    .sum();
                s as f64 / n
            })
            .collect();

        Ok(Self {
            degree: spec.degree,
            num_slots: spec.num_slots,
            max_iterations: spec.max_iterations,
            tau_max: spec.tau_max,
            trials_per_tau: spec.trials_per_tau,
            master_seed: spec.master_seed,
            counts,
            rows,
            means,
        })
    }

    pub fn spec(&self) -> TableSpec {
        TableSpec {
            degree: self.degree,
            num_slots: self.num_slots,
            max_iterations: self.max_iterations,
            tau_max: self.tau_max,
            trials_per_tau: self.trials_per_tau,
            master_seed: self.master_seed,
        }
    }

    /// Raw decode counts for attempt level `tau`.
    pub fn counts(&self, tau: usize) -> Result<&[u64]> {
        self.check(tau)?;
        Ok(&self.counts[tau])
    }

    fn check(&self, tau: usize) -> Result<()> {
        if tau > self.tau_max {
            Err(Error::OutOfRange {
                tau,
                tau_max: self.tau_max,
            })
        } else {
            Ok(())
        }
    }

    /// `q(τ, υ)`: probability that exactly `upsilon` of `tau` attempting users
    /// are decoded.
    pub fn query_q(&self, tau: usize, upsilon: usize) -> Result<f64> {
        self.check(tau)?;
        let row = &self.rows[tau];
        Ok(upsilon
            .checked_sub(row.lo)
            .and_then(|i| row.probs.get(i))
            .copied()
            .unwrap_or(0.0))
    }

    /// `E[υ | τ]`.
    pub fn mean_decoded(&self, tau: usize) -> Result<f64> {
        self.check(tau)?;
        Ok(self.means[tau])
    }

    pub(crate) fn row(&self, tau: usize) -> &Row {
        &self.rows[tau]
    }

    pub(crate) fn means(&self) -> &[f64] {
        &self.means
    }

    /// Average per-user success probability with `attempts` users in the
    /// frame; `P̄s(0) = 1`, linear interpolation between integers.
    pub fn avg_success_prob(&self, attempts: f64) -> Result<f64> {
        if !(attempts >= 0.0) {
            return Err(Error::config(format!("attempt count {attempts} is negative")));
        }
        if attempts > self.tau_max as f64 {
            return Err(Error::OutOfRange {
                tau: attempts.ceil() as usize,
                tau_max: self.tau_max,
            });
        }
        let at = |x: usize| {
            if x == 0 {
                1.0
            } else {
                self.means[x] / x as f64
            }
        };
        let lo = attempts.floor() as usize;
        let frac = attempts - lo as f64;
        if frac == 0.0 {
            Ok(at(lo))
        } else {
            Ok(at(lo) * (1.0 - frac) + at(lo + 1) * frac)
        }
    }

    /// `(G, S)` with `G = τ/Ns` and `S = E[υ|τ]/Ns` for every row.
    pub fn throughput_curve(&self) -> ThroughputCurve {
        let ns = self.num_slots as f64;
        ThroughputCurve {
            points: self
                .means
                .iter()
                .enumerate()
                .map(|(tau, &m)| (tau as f64 / ns, m / ns))
                .collect(),
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::new();
        out.push_str("# crdsa success table\n");
        let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(out, "d = {}", self.degree);
        let _ = writeln!(out, "num_slots = {}", self.num_slots);
        let _ = writeln!(out, "max_iterations = {}", self.max_iterations);
        let _ = writeln!(out, "tau_max = {}", self.tau_max);
        let _ = writeln!(out, "trials_per_tau = {}", self.trials_per_tau);
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        for (tau, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{tau}:");
            for (u, &c) in row.iter().enumerate().filter(|(_, &c)| c > 0) {
                let _ = write!(out, " {u}:{c}");
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut meta: Vec<(String, u64)> = Vec::new();
        let mut rows: Vec<Vec<u64>> = Vec::new();

        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::Malformed {
                line: line_no,
                reason,
            };
            if let Some((k, v)) = line.split_once('=') {
                if !rows.is_empty() {
                    return Err(bad("metadata after the first row".into()));
                }
                let k = k.trim();
                let v: u64 = v
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("value of `{k}` is not an integer")))?;
                if meta.iter().any(|(m, _)| m == k) {
                    return Err(bad(format!("duplicate key `{k}`")));
                }
                meta.push((k.to_string(), v));
                continue;
            }
            let (tau, rest) = line
                .split_once(':')
                .ok_or_else(|| bad("expected `key = value` or `tau: u:count ...`".into()))?;
            let tau: usize = tau
                .trim()
                .parse()
                .map_err(|_| bad(format!("row label `{tau}` is not an integer")))?;
            if tau != rows.len() {
                return Err(bad(format!("row {tau} out of order, expected {}", rows.len())));
            }
            let mut row = vec![0u64; tau + 1];
            for pair in rest.split_whitespace() {
                let (u, c) = pair
                    .split_once(':')
                    .ok_or_else(|| bad(format!("entry `{pair}` is not `u:count`")))?;
                let u: usize = u.parse().map_err(|_| bad(format!("bad index in `{pair}`")))?;
                let c: u64 = c.parse().map_err(|_| bad(format!("bad count in `{pair}`")))?;
                if u > tau {
                    return Err(Error::InvalidRow {
                        tau,
                        reason: format!("{u} successes out of {tau} attempts"),
                    });
                }
                row[u] += c;
            }
            rows.push(row);
        }

        let get = |key: &str| -> Result<u64> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::Malformed {
                    line: 0,
                    reason: format!("missing metadata `{key}`"),
                })
        };
        let version = get("format_version")?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Malformed {
                line: 0,
                reason: format!("unsupported format_version {version}"),
            });
        }
        let spec = TableSpec {
            degree: get("d")? as usize,
            num_slots: get("num_slots")? as usize,
            max_iterations: get("max_iterations")? as usize,
            tau_max: get("tau_max")? as usize,
            trials_per_tau: get("trials_per_tau")?,
            master_seed: get("master_seed")?,
        };
        if rows.len() != spec.tau_max + 1 {
            return Err(Error::Malformed {
                line: 0,
                reason: format!(
                    "found {} rows, metadata promises {}",
                    rows.len(),
                    spec.tau_max + 1
                ),
            });
        }
        Self::from_counts(spec, rows)
    }

    pub fn save_to_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}
