//! Equilibria, stability classification and Little's-law delay.
//!
//! Equilibria are the zero crossings of the drift over integer backlog
//! states, located by linear interpolation. A crossing from positive to
//! negative drift is locally stable; negative to positive is unstable. The
//! chain boundaries act as equilibria too: a profile that starts out negative
//! rests at backlog 0, and one that ends positive is pushed to backlog `M`.

use std::fmt;
use std::io::Write;

use crate::channel::{BacklogModel, ChannelConfig};
use crate::error::{Error, Result};
use crate::markov::DriftProfile;

/// Flat-drift threshold for tangency detection, users per epoch.
pub const EPS_DRIFT: f64 = 1e-3;

/// A single equilibrium at or above this fraction of `M` is the overload
/// point rather than a useful operating point.
pub const OVERLOAD_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalStability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub backlog: f64,
    pub local_stability: LocalStability,
    /// Packets per slot.
    pub throughput_at_point: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Stable,
    Instable,
    Overloaded,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Stable => "stable",
            Classification::Instable => "instable",
            Classification::Overloaded => "overloaded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub classification: Classification,
    /// `[n0]` for stable/overloaded channels, `[n0, nc, ns]` for instable ones.
    pub points: Vec<EquilibriumPoint>,
    /// Set when a single crossing was reclassified as instable because the
    /// drift comes within [`EPS_DRIFT`] of zero further up.
    pub grazing: bool,
    pub profile: DriftProfile,
}

impl StabilityReport {
    /// Desired operating point `n0`.
    pub fn operating_point(&self) -> &EquilibriumPoint {
        &self.points[0]
    }

    /// Critical point `nc` of an instable channel.
    pub fn critical_point(&self) -> Option<&EquilibriumPoint> {
        match self.classification {
            Classification::Instable if self.points.len() == 3 => Some(&self.points[1]),
            _ => None,
        }
    }

    /// Undesired saturation point `ns`: the top equilibrium of an instable
    /// channel, or the single equilibrium of an overloaded one.
    pub fn saturation_point(&self) -> Option<&EquilibriumPoint> {
        match self.classification {
            Classification::Instable => self.points.get(2),
            Classification::Overloaded => self.points.first(),
            Classification::Stable => None,
        }
    }

    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "classification = {}", self.classification)?;
        writeln!(w, "grazing = {}", self.grazing)?;
        writeln!(w, "equilibria = {}", self.points.len())?;
        let names = match self.points.len() {
            3 => ["n0", "nc", "ns"].as_slice(),
            _ if self.classification == Classification::Overloaded => ["ns"].as_slice(),
            _ => ["n0"].as_slice(),
        };
        for (name, p) in names.iter().zip(&self.points) {
            writeln!(w, "{name}.backlog = {}", p.backlog)?;
            writeln!(
                w,
                "{name}.stability = {}",
                match p.local_stability {
                    LocalStability::Stable => "stable",
                    LocalStability::Unstable => "unstable",
                }
            )?;
            writeln!(w, "{name}.throughput = {}", p.throughput_at_point)?;
        }
        Ok(())
    }
}

/// Zero crossings of a drift profile, ordered by backlog.
pub fn find_equilibria(profile: &DriftProfile) -> Result<Vec<EquilibriumPoint>> {
    let d = &profile.drift;
    if d.is_empty() {
        return Err(Error::config("empty drift profile"));
    }
    let last = d.len() - 1;
    let point = |backlog: f64, local_stability| EquilibriumPoint {
        backlog,
        local_stability,
        throughput_at_point: profile.throughput_at(backlog),
    };

    let mut points = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for (x, &v) in d.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        match prev {
            None if v < 0.0 => {
                // The profile opens flat or negative: the chain rests at the
                // first state where it is (numerically) at rest.
                let at = d.iter().position(|v| v.abs() < EPS_DRIFT).unwrap_or(0).min(x);
                points.push(point(at as f64, LocalStability::Stable));
            }
            Some((px, pv)) if pv.signum() != v.signum() => {
                let root = px as f64 + (x - px) as f64 * pv / (pv - v);
                let kind = if pv > 0.0 {
                    LocalStability::Stable
                } else {
                    LocalStability::Unstable
                };
                points.push(point(root, kind));
            }
            _ => {}
        }
        prev = Some((x, v));
    }
    match prev {
        // Still pushing upward at the top: everyone ends up backlogged.
        Some((_, v)) if v > 0.0 => points.push(point(last as f64, LocalStability::Stable)),
        // All zero.
        None => points.push(point(0.0, LocalStability::Stable)),
        _ => {}
    }
    Ok(points)
}

/// Classifies a drift profile.
pub fn classify_profile(profile: DriftProfile) -> Result<StabilityReport> {
    let mut points = find_equilibria(&profile)?;
    let m = profile.population() as f64;

    let (classification, grazing) = if points.len() >= 3 {
        // Noise can split a crossing; keep the outermost structure.
        let n0 = points[0];
        let nc = *points
            .iter()
            .find(|p| p.local_stability == LocalStability::Unstable)
            .expect("alternating crossings");
        let ns = *points.last().expect("nonempty");
        points = vec![n0, nc, ns];
        (Classification::Instable, false)
    } else if points[0].backlog >= OVERLOAD_FRACTION * m {
        (Classification::Overloaded, false)
    } else if grazes(&profile.drift, points[0].backlog) {
        (Classification::Instable, true)
    } else {
        (Classification::Stable, false)
    };

    Ok(StabilityReport {
        classification,
        points,
        grazing,
        profile,
    })
}

/// True when the drift above `root` has an interior local maximum within
/// [`EPS_DRIFT`] of zero: the drift curve nearly touches the axis.
fn grazes(drift: &[f64], root: f64) -> bool {
    let start = root.floor() as usize + 1;
    let last = drift.len() - 1;
    (start.max(1)..last).any(|x| {
        let v = drift[x];
        v > -EPS_DRIFT && v >= drift[x - 1] && v >= drift[x + 1] && v < 0.0
    })
}

/// Profiles `model` and classifies it.
pub fn classify<M: BacklogModel + ?Sized>(model: &M) -> Result<StabilityReport> {
    classify_profile(DriftProfile::compute(model))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayReport {
    /// Backlog at the operating point, users.
    pub n0: f64,
    /// Throughput at the operating point, packets per slot.
    pub s0: f64,
    pub delay_slots: f64,
    /// Only for frame-based schemes.
    pub delay_frames: Option<f64>,
    /// Shortest possible service time, one epoch, in slots.
    pub min_service_slots: usize,
}

impl DelayReport {
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n0 = {}", self.n0)?;
        writeln!(w, "s0 = {}", self.s0)?;
        writeln!(w, "delay_slots = {}", self.delay_slots)?;
        if let Some(f) = self.delay_frames {
            writeln!(w, "delay_frames = {f}")?;
        }
        writeln!(w, "min_service_slots = {}", self.min_service_slots)?;
        Ok(())
    }
}

/// Little's-law delay `n0 / S0` at the operating point of a stable channel.
pub fn delay_from_report(report: &StabilityReport, config: &ChannelConfig) -> Result<DelayReport> {
    if report.classification != Classification::Stable {
        return Err(Error::NotApplicable(report.classification));
    }
    let op = report.operating_point();
    let (n0, s0) = (op.backlog, op.throughput_at_point);
    let delay_slots = if n0 == 0.0 { 0.0 } else { n0 / s0 };
    let epoch = config.epoch_slots();
    Ok(DelayReport {
        n0,
        s0,
        delay_slots,
        delay_frames: (epoch > 1).then(|| delay_slots / epoch as f64),
        min_service_slots: epoch,
    })
}

pub fn expected_delay<M: BacklogModel + ?Sized>(model: &M) -> Result<DelayReport> {
    let report = classify(model)?;
    delay_from_report(&report, model.config())
}
