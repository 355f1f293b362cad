//! Mean first entry time into a high-backlog region.
//!
//! States `0..=boundary` are transient; any transition to a state above
//! `boundary` is absorbed. The vector of mean entry times solves
//! `t = e + P t`, i.e. `(I − P) t = e`, where `P` is the transition matrix
//! restricted to the transient states.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::{BacklogModel, ChannelConfig};
use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;
use crate::stability::{classify, Classification, StabilityReport};

#[derive(Debug, Clone, PartialEq)]
pub struct FetResult {
    /// Highest transient state.
    pub boundary_state: usize,
    /// Mean entry time from each transient state, epochs.
    pub times: Vec<f64>,
    /// Entry time from an empty backlog, epochs.
    pub headline: f64,
    pub epoch_slots: usize,
    /// `‖t − e − P t‖∞`.
    pub residual: f64,
}

impl FetResult {
    pub fn headline_slots(&self) -> f64 {
        self.headline * self.epoch_slots as f64
    }
}

/// Solves `(I − P) t = e` for a square substochastic `P` by LU with partial
/// pivoting. Returns the times and the residual.
pub fn solve_first_entry(p: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let n = p.len();
    if p.iter().any(|r| r.len() != n) {
        return Err(Error::config("transition block is not square"));
    }
    let a = DMatrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - p[i][j]);
    let e = DVector::from_element(n, 1.0);
    let t = a.clone().lu().solve(&e).ok_or_else(|| {
        Error::Singular(format!(
            "I − P is singular over {n} states; some state never leaves the transient set"
        ))
    })?;
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    let residual = (&a * &t - &e).amax();
    Ok((t.iter().copied().collect(), residual))
}

/// Mean time until the backlog first exceeds `boundary`, starting from every
/// state up to it. `boundary = 0` is treated as already reached.
pub fn solve_fet<M: BacklogModel + ?Sized>(model: &M, boundary: usize) -> Result<FetResult> {
    let m = model.population();
    if boundary >= m {
        return Err(Error::config(format!(
            "boundary {boundary} must lie below the population {m}"
        )));
    }
    if boundary == 0 {
        return Ok(FetResult {
            boundary_state: 0,
            times: vec![0.0],
            headline: 0.0,
            epoch_slots: model.epoch_slots(),
            residual: 0.0,
        });
    }
    let p = TransitionMatrix::build(model, boundary)?;
    let (times, residual) = solve_first_entry(&p.rows)?;
    Ok(FetResult {
        boundary_state: boundary,
        headline: times[0],
        times,
        epoch_slots: model.epoch_slots(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Absorb just above the unstable equilibrium `nc`.
    Critical,
    /// Absorb on reaching the saturation equilibrium `ns`.
    Saturation,
}

impl BoundaryRule {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryRule::Critical => "critical",
            BoundaryRule::Saturation => "saturation",
        }
    }
}

/// Highest transient state for `rule`, or `None` when the equilibrium the rule
/// needs does not exist.
///
/// The critical rule keeps every state up to `ceil(nc)` transient. The
/// saturation rule makes `ceil(ns)` itself the first absorbing state, so it
/// stays usable when `ns = M`.
pub fn boundary_for(report: &StabilityReport, rule: BoundaryRule) -> Option<usize> {
    match rule {
        BoundaryRule::Critical => report.critical_point().map(|p| p.backlog.ceil() as usize),
        BoundaryRule::Saturation => report
            .saturation_point()
            .map(|p| (p.backlog.ceil() as usize).saturating_sub(1)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetPoint {
    pub pr: f64,
    pub classification: Classification,
    /// Rule actually applied; overloaded slotted ALOHA falls back to saturation.
    pub rule: BoundaryRule,
    pub boundary: Option<usize>,
    pub result: Option<FetResult>,
}

impl FetPoint {
    pub fn headline_epochs(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.headline)
    }

    pub fn headline_slots(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.headline_slots())
    }
}

/// FET for one configuration under `rule`.
pub fn fet_point<M: BacklogModel + ?Sized>(
    model: &M,
    rule: BoundaryRule,
) -> Result<FetPoint> {
    let report = classify(model)?;
    let cfg = model.config();
    let rule = match (rule, report.classification, cfg.scheme) {
        (BoundaryRule::Critical, Classification::Overloaded, crate::Scheme::SlottedAloha) => {
            BoundaryRule::Saturation
        }
        _ => rule,
    };
    let boundary = boundary_for(&report, rule);
    let result = match boundary {
        Some(b) if b < cfg.population => Some(solve_fet(model, b)?),
        _ => None,
    };
    Ok(FetPoint {
        pr: cfg.pr,
        classification: report.classification,
        rule,
        boundary,
        result,
    })
}

/// FET from an empty backlog over a sweep of retransmission probabilities.
/// `build` turns a configuration into a model.
pub fn fet_curve<M, F>(
    template: ChannelConfig,
    prs: &[f64],
    rule: BoundaryRule,
    build: F,
) -> Result<Vec<FetPoint>>
where
    M: BacklogModel,
    F: Fn(ChannelConfig) -> Result<M> + Sync,
{
    prs.par_iter()
        .map(|&pr| {
            let model = build(template.with_pr(pr))?;
            fet_point(&model, rule)
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[FetPoint], mut w: W) -> Result<()> {
    writeln!(w, "pr,fet_epochs,fet_slots,boundary,rule,classification")?;
    for p in points {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.pr,
            fmt(p.headline_epochs()),
            fmt(p.headline_slots()),
            p.boundary.map_or(String::new(), |b| b.to_string()),
            p.rule.name(),
            p.classification
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sa_model::SaSlotModel;

    #[test]
    fn three_state_chain_matches_hand_algebra() {
        // Transient states 0, 1; state 2 absorbing.
        //   T0 = 1 + a T0 + b T1
        //   T1 = 1 + c T0 + d T1
        let (a, b, c, d) = (0.5, 0.3, 0.2, 0.4);
        let det = (1.0 - a) * (1.0 - d) - b * c;
        let t0 = ((1.0 - d) + b) / det;
        let t1 = ((1.0 - a) + c) / det;
        let (t, res) = solve_first_entry(&[vec![a, b], vec![c, d]]).unwrap();
        assert!((t[0] - t0).abs() < 1e-10);
        assert!((t[1] - t1).abs() < 1e-10);
        assert!(res < 1e-12);
    }

    #[test]
    fn immediate_absorption() {
        let (t, _) = solve_first_entry(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(t, vec![1.0; 3]);
    }

    #[test]
    fn closed_class_is_singular() {
        let r = solve_first_entry(&[vec![1.0, 0.0], vec![0.5, 0.0]]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn degenerate_and_invalid_boundaries() {
        let m = SaSlotModel::from_params(10, 0.05, 0.3).unwrap();
        let r = solve_fet(&m, 0).unwrap();
        assert_eq!(r.headline, 0.0);
        assert!(solve_fet(&m, 10).is_err());
    }

    #[test]
    fn times_at_least_one_epoch() {
        let m = SaSlotModel::from_params(30, 0.02, 0.4).unwrap();
        let r = solve_fet(&m, 12).unwrap();
        assert!(r.residual < 1e-8);
        assert!(r.times.iter().all(|&t| t >= 1.0));
    }

    #[test]
    fn pure_birth_chain() {
        // Everyone always transmits, so every step ends at backlog 2.
        let m = SaSlotModel::from_params(2, 1.0, 1.0).unwrap();
        let r = solve_fet(&m, 1).unwrap();
        assert_eq!(r.times, vec![1.0, 1.0]);
        // With pr = 0 a lone backlogged user is stuck forever.
        let stuck = SaSlotModel::from_params(2, 1.0, 0.0).unwrap();
        assert!(matches!(solve_fet(&stuck, 1), Err(Error::Singular(_))));
    }
}
