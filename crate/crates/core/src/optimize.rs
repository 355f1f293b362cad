//! Delay-constrained searches over the retransmission probability, the
//! population size and the traffic generation probability.
//!
//! The delay surface comes from a Monte Carlo success table, so there are no
//! gradients to work with. Everything here is direct search: a grid pass
//! restricted to stable configurations, then golden-section refinement or
//! bisection.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::channel::{Channel, ChannelConfig, Scheme, ThroughputMode};
use crate::error::{Error, Result};
use crate::stability::{classify, delay_from_report};
use crate::success_model::SuccessTable;

/// Relative bracket width at which golden-section refinement stops.
pub const REFINE_REL_WIDTH: f64 = 1e-3;

/// `n` log-spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// 60 log-spaced retransmission probabilities over `[1e-4, 1]`.
pub fn default_pr_grid() -> Vec<f64> {
    log_grid(1e-4, 1.0, 60)
}

/// 200 traffic generation probabilities: `[0, 1]` per frame for CRDSA,
/// `[0, 1/M]` per slot for slotted ALOHA.
pub fn default_p0_grid(scheme: Scheme, population: usize) -> Vec<f64> {
    match scheme {
        Scheme::Crdsa { .. } => linear_grid(0.0, 1.0, 200),
        Scheme::SlottedAloha => linear_grid(0.0, 1.0 / population.max(1) as f64, 200),
    }
}

/// A channel family plus everything needed to evaluate its delay.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub template: ChannelConfig,
    pub table: Option<&'a SuccessTable>,
    pub mode: ThroughputMode,
}

impl<'a> Scenario<'a> {
    pub fn new(template: ChannelConfig, table: Option<&'a SuccessTable>, mode: ThroughputMode) -> Self {
        Self {
            template,
            table,
            mode,
        }
    }

    pub fn model(&self, config: ChannelConfig) -> Result<Channel<'a>> {
        Channel::new(config, self.table, self.mode)
    }

    /// Little's-law delay in slots, or `None` when `config` is not stable.
    pub fn delay_at(&self, config: ChannelConfig) -> Result<Option<f64>> {
        let model = self.model(config)?;
        let report = classify(&model)?;
        match delay_from_report(&report, &config) {
            Ok(d) => Ok(Some(d.delay_slots)),
            Err(Error::NotApplicable(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn delay_or_inf(&self, config: ChannelConfig) -> Result<f64> {
        Ok(self.delay_at(config)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult {
    pub feasible: bool,
    pub pr: Option<f64>,
    pub population: Option<usize>,
    pub p0: Option<f64>,
    /// Achieved delay, slots.
    pub delay_slots: Option<f64>,
    /// Delay constraint, slots.
    pub target_slots: Option<f64>,
}

impl OptimizationResult {
    fn infeasible(target_slots: Option<f64>) -> Self {
        Self {
            feasible: false,
            pr: None,
            population: None,
            p0: None,
            delay_slots: None,
            target_slots,
        }
    }

    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "feasible = {}", self.feasible)?;
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| v.to_string());
        writeln!(w, "pr = {}", opt(self.pr))?;
        if let Some(m) = self.population {
            writeln!(w, "population = {m}")?;
        }
        if let Some(p0) = self.p0 {
            writeln!(w, "p0 = {p0}")?;
        }
        writeln!(w, "delay_slots = {}", opt(self.delay_slots))?;
        if let Some(t) = self.target_slots {
            writeln!(w, "target_slots = {t}")?;
        }
        Ok(())
    }
}

fn check_grid(grid: &[f64], name: &str, allow_zero: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config(format!("{name} grid is empty")));
    }
    let lo_ok = |p: f64| if allow_zero { p >= 0.0 } else { p > 0.0 };
    if let Some(p) = grid.iter().find(|&&p| !(lo_ok(p) && p <= 1.0)) {
        return Err(Error::config(format!("{name} grid value {p} is out of range")));
    }
    Ok(())
}

/// Keeps the better of two `(pr, delay)` candidates, preferring the larger
/// `pr` on a tie.
fn better(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    if b.1 < a.1 || (b.1 == a.1 && b.0 > a.0) {
        b
    } else {
        a
    }
}

/// Golden-section search for the smallest delay over `pr ∈ [lo, hi]`, in log
/// `pr`. Returns the best point evaluated.
fn golden_section(
    scenario: &Scenario<'_>,
    config: ChannelConfig,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let f = |ln_pr: f64| -> Result<(f64, f64)> {
        let pr = ln_pr.exp().min(1.0);
        Ok((pr, scenario.delay_or_inf(config.with_pr(pr))?))
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut best = better(fc, fd);
    while b.exp() - a.exp() > REFINE_REL_WIDTH * ((a + b) / 2.0).exp() {
        // On a tie keep the upper bracket.
        if fc.1 < fd.1 {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            best = better(best, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            best = better(best, fd);
        }
    }
    Ok(best)
}

/// Minimum-delay retransmission probability for the scenario's template.
///
/// Unstable grid points are discarded. The best grid point is then refined
/// between its grid neighbours.
pub fn optimize_pr(scenario: &Scenario<'_>, pr_grid: &[f64]) -> Result<OptimizationResult> {
    check_grid(pr_grid, "pr", false)?;
    let config = scenario.template;
    let delays: Vec<Option<f64>> = pr_grid
        .par_iter()
        .map(|&pr| scenario.delay_at(config.with_pr(pr)))
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (i, d) in delays.iter().enumerate() {
        if let Some(d) = *d {
            // Later grid points win ties.
            if best.is_none_or(|(j, b)| d < b || (d == b && pr_grid[i] > pr_grid[j])) {
                best = Some((i, d));
            }
        }
    }
    let Some((i, grid_delay)) = best else {
        return Ok(OptimizationResult::infeasible(None));
    };

    let mut sorted: Vec<f64> = pr_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.partition_point(|&p| p < pr_grid[i]);
    let lo = sorted[k.saturating_sub(1)];
    let hi = sorted[(k + 1).min(sorted.len() - 1)];
    let (pr, delay) = if grid_delay > 0.0 && hi > lo {
        better((pr_grid[i], grid_delay), golden_section(scenario, config, lo, hi)?)
    } else {
        (pr_grid[i], grid_delay)
    };

    Ok(OptimizationResult {
        feasible: true,
        pr: Some(pr),
        population: Some(config.population),
        p0: Some(config.p0),
        delay_slots: Some(delay),
        target_slots: None,
    })
}

/// Largest index `i` with `feasible(i)` over `0..n`, assuming feasibility is a
/// prefix. The prefix shape is checked on a coarse pass first; if the check
/// fails every index is evaluated.
fn largest_feasible<T, F>(n: usize, eval: F) -> Result<Option<(usize, T)>>
where
    T: Send,
    F: Fn(usize) -> Result<Option<T>> + Sync,
{
    if n == 0 {
        return Ok(None);
    }
    const COARSE: usize = 9;
    let mut probes: Vec<usize> = (0..COARSE).map(|k| k * (n - 1) / (COARSE - 1)).collect();
    probes.dedup();
    let coarse: Vec<Option<T>> = probes.par_iter().map(|&i| eval(i)).collect::<Result<_>>()?;
    let flags: Vec<bool> = coarse.iter().map(Option::is_some).collect();
    let monotone = flags.windows(2).all(|w| w[0] || !w[1]);

    if !monotone {
        let all: Vec<Option<T>> = (0..n).into_par_iter().map(&eval).collect::<Result<_>>()?;
        return Ok(all
            .into_iter()
            .enumerate()
            .rev()
            .find_map(|(i, v)| v.map(|v| (i, v))));
    }

    let Some(last_ok) = flags.iter().rposition(|&f| f) else {
        return Ok(None);
    };
    let mut found = (probes[last_ok], coarse.into_iter().nth(last_ok).flatten().expect("feasible"));
    if last_ok + 1 == probes.len() {
        return Ok(Some(found));
    }
    let (mut lo, mut hi) = (probes[last_ok], probes[last_ok + 1]);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match eval(mid)? {
            Some(v) => {
                lo = mid;
                found = (mid, v);
            }
            None => hi = mid,
        }
    }
    Ok(Some(found))
}

fn within(target: f64, r: OptimizationResult) -> Option<OptimizationResult> {
    match r.delay_slots {
        Some(d) if r.feasible && d <= target => Some(r),
        _ => None,
    }
}

/// Largest population in `range` whose minimum delay over `pr` meets
/// `target_slots`.
pub fn max_population(
    scenario: &Scenario<'_>,
    target_slots: f64,
    range: RangeInclusive<usize>,
    pr_grid: &[f64],
) -> Result<OptimizationResult> {
    let (start, end) = range.into_inner();
    if start == 0 || end < start {
        return Err(Error::config(format!("empty population range {start}..={end}")));
    }
    check_grid(pr_grid, "pr", false)?;
    let eval = |i: usize| -> Result<Option<OptimizationResult>> {
        let s = Scenario {
            template: scenario.template.with_population(start + i),
            ..*scenario
        };
        Ok(within(target_slots, optimize_pr(&s, pr_grid)?))
    };
    Ok(match largest_feasible(end - start + 1, eval)? {
        Some((_, r)) => OptimizationResult {
            target_slots: Some(target_slots),
            ..r
        },
        None => OptimizationResult::infeasible(Some(target_slots)),
    })
}

/// Largest `p0` on `p0_grid` whose minimum delay over `pr` meets
/// `target_slots`.
pub fn max_traffic(
    scenario: &Scenario<'_>,
    target_slots: f64,
    p0_grid: &[f64],
    pr_grid: &[f64],
) -> Result<OptimizationResult> {
    check_grid(p0_grid, "p0", true)?;
    check_grid(pr_grid, "pr", false)?;
    let mut p0s = p0_grid.to_vec();
    p0s.sort_by(f64::total_cmp);
    p0s.dedup();
    let eval = |i: usize| -> Result<Option<OptimizationResult>> {
        let s = Scenario {
            template: scenario.template.with_p0(p0s[i]),
            ..*scenario
        };
        Ok(within(target_slots, optimize_pr(&s, pr_grid)?))
    };
    Ok(match largest_feasible(p0s.len(), eval)? {
        Some((_, r)) => OptimizationResult {
            target_slots: Some(target_slots),
            ..r
        },
        None => OptimizationResult::infeasible(Some(target_slots)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocusSweep {
    Population,
    TrafficProbability,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusPoint {
    pub target_slots: f64,
    pub swept_value: f64,
    pub pr: f64,
}

/// Bisection iterations on a bracketed delay crossing, in log `pr`.
const LOCUS_BISECTIONS: usize = 40;

/// For each swept value, the retransmission probabilities where the delay
/// equals `target_slots`: at most two branches, the lowest and the highest
/// crossing on the grid.
pub fn delay_locus(
    scenario: &Scenario<'_>,
    target_slots: f64,
    sweep: LocusSweep,
    values: &[f64],
    pr_grid: &[f64],
) -> Result<Vec<LocusPoint>> {
    check_grid(pr_grid, "pr", false)?;
    let mut prs = pr_grid.to_vec();
    prs.sort_by(f64::total_cmp);
    let per_value: Vec<Vec<LocusPoint>> = values
        .par_iter()
        .map(|&v| {
            let template = match sweep {
                LocusSweep::Population => scenario.template.with_population(v.round() as usize),
                LocusSweep::TrafficProbability => scenario.template.with_p0(v),
            };
            let config_at = |pr: f64| template.with_pr(pr);
            let delays: Vec<Option<f64>> = prs
                .iter()
                .map(|&pr| scenario.delay_at(config_at(pr)))
                .collect::<Result<_>>()?;
            let mut crossings = Vec::new();
            for i in 1..prs.len() {
                let (Some(d0), Some(d1)) = (delays[i - 1], delays[i]) else {
                    continue;
                };
                if (d0 - target_slots).signum() == (d1 - target_slots).signum() {
                    continue;
                }
                let (mut a, mut b) = (prs[i - 1].ln(), prs[i].ln());
                let below_at_a = d0 < target_slots;
                for _ in 0..LOCUS_BISECTIONS {
                    let mid = 0.5 * (a + b);
                    match scenario.delay_at(config_at(mid.exp()))? {
                        Some(d) if (d < target_slots) == below_at_a => a = mid,
                        Some(_) => b = mid,
                        // Stability lost inside the bracket; stop here.
                        None => break,
                    }
                }
                crossings.push(LocusPoint {
                    target_slots,
                    swept_value: v,
                    pr: (0.5 * (a + b)).exp(),
                });
            }
            if crossings.len() > 2 {
                let last = *crossings.last().expect("nonempty");
                crossings.truncate(1);
                crossings.push(last);
            }
            Ok(crossings)
        })
        .collect::<Result<_>>()?;
    Ok(per_value.into_iter().flatten().collect())
}

pub fn write_locus_csv<W: Write>(points: &[LocusPoint], mut w: W) -> Result<()> {
    writeln!(w, "target_delay,swept_value,pr")?;
    for p in points {
        writeln!(w, "{},{},{}", p.target_slots, p.swept_value, p.pr)?;
    }
    Ok(())
}
