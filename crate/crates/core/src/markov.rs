//! CRDSA backlog Markov chain.
//!
//! With `x` users backlogged, `φ ~ Bin(M − x, p0)` fresh users and
//! `ρ ~ Bin(x, pr)` backlogged users transmit in a frame, and `υ` of the
//! `φ + ρ` attempts succeed with probability `q(φ + ρ, υ)`. The next backlog is
//! `x' = x + φ − υ`.
//!
//! Binomial factors are truncated at [`TAIL_CUTOFF`](crate::binomial::TAIL_CUTOFF);
//! [`CrdsaChain::truncation_bound`] reports the worst discarded mass.

use std::io::Write;

use rayon::prelude::*;

use crate::binomial::{choose, BinomialPmf};
use crate::channel::{BacklogModel, ChannelConfig, Scheme, ThroughputMode};
use crate::error::{Error, Result};
use crate::success_model::SuccessTable;

#[derive(Debug, Clone)]
pub struct CrdsaChain<'a> {
    config: ChannelConfig,
    table: &'a SuccessTable,
    mode: ThroughputMode,
}

impl<'a> CrdsaChain<'a> {
    pub fn new(config: ChannelConfig, table: &'a SuccessTable, mode: ThroughputMode) -> Result<Self> {
        config.validate()?;
        let Scheme::Crdsa {
            degree,
            num_slots,
            max_iterations,
        } = config.scheme
        else {
            return Err(Error::config("CRDSA chain built from a non-CRDSA configuration"));
        };
        if (degree, num_slots, max_iterations)
            != (table.degree, table.num_slots, table.max_iterations)
        {
            return Err(Error::config(format!(
                "success table was built for d={}, Ns={}, Imax={} but the channel uses \
                 d={degree}, Ns={num_slots}, Imax={max_iterations}",
                table.degree, table.num_slots, table.max_iterations
            )));
        }
        if table.tau_max < config.population {
            return Err(Error::OutOfRange {
                tau: config.population,
                tau_max: table.tau_max,
            });
        }
        Ok(Self {
            config,
            table,
            mode,
        })
    }

    pub fn table(&self) -> &'a SuccessTable {
        self.table
    }

    pub fn with_mode(&self, mode: ThroughputMode) -> Self {
        Self { mode, ..self.clone() }
    }

    fn num_slots(&self) -> f64 {
        self.config.epoch_slots() as f64
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x > self.config.population {
            Err(Error::config(format!(
                "backlog {x} exceeds population {}",
                self.config.population
            )))
        } else {
            Ok(())
        }
    }

    fn attempt_pmfs(&self, x: usize) -> (BinomialPmf, BinomialPmf) {
        let m = self.config.population;
        (
            BinomialPmf::new(m - x, self.config.p0),
            BinomialPmf::new(x, self.config.pr),
        )
    }

    /// Joint probability of `φ` fresh attempts, `ρ` retransmissions and `υ`
    /// successes given backlog `x`. Zero outside the support.
    pub fn joint_pmf(&self, phi: usize, rho: usize, upsilon: usize, x: usize) -> Result<f64> {
        self.check_state(x)?;
        let m = self.config.population;
        if phi > m - x || rho > x || upsilon > phi + rho {
            return Ok(0.0);
        }
        let (p0, pr) = (self.config.p0, self.config.pr);
        let fresh = choose(m - x, phi) * p0.powi(phi as i32) * (1.0 - p0).powi((m - x - phi) as i32);
        let retx = choose(x, rho) * pr.powi(rho as i32) * (1.0 - pr).powi((x - rho) as i32);
        Ok(fresh * retx * self.table.query_q(phi + rho, upsilon)?)
    }

    /// `P(x_next | x)` as the sum over feasible `(φ, ρ)` with
    /// `υ = φ + x − x_next`.
    pub fn transition_prob(&self, x: usize, x_next: usize) -> Result<f64> {
        self.check_state(x)?;
        self.check_state(x_next)?;
        let (fresh, retx) = self.attempt_pmfs(x);
        let mut total = 0.0;
        for (phi, pf) in fresh.iter() {
            // υ = φ + x − x' must be non-negative.
            if phi + x < x_next {
                continue;
            }
            let upsilon = phi + x - x_next;
            for (rho, prr) in retx.iter() {
                if upsilon <= phi + rho {
                    total += pf * prr * self.table.query_q(phi + rho, upsilon)?;
                }
            }
        }
        Ok(total)
    }

    /// Exact expected throughput, packets per slot.
    pub fn expected_throughput_exact(&self, x: usize) -> f64 {
        let (fresh, retx) = self.attempt_pmfs(x);
        let means = self.table.means();
        let mut total = 0.0;
        for (phi, pf) in fresh.iter() {
            let mut inner = 0.0;
            for (rho, prr) in retx.iter() {
                inner += prr * means[phi + rho];
            }
            total += pf * inner;
        }
        total / self.num_slots()
    }

    /// Throughput from the average success probability at the expected
    /// attempt count, packets per slot.
    pub fn expected_throughput_approx(&self, x: usize) -> f64 {
        let c = &self.config;
        let attempts = (c.population - x) as f64 * c.p0 + x as f64 * c.pr;
        let ps = self
            .table
            .avg_success_prob(attempts.min(self.table.tau_max as f64))
            .expect("attempts bounded by population <= tau_max");
        attempts * ps / self.num_slots()
    }

    /// Largest binomial mass discarded by truncation over all states.
    pub fn truncation_bound(&self) -> f64 {
        (0..=self.config.population)
            .map(|x| {
                let (f, r) = self.attempt_pmfs(x);
                f.dropped + r.dropped
            })
            .fold(0.0, f64::max)
    }
}

impl BacklogModel for CrdsaChain<'_> {
    fn mode(&self) -> ThroughputMode {
        self.mode
    }

    fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn throughput(&self, x: usize) -> f64 {
        match self.mode {
            ThroughputMode::Exact => self.expected_throughput_exact(x),
            ThroughputMode::Approximate => self.expected_throughput_approx(x),
        }
    }

    fn transition_row(&self, x: usize, x_max: usize) -> Vec<f64> {
        let mut row = vec![0.0; x_max + 1];
        let (fresh, retx) = self.attempt_pmfs(x);
        for (phi, pf) in fresh.iter() {
            for (rho, prr) in retx.iter() {
                let w = pf * prr;
                let q = self.table.row(phi + rho);
                // x' = x + φ − υ, decreasing in υ.
                let top = x + phi;
                for (i, &p) in q.probs.iter().enumerate() {
                    let next = top - (q.lo + i);
                    if next <= x_max {
                        row[next] += w * p;
                    }
                }
            }
        }
        row
    }
}

/// Drift and throughput over every backlog state.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftProfile {
    pub mode: ThroughputMode,
    pub epoch_slots: usize,
    /// Users per epoch, indexed by backlog.
    pub drift: Vec<f64>,
    /// Packets per slot, indexed by backlog.
    pub throughput: Vec<f64>,
}

impl DriftProfile {
    pub fn compute<M: BacklogModel + ?Sized>(model: &M) -> Self {
        let (drift, throughput): (Vec<f64>, Vec<f64>) = (0..=model.population())
            .into_par_iter()
            .map(|x| {
                let s = model.throughput(x);
                (model.expected_fresh(x) - model.epoch_slots() as f64 * s, s)
            })
            .unzip();
        Self {
            mode: model.mode(),
            epoch_slots: model.epoch_slots(),
            drift,
            throughput,
        }
    }

    pub fn population(&self) -> usize {
        self.drift.len().saturating_sub(1)
    }

    /// Throughput at a fractional backlog, linearly interpolated.
    pub fn throughput_at(&self, backlog: f64) -> f64 {
        interpolate(&self.throughput, backlog)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "backlog,drift,throughput")?;
        for (x, (d, s)) in self.drift.iter().zip(&self.throughput).enumerate() {
            writeln!(w, "{x},{d},{s}")?;
        }
        Ok(())
    }
}

pub(crate) fn interpolate(values: &[f64], at: f64) -> f64 {
    let last = values.len() - 1;
    let at = at.clamp(0.0, last as f64);
    let lo = at.floor() as usize;
    if lo >= last {
        return values[last];
    }
    let f = at - lo as f64;
    values[lo] * (1.0 - f) + values[lo + 1] * f
}

/// `P(x' | x)` over `[0, x_max]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub rows: Vec<Vec<f64>>,
    /// Visit counts per source state for matrices estimated from simulation.
    pub visits: Option<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn build<M: BacklogModel + ?Sized>(model: &M, x_max: usize) -> Result<Self> {
        if x_max > model.population() {
            return Err(Error::config(format!(
                "x_max {x_max} exceeds population {}",
                model.population()
            )));
        }
        let rows = (0..=x_max)
            .into_par_iter()
            .map(|x| model.transition_row(x, x_max))
            .collect();
        Ok(Self { rows, visits: None })
    }

    pub fn x_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    /// `Σ (x' − x) P(x' | x)` for every retained row.
    pub fn mean_increments(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(x, r)| {
                r.iter()
                    .enumerate()
                    .map(|(n, p)| (n as f64 - x as f64) * p)
                    .sum()
            })
            .collect()
    }

    /// Wide CSV: one line per source state, one column per target state.
    /// Source states never visited (simulated matrices) are written empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "state")?;
        for j in 0..self.rows.len() {
            write!(w, ",{j}")?;
        }
        writeln!(w)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(w, "{i}")?;
            let seen = self.visits.as_ref().is_none_or(|v| v[i] > 0);
            for p in row {
                if seen {
                    write!(w, ",{p}")?;
                } else {
                    write!(w, ",")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::success_model::{estimate_success_table, TableSpec};

    fn table(ns: usize, tau_max: usize) -> SuccessTable {
        estimate_success_table(TableSpec {
            degree: 2,
            num_slots: ns,
            max_iterations: 10,
            tau_max,
            trials_per_tau: 400,
            master_seed: 11,
        })
        .unwrap()
    }

    fn chain<'a>(t: &'a SuccessTable, m: usize, p0: f64, pr: f64) -> CrdsaChain<'a> {
        CrdsaChain::new(ChannelConfig::crdsa_for(t, m, p0, pr), t, ThroughputMode::Exact).unwrap()
    }

    #[test]
    fn empty_backlog_has_no_retransmissions() {
        let t = table(20, 10);
        let c = chain(&t, 10, 0.3, 0.5);
        for phi in 0..=10 {
            let expect = choose(10, phi)
                * 0.3f64.powi(phi as i32)
                * 0.7f64.powi(10 - phi as i32)
                * t.query_q(phi, 1.min(phi)).unwrap();
            let got = c.joint_pmf(phi, 0, 1.min(phi), 0).unwrap();
            assert!((got - expect).abs() < 1e-15);
            assert_eq!(c.joint_pmf(phi, 1, 0, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn silent_channel() {
        let t = table(20, 10);
        let c = chain(&t, 10, 0.0, 0.0);
        for x in 0..=10 {
            assert_eq!(c.joint_pmf(0, 0, 0, x).unwrap(), 1.0);
            assert_eq!(c.joint_pmf(1, 0, 0, x).unwrap(), 0.0);
            assert_eq!(c.transition_prob(x, x).unwrap(), 1.0);
            assert_eq!(c.expected_throughput_exact(x), 0.0);
        }
        let m = TransitionMatrix::build(&c, 0).unwrap();
        assert_eq!(m.rows, vec![vec![1.0]]);
    }

    #[test]
    fn two_user_two_slot_toy() {
        // With 2 slots and 2 replicas both users occupy both slots: q(2,0) = 1.
        let t = table(2, 2);
        assert_eq!(t.query_q(2, 0).unwrap(), 1.0);
        let c = chain(&t, 2, 1.0, 1.0);
        assert_eq!(c.joint_pmf(2, 0, 0, 0).unwrap(), 1.0);
        assert_eq!(c.transition_prob(0, 2).unwrap(), 1.0);
        assert_eq!(c.drift(0), 2.0);
        let m = TransitionMatrix::build(&c, 2).unwrap();
        assert_eq!(m.rows[0], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn lone_user_throughput() {
        let t = table(100, 3);
        let c = chain(&t, 1, 1.0, 0.5);
        assert!((c.expected_throughput_exact(0) - 0.01).abs() < 1e-15);
        assert!((c.expected_throughput_approx(0) - 0.01).abs() < 1e-15);
        assert!(c.drift(1) <= 0.0);
    }

    #[test]
    fn full_backlog_drift_is_minus_frame_throughput() {
        let t = table(30, 40);
        let c = chain(&t, 40, 0.2, 0.3);
        let d = c.drift(40);
        assert!((d + 30.0 * c.throughput(40)).abs() < 1e-12);
        assert!(d <= 0.0);
    }

    #[test]
    fn table_must_cover_population() {
        let t = table(30, 20);
        let r = CrdsaChain::new(
            ChannelConfig::crdsa_for(&t, 21, 0.1, 0.1),
            &t,
            ThroughputMode::Exact,
        );
        assert!(matches!(r, Err(Error::OutOfRange { tau: 21, .. })));
        let wrong = ChannelConfig::crdsa(10, 0.1, 0.1, 2, 31, 10);
        assert!(CrdsaChain::new(wrong, &t, ThroughputMode::Exact).is_err());
    }

    #[test]
    fn rows_agree_with_pointwise_sum() {
        let t = table(25, 30);
        let c = chain(&t, 30, 0.15, 0.4);
        let m = TransitionMatrix::build(&c, 30).unwrap();
        for x in [0, 3, 17, 30] {
            for n in 0..=30 {
                let direct = c.transition_prob(x, n).unwrap();
                assert!((m.get(x, n) - direct).abs() < 1e-13, "({x},{n})");
            }
        }
    }

    #[test]
    fn row_stochastic_and_drift_consistent() {
        let t = table(25, 40);
        let c = chain(&t, 40, 0.2, 0.6);
        let m = TransitionMatrix::build(&c, 40).unwrap();
        let inc = m.mean_increments();
        for (x, s) in m.row_sums().into_iter().enumerate() {
            assert!((s - 1.0).abs() < 1e-9, "row {x} sums to {s}");
            assert!((inc[x] - c.drift(x)).abs() < 1e-6, "drift mismatch at {x}");
        }
    }

    #[test]
    fn truncated_matrix_leaks_mass() {
        let t = table(25, 40);
        let c = chain(&t, 40, 0.5, 0.6);
        let m = TransitionMatrix::build(&c, 5).unwrap();
        assert!(m.row_sums().iter().all(|&s| s < 1.0));
    }

    #[test]
    fn binomial_marginal_of_joint() {
        let t = table(25, 20);
        let c = chain(&t, 20, 0.35, 0.55);
        let x = 8;
        for phi in 0..=12 {
            let mut s = 0.0;
            for rho in 0..=x {
                for u in 0..=(phi + rho) {
                    s += c.joint_pmf(phi, rho, u, x).unwrap();
                }
            }
            let b = choose(12, phi) * 0.35f64.powi(phi as i32) * 0.65f64.powi(12 - phi as i32);
            assert!((s - b).abs() < 1e-9, "phi={phi}");
        }
    }

    #[test]
    fn pure_drain_never_grows() {
        let t = table(25, 40);
        let c = chain(&t, 40, 0.0, 0.3);
        let p = DriftProfile::compute(&c);
        assert!(p.drift.iter().all(|&d| d <= 0.0));
        assert_eq!(p.drift[0], 0.0);
    }

    #[test]
    fn csv_exports() {
        let t = table(25, 5);
        let c = chain(&t, 5, 0.2, 0.6);
        let mut buf = Vec::new();
        DriftProfile::compute(&c)
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("backlog,drift,throughput\n0,"));
        assert_eq!(text.lines().count(), 7);
        let mut buf = Vec::new();
        TransitionMatrix::build(&c, 5).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state,0,1,2,3,4,5\n"));
    }
}
