//! Finite-population slotted ALOHA.
//!
//! Per slot, each of the `M − n` fresh users transmits with probability `p0`
//! and each of the `n` backlogged users with probability `pr`. A slot succeeds
//! iff exactly one user transmits, so the backlog can drop by at most one per
//! slot.

use crate::binomial::BinomialPmf;
use crate::channel::{BacklogModel, ChannelConfig, Scheme};
use crate::error::{Error, Result};
use crate::success_model::ThroughputCurve;

#[derive(Debug, Clone)]
pub struct SaSlotModel {
    config: ChannelConfig,
}

/// `base^exp` with the convention `0^0 = 1`.
fn pow(base: f64, exp: usize) -> f64 {
    base.powi(exp as i32)
}

impl SaSlotModel {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        if config.scheme != Scheme::SlottedAloha {
            return Err(Error::config("slotted ALOHA model built from a CRDSA configuration"));
        }
        Ok(Self { config })
    }

    pub fn from_params(population: usize, p0: f64, pr: f64) -> Result<Self> {
        Self::new(ChannelConfig::slotted_aloha(population, p0, pr))
    }

    /// Probability that exactly one fresh and no backlogged user transmits.
    fn fresh_success(&self, n: usize) -> f64 {
        let ChannelConfig { population: m, p0, pr, .. } = self.config;
        let f = m - n;
        if f == 0 {
            return 0.0;
        }
        f as f64 * p0 * pow(1.0 - p0, f - 1) * pow(1.0 - pr, n)
    }

    /// Probability that exactly one backlogged and no fresh user transmits.
    fn backlog_success(&self, n: usize) -> f64 {
        let ChannelConfig { population: m, p0, pr, .. } = self.config;
        if n == 0 {
            return 0.0;
        }
        n as f64 * pr * pow(1.0 - pr, n - 1) * pow(1.0 - p0, m - n)
    }

    /// Expected successes per slot.
    pub fn sa_throughput(&self, n: usize) -> f64 {
        self.fresh_success(n) + self.backlog_success(n)
    }

    /// Users per slot.
    pub fn sa_drift(&self, n: usize) -> f64 {
        (self.config.population - n) as f64 * self.config.p0 - self.sa_throughput(n)
    }
}

impl BacklogModel for SaSlotModel {
    fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn throughput(&self, n: usize) -> f64 {
        self.sa_throughput(n)
    }

    fn drift(&self, n: usize) -> f64 {
        self.sa_drift(n)
    }

    fn transition_row(&self, n: usize, x_max: usize) -> Vec<f64> {
        let ChannelConfig { population: m, p0, pr, .. } = self.config;
        let f = m - n;
        let mut row = vec![0.0; x_max + 1];
        let mut put = |to: usize, p: f64| {
            if to <= x_max {
                row[to] += p;
            }
        };

        let down = self.backlog_success(n);
        if n > 0 {
            put(n - 1, down);
        }
        // One fresh arrival joins the backlog iff some backlogged user also
        // transmitted.
        let up_one = if f >= 1 {
            f as f64 * p0 * pow(1.0 - p0, f - 1) * (1.0 - pow(1.0 - pr, n))
        } else {
            0.0
        };
        put(n + 1, up_one);
        let mut up_many = 0.0;
        if f >= 2 {
            let fresh = BinomialPmf::new(f, p0);
            for (k, p) in fresh.iter().filter(|&(k, _)| k >= 2) {
                put(n + k, p);
                up_many += p;
            }
        }
        // Staying put: silence, a lone fresh success, or only backlogged
        // collisions.
        let stay = (1.0 - down - up_one - up_many).max(0.0);
        put(n, stay);
        row
    }
}

/// Infinite-population slotted ALOHA throughput `G e^{−G}`.
pub fn sa_poisson_throughput(load: f64) -> f64 {
    load * (-load).exp()
}

/// `(G, S)` of a population of `population` users that all transmit with
/// probability `p` per slot, for every `p` in `probs`.
pub fn finite_population_curve(population: usize, probs: &[f64]) -> ThroughputCurve {
    let m = population as f64;
    ThroughputCurve {
        points: probs
            .iter()
            .map(|&p| (m * p, m * p * pow(1.0 - p, population - 1)))
            .collect(),
    }
}

/// `(G, G e^{−G})` for every load in `loads`.
pub fn poisson_curve(loads: &[f64]) -> ThroughputCurve {
    ThroughputCurve {
        points: loads.iter().map(|&g| (g, sa_poisson_throughput(g))).collect(),
    }
}
