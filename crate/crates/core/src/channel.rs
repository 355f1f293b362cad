//! Channel configuration and the scheme-agnostic backlog model.
//!
//! CRDSA decides per frame of `N_s` slots and gets its success statistics
//! from a [`SuccessTable`]; slotted ALOHA decides per slot and has closed
//! forms. Everything downstream ([`stability`](crate::stability),
//! [`optimize`](crate::optimize), [`fet`](crate::fet)) only sees the
//! [`BacklogModel`] trait.

use std::fmt;

use crate::error::{Error, Result};
use crate::markov::CrdsaChain;
use crate::sa_model::SaSlotModel;
use crate::success_model::SuccessTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Crdsa {
        degree: usize,
        num_slots: usize,
        max_iterations: usize,
    },
    SlottedAloha,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Crdsa { .. } => f.write_str("crdsa"),
            Scheme::SlottedAloha => f.write_str("sa"),
        }
    }
}

/// `{M, p0, pr}` plus the CRDSA frame parameters when applicable.
///
/// `p0` and `pr` are per epoch: per frame for CRDSA, per slot for slotted
/// ALOHA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub scheme: Scheme,
    pub population: usize,
    pub p0: f64,
    pub pr: f64,
}

impl ChannelConfig {
    pub fn crdsa(
        population: usize,
        p0: f64,
        pr: f64,
        degree: usize,
        num_slots: usize,
        max_iterations: usize,
    ) -> Self {
        Self {
            scheme: Scheme::Crdsa {
                degree,
                num_slots,
                max_iterations,
            },
            population,
            p0,
            pr,
        }
    }

    pub fn slotted_aloha(population: usize, p0: f64, pr: f64) -> Self {
        Self {
            scheme: Scheme::SlottedAloha,
            population,
            p0,
            pr,
        }
    }

    /// CRDSA configuration matching the frame parameters of `table`.
    pub fn crdsa_for(table: &SuccessTable, population: usize, p0: f64, pr: f64) -> Self {
        Self::crdsa(
            population,
            p0,
            pr,
            table.degree,
            table.num_slots,
            table.max_iterations,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 1 {
            return Err(Error::config("population must be at least 1"));
        }
        for (name, p) in [("p0", self.p0), ("pr", self.pr)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} is not a probability")));
            }
        }
        if let Scheme::Crdsa {
            degree,
            num_slots,
            max_iterations,
        } = self.scheme
        {
            crate::sic_sim::check_frame(degree, num_slots)?;
            if max_iterations < 1 {
                return Err(Error::config("max_iterations must be at least 1"));
            }
        }
        Ok(())
    }

    /// Slots per decision epoch.
    pub fn epoch_slots(&self) -> usize {
        match self.scheme {
            Scheme::Crdsa { num_slots, .. } => num_slots,
            Scheme::SlottedAloha => 1,
        }
    }

    pub fn with_pr(self, pr: f64) -> Self {
        Self { pr, ..self }
    }

    pub fn with_p0(self, p0: f64) -> Self {
        Self { p0, ..self }
    }

    pub fn with_population(self, population: usize) -> Self {
        Self { population, ..self }
    }
}

/// Per-slot slotted ALOHA generation probability carrying the same traffic as
/// a per-frame CRDSA probability.
pub fn convert_p0_sa(p0_crdsa: f64, num_slots: usize) -> f64 {
    p0_crdsa / num_slots as f64
}

/// Which CRDSA throughput formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThroughputMode {
    /// Full sum over fresh and retransmission attempt counts.
    #[default]
    Exact,
    /// Average success probability at the expected attempt count.
    Approximate,
}

/// A finite-population backlog Markov chain.
///
/// Units: backlog in users, throughput in packets per slot, drift in users per
/// epoch.
pub trait BacklogModel: Sync {
    fn config(&self) -> &ChannelConfig;

    fn population(&self) -> usize {
        self.config().population
    }

    fn epoch_slots(&self) -> usize {
        self.config().epoch_slots()
    }

    /// Throughput formula in use. Slotted ALOHA has only the exact one.
    fn mode(&self) -> ThroughputMode {
        ThroughputMode::Exact
    }

    /// Expected successes per slot with `backlog` users backlogged.
    fn throughput(&self, backlog: usize) -> f64;

    /// Expected fresh attempts per epoch.
    fn expected_fresh(&self, backlog: usize) -> f64 {
        let c = self.config();
        (c.population - backlog) as f64 * c.p0
    }

    /// Expected backlog change per epoch.
    fn drift(&self, backlog: usize) -> f64 {
        self.expected_fresh(backlog) - self.epoch_slots() as f64 * self.throughput(backlog)
    }

    /// `P(x' | backlog)` for `x' = 0..=x_max`. Mass going above `x_max` is
    /// not represented.
    fn transition_row(&self, backlog: usize, x_max: usize) -> Vec<f64>;
}

/// Either scheme behind one type.
#[derive(Debug, Clone)]
pub enum Channel<'a> {
    Crdsa(CrdsaChain<'a>),
    SlottedAloha(SaSlotModel),
}

impl<'a> Channel<'a> {
    /// Builds the model for `config`. CRDSA needs a table whose frame
    /// parameters match and whose range covers the whole population.
    pub fn new(
        config: ChannelConfig,
        table: Option<&'a SuccessTable>,
        mode: ThroughputMode,
    ) -> Result<Self> {
        match config.scheme {
            Scheme::Crdsa { .. } => {
                let table = table.ok_or_else(|| {
                    Error::config("a CRDSA analysis needs a success table")
                })?;
                Ok(Channel::Crdsa(CrdsaChain::new(config, table, mode)?))
            }
            Scheme::SlottedAloha => Ok(Channel::SlottedAloha(SaSlotModel::new(config)?)),
        }
    }
}

impl BacklogModel for Channel<'_> {
    fn config(&self) -> &ChannelConfig {
        match self {
            Channel::Crdsa(c) => c.config(),
            Channel::SlottedAloha(s) => s.config(),
        }
    }

    fn mode(&self) -> ThroughputMode {
        match self {
            Channel::Crdsa(c) => c.mode(),
            Channel::SlottedAloha(s) => s.mode(),
        }
    }

    fn throughput(&self, backlog: usize) -> f64 {
        match self {
            Channel::Crdsa(c) => c.throughput(backlog),
            Channel::SlottedAloha(s) => s.throughput(backlog),
        }
    }

    fn drift(&self, backlog: usize) -> f64 {
        match self {
            Channel::Crdsa(c) => c.drift(backlog),
            Channel::SlottedAloha(s) => s.drift(backlog),
        }
    }

    fn transition_row(&self, backlog: usize, x_max: usize) -> Vec<f64> {
        match self {
            Channel::Crdsa(c) => c.transition_row(backlog, x_max),
            Channel::SlottedAloha(s) => s.transition_row(backlog, x_max),
        }
    }
}
