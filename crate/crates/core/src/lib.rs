//! Stability analysis of CRDSA (contention resolution diversity slotted ALOHA)
//! and slotted ALOHA for a finite user population.
//!
//! The crate is organised bottom-up:
//!
//! * [`sic_sim`] simulates one CRDSA frame: replica placement and iterative
//!   interference-cancellation peeling.
//! * [`success_model`] estimates the per-frame success distribution `q(τ, υ)`
//!   from many simulated frames and persists it.
//! * [`markov`] and [`sa_model`] turn a success model into backlog Markov
//!   chains (throughput, drift, transition rows) for CRDSA and slotted ALOHA.
//! * [`channel`] holds the shared configuration type and the
//!   [`BacklogModel`](channel::BacklogModel) trait both schemes implement.
//! * [`stability`] finds equilibria, classifies channels and computes the
//!   Little's-law delay.
//! * [`optimize`] searches retransmission probability, population and traffic
//!   under delay targets.
//! * [`fet`] computes mean first entry times into the critical or saturation
//!   backlog via an absorbing chain.
//! * [`mc_validate`] is a closed-loop population simulator used to validate
//!   all of the above.

pub mod binomial;
pub mod channel;
pub mod error;
pub mod fet;
pub mod markov;
pub mod mc_validate;
pub mod optimize;
pub mod rng;
pub mod sa_model;
pub mod sic_sim;
pub mod stability;
pub mod success_model;

pub use channel::{BacklogModel, Channel, ChannelConfig, Scheme};
pub use error::{Error, Result};
pub use success_model::SuccessTable;
