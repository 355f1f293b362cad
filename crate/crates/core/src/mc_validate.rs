//! Closed-loop simulation of the whole user population.
//!
//! Every epoch each fresh user starts a new packet with probability `p0` and
//! each backlogged user retransmits with probability `pr`. CRDSA attempts are
//! placed and decoded with [`sic_sim`](crate::sic_sim), drawing new replica
//! slots on every attempt; a slotted ALOHA slot succeeds iff exactly one user
//! transmits. Failed fresh users join the backlog and generate nothing new
//! until their packet gets through.
//!
//! Packet delay is measured as the number of epochs a packet spends
//! backlogged, i.e. from the epoch of its first attempt to the epoch of its
//! success, exclusive of the latter. This is the quantity Little's law ties to
//! the mean backlog. [`DelayEstimate::latency_slots`] adds the final epoch.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{ChannelConfig, Scheme};
use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;
use crate::rng::stream;
use crate::sic_sim::{FrameLayout, SicDecoder};

/// Per-epoch bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameOutcome {
    pub fresh_success: usize,
    pub fresh_fail: usize,
    pub backlog_success: usize,
    pub backlog_fail: usize,
    pub backlog_before: usize,
    pub backlog_after: usize,
}

impl FrameOutcome {
    /// Fresh attempts `φ`.
    pub fn fresh_attempts(&self) -> usize {
        self.fresh_success + self.fresh_fail
    }

    /// Retransmission attempts `ρ`.
    pub fn backlog_attempts(&self) -> usize {
        self.backlog_success + self.backlog_fail
    }

    /// Decoded packets `υ`.
    pub fn decoded(&self) -> usize {
        self.fresh_success + self.backlog_success
    }

    fn check(&self) {
        assert_eq!(
            self.backlog_after + self.backlog_success,
            self.backlog_before + self.fresh_fail,
            "backlog bookkeeping broken: {self:?}"
        );
        assert!(self.backlog_attempts() <= self.backlog_before, "{self:?}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub epoch_slots: usize,
    pub population: usize,
    pub outcomes: Vec<FrameOutcome>,
    /// Epochs each completed packet spent backlogged.
    pub delays: Vec<u32>,
    /// `first_hit[b]`: first epoch after which the backlog was at least `b`.
    /// Epoch 0 is the initial empty state.
    pub first_hit: Vec<Option<u64>>,
}

impl RunTrace {
    pub fn epochs(&self) -> usize {
        self.outcomes.len()
    }

    /// Backlog after every epoch, starting with the initial 0.
    pub fn backlog_path(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.outcomes.iter().map(|o| o.backlog_after))
            .collect()
    }

    /// Dumps one line per epoch:
    /// `epoch backlog_before fresh_success fresh_fail backlog_success backlog_fail backlog_after`.
    pub fn write_epochs<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# epoch backlog_before FS FU BS BU backlog_after")?;
        for (t, o) in self.outcomes.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                t + 1,
                o.backlog_before,
                o.fresh_success,
                o.fresh_fail,
                o.backlog_success,
                o.backlog_fail,
                o.backlog_after
            )?;
        }
        Ok(())
    }
}

/// Simulates `epochs` epochs from an empty backlog.
pub fn run_closed_loop(config: &ChannelConfig, epochs: u64, master_seed: u64) -> Result<RunTrace> {
    run_until(config, epochs, None, master_seed, 0)
}

/// Like [`run_closed_loop`] but stops after the first epoch that leaves the
/// backlog at `stop_at` or above. `run_index` selects the random stream.
pub fn run_until(
    config: &ChannelConfig,
    max_epochs: u64,
    stop_at: Option<usize>,
    master_seed: u64,
    run_index: u64,
) -> Result<RunTrace> {
    config.validate()?;
    if max_epochs == 0 {
        return Err(Error::config("a run needs at least one epoch"));
    }
    let mut rng = stream(master_seed, run_index, 0);
    let m = config.population;
    let epoch_slots = config.epoch_slots();
    // `Some(e)`: backlogged since its first attempt in epoch `e`.
    let mut users: Vec<Option<u64>> = vec![None; m];
    let mut trace = RunTrace {
        epoch_slots,
        population: m,
        outcomes: Vec::with_capacity(max_epochs.min(1 << 20) as usize),
        delays: Vec::new(),
        first_hit: vec![None; m + 1],
    };
    trace.first_hit[0] = Some(0);
    let mut highest = 0;
    let mut backlog = 0;

    let mut attempting: Vec<usize> = Vec::with_capacity(m);
    let mut layout = match config.scheme {
        Scheme::Crdsa {
            degree, num_slots, ..
        } => Some(FrameLayout::empty(num_slots, degree)),
        Scheme::SlottedAloha => None,
    };
    let mut decoder = SicDecoder::new(config.epoch_slots());
    let mut success: Vec<bool> = Vec::with_capacity(m);

    for epoch in 1..=max_epochs {
        attempting.clear();
        for (u, state) in users.iter().enumerate() {
            let p = if state.is_some() { config.pr } else { config.p0 };
            if rng.gen::<f64>() < p {
                attempting.push(u);
            }
        }

        success.clear();
        match (config.scheme, layout.as_mut()) {
            (Scheme::Crdsa { max_iterations, .. }, Some(layout)) => {
                layout.refill(attempting.len(), &mut rng);
                decoder.decode(layout, max_iterations);
                success.extend_from_slice(decoder.decoded());
            }
            _ => success.resize(attempting.len(), attempting.len() == 1),
        }

        let mut o = FrameOutcome {
            backlog_before: backlog,
            ..FrameOutcome::default()
        };
        for (&u, &ok) in attempting.iter().zip(&success) {
            match (users[u], ok) {
                (None, true) => {
                    o.fresh_success += 1;
                    trace.delays.push(0);
                }
                (None, false) => {
                    o.fresh_fail += 1;
                    users[u] = Some(epoch);
                }
                (Some(first), true) => {
                    o.backlog_success += 1;
                    trace.delays.push((epoch - first) as u32);
                    users[u] = None;
                }
                (Some(_), false) => o.backlog_fail += 1,
            }
        }
        backlog = backlog + o.fresh_fail - o.backlog_success;
        o.backlog_after = backlog;
        o.check();
        trace.outcomes.push(o);

        while highest < backlog {
            highest += 1;
            trace.first_hit[highest] = Some(epoch);
        }
        if stop_at.is_some_and(|s| backlog >= s) {
            break;
        }
    }
    Ok(trace)
}

/// `runs` independent runs in parallel. Run `i` uses the stream for
/// `(master_seed, i)`, so run 0 reproduces [`run_closed_loop`].
pub fn run_many(
    config: &ChannelConfig,
    runs: usize,
    max_epochs: u64,
    stop_at: Option<usize>,
    master_seed: u64,
) -> Result<Vec<RunTrace>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| run_until(config, max_epochs, stop_at, master_seed, i))
        .collect()
}

/// Frequency estimate of `P(x' | x)` over `[0, x_max]²`. Transitions landing
/// above `x_max` count towards the row total but are not stored.
pub fn empirical_transition_matrix(traces: &[RunTrace], x_max: usize) -> TransitionMatrix {
    let mut counts = vec![vec![0u64; x_max + 1]; x_max + 1];
    let mut visits = vec![0u64; x_max + 1];
    for o in traces.iter().flat_map(|t| &t.outcomes) {
        if o.backlog_before <= x_max {
            visits[o.backlog_before] += 1;
            if o.backlog_after <= x_max {
                counts[o.backlog_before][o.backlog_after] += 1;
            }
        }
    }
    let rows = counts
        .iter()
        .zip(&visits)
        .map(|(row, &n)| {
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect()
        })
        .collect();
    TransitionMatrix {
        rows,
        visits: Some(visits),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetEstimate {
    /// Mean first epoch with backlog at or above the boundary; `None` when no
    /// run got there.
    pub mean_epochs: Option<f64>,
    pub std_error: Option<f64>,
    pub runs_used: usize,
    /// Runs that never reached the boundary.
    pub runs_excluded: usize,
}

pub fn empirical_fet(traces: &[RunTrace], boundary: usize) -> FetEstimate {
    let hits: Vec<f64> = traces
        .iter()
        .filter_map(|t| t.first_hit.get(boundary).copied().flatten())
        .map(|e| e as f64)
        .collect();
    let (mean, se) = mean_and_se(&hits);
    FetEstimate {
        mean_epochs: mean,
        std_error: se,
        runs_used: hits.len(),
        runs_excluded: traces.len() - hits.len(),
    }
}

fn mean_and_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = (xs.len() > 1).then(|| {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    (Some(mean), se)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub packets: usize,
    /// Mean time spent backlogged, slots.
    pub mean_slots: Option<f64>,
    /// Mean time from first attempt to the end of the successful epoch, slots.
    pub latency_slots: Option<f64>,
}

pub fn empirical_delay(traces: &[RunTrace]) -> DelayEstimate {
    let mut packets = 0usize;
    let mut epochs = 0u64;
    let mut slots = None;
    for t in traces {
        packets += t.delays.len();
        epochs += t.delays.iter().map(|&d| u64::from(d)).sum::<u64>();
        slots.get_or_insert(t.epoch_slots);
    }
    let es = slots.unwrap_or(1) as f64;
    let mean = (packets > 0).then(|| epochs as f64 / packets as f64 * es);
    DelayEstimate {
        packets,
        mean_slots: mean,
        latency_slots: mean.map(|d| d + es),
    }
}

/// Time averages of a single run for a Little's-law check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LittleCheck {
    /// Mean backlog at the start of an epoch, users.
    pub mean_backlog: f64,
    /// Packets per slot.
    pub throughput: f64,
    /// `mean_backlog / throughput`, slots.
    pub little_delay_slots: f64,
    /// Measured mean packet delay, slots.
    pub measured_delay_slots: f64,
}

impl LittleCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.little_delay_slots - self.measured_delay_slots).abs() / self.measured_delay_slots
    }
}

pub fn little_check(trace: &RunTrace) -> Option<LittleCheck> {
    let epochs = trace.epochs();
    let decoded: usize = trace.outcomes.iter().map(FrameOutcome::decoded).sum();
    if epochs == 0 || decoded == 0 {
        return None;
    }
    let es = trace.epoch_slots as f64;
    let mean_backlog =
        trace.outcomes.iter().map(|o| o.backlog_before as f64).sum::<f64>() / epochs as f64;
    let throughput = decoded as f64 / (epochs as f64 * es);
    Some(LittleCheck {
        mean_backlog,
        throughput,
        little_delay_slots: mean_backlog / throughput,
        measured_delay_slots: empirical_delay(std::slice::from_ref(trace)).mean_slots?,
    })
}

/// One summary line per run.
pub fn write_summary_csv<W: Write>(traces: &[RunTrace], mut w: W) -> Result<()> {
    writeln!(w, "run,epochs,packets,mean_backlog,throughput,mean_delay_slots,final_backlog")?;
    for (i, t) in traces.iter().enumerate() {
        let d = empirical_delay(std::slice::from_ref(t));
        let l = little_check(t);
        writeln!(
            w,
            "{i},{},{},{},{},{},{}",
            t.epochs(),
            d.packets,
            l.map_or(String::new(), |l| l.mean_backlog.to_string()),
            l.map_or(String::new(), |l| l.throughput.to_string()),
            d.mean_slots.map_or(String::new(), |v| v.to_string()),
            t.outcomes.last().map_or(0, |o| o.backlog_after)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crdsa(m: usize, p0: f64, pr: f64, d: usize, ns: usize) -> ChannelConfig {
        ChannelConfig::crdsa(m, p0, pr, d, ns, 10)
    }

    #[test]
    fn silent_population_stays_empty() {
        let t = run_closed_loop(&crdsa(50, 0.0, 0.5, 2, 100), 200, 1).unwrap();
        assert!(t.outcomes.iter().all(|o| *o == FrameOutcome::default()));
        assert!(t.delays.is_empty());
        assert_eq!(empirical_delay(&[t]).mean_slots, None);
    }

    #[test]
    fn lone_crdsa_user_always_succeeds() {
        let t = run_closed_loop(&crdsa(1, 1.0, 0.3, 2, 100), 50, 9).unwrap();
        assert_eq!(t.delays, vec![0; 50]);
        let d = empirical_delay(&[t]);
        assert_eq!(d.mean_slots, Some(0.0));
        assert_eq!(d.latency_slots, Some(100.0));
    }

    #[test]
    fn deterministic_toy_locks_up() {
        // Two users with two replicas in two slots always collide.
        let t = run_closed_loop(&crdsa(2, 1.0, 1.0, 2, 2), 10, 3).unwrap();
        let p = empirical_transition_matrix(&[t], 2);
        assert_eq!(p.rows[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(p.rows[2], vec![0.0, 0.0, 1.0]);
        assert_eq!(p.visits.as_ref().unwrap()[1], 0);
    }

    #[test]
    fn slotted_aloha_pair_collides() {
        let t = run_closed_loop(&ChannelConfig::slotted_aloha(2, 1.0, 1.0), 5, 0).unwrap();
        assert_eq!(t.backlog_path(), vec![0, 2, 2, 2, 2, 2]);
        assert_eq!(t.first_hit, vec![Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn fet_edge_cases() {
        let runs = run_many(&crdsa(20, 0.5, 0.5, 2, 10), 4, 30, None, 5).unwrap();
        assert_eq!(empirical_fet(&runs, 0).mean_epochs, Some(0.0));
        let none = empirical_fet(&runs, 21);
        assert_eq!(none.mean_epochs, None);
        assert_eq!(none.runs_excluded, 4);
    }

    #[test]
    fn early_stop_and_run_zero_reproduces_single_run() {
        let c = crdsa(40, 0.5, 0.2, 2, 20);
        let runs = run_many(&c, 3, 500, Some(10), 11).unwrap();
        let single = run_until(&c, 500, Some(10), 11, 0).unwrap();
        assert_eq!(runs[0], single);
        for r in &runs {
            let last = r.outcomes.last().unwrap().backlog_after;
            assert!(last >= 10 || r.epochs() == 500);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bookkeeping_and_determinism(
            m in 1usize..60,
            p0 in 0.0f64..=1.0,
            pr in 0.0f64..=1.0,
            seed in any::<u64>(),
            sa in any::<bool>(),
        ) {
            let c = if sa {
                ChannelConfig::slotted_aloha(m, p0, pr)
            } else {
                crdsa(m, p0, pr, 2, 16)
            };
            let t = run_closed_loop(&c, 60, seed).unwrap();
            prop_assert_eq!(&t, &run_closed_loop(&c, 60, seed).unwrap());
            let path = t.backlog_path();
            for (w, o) in path.windows(2).zip(&t.outcomes) {
                prop_assert_eq!(w[0], o.backlog_before);
                prop_assert_eq!(w[1], o.backlog_after);
                prop_assert!(o.fresh_attempts() <= m - o.backlog_before);
                if sa {
                    prop_assert!(o.decoded() <= 1);
                }
            }
            let p = empirical_transition_matrix(&[t], m);
            for (row, &n) in p.rows.iter().zip(p.visits.as_ref().unwrap()) {
                if n > 0 {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
