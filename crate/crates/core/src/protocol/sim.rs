use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::receiver::{
    bsm_attempt_sample, receiver_step, ClassicalMessage, HeraldKind, ReceiverState, Resolution, Side,
};
use crate::analytic::TimingParams;
use crate::error::{check_positive, check_probability, Error, Result};
use crate::optics::{BsmVariant, DetectorModel, SideLoss};

/// How announcements that can no longer lead to a pair are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Every announcement is delivered and acted on.
    Literal,
    /// An announcement for a bin in which the far receiver was closed is
    /// dropped; the far side cannot pair with it. The run then follows the
    /// full Markov chain exactly.
    Omniscient,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::Literal => "literal",
            SimMode::Omniscient => "omniscient",
        })
    }
}

/// Number of batches used for batch-means standard errors.
pub const BATCHES: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub beta_qd: f64,
    pub beta_ms: f64,
    pub p_dc: f64,
    pub bsm: BsmVariant,
    /// Cycles per transmission delay.
    pub n: u64,
    pub tau_c_s: f64,
    pub total_cycles: u64,
    pub seed: u64,
    pub mode: SimMode,
    /// Maximum number of trace events kept; 0 disables tracing.
    pub trace_limit: usize,
}

impl SimConfig {
    /// Loss-free, dark-count-free link with per-side success probability `p`
    /// carried entirely by the midpoint photon.
    pub fn with_side_probability(p: f64, n: u64, total_cycles: u64, seed: u64, mode: SimMode) -> Self {
        Self {
            beta_qd: 1.0,
            beta_ms: p,
            p_dc: 0.0,
            bsm: BsmVariant::SingletPlusTriplet,
            n,
            tau_c_s: 1e-9,
            total_cycles,
            seed,
            mode,
            trace_limit: 0,
        }
    }

    /// Configuration for a physical link.
    pub fn from_link(
        side: &SideLoss,
        detector: &DetectorModel,
        bsm: BsmVariant,
        timing: &TimingParams,
        total_cycles: u64,
        seed: u64,
        mode: SimMode,
    ) -> Self {
        Self {
            beta_qd: side.beta_qd,
            beta_ms: side.beta_ms,
            p_dc: detector.p_dc(),
            bsm,
            n: timing.n,
            tau_c_s: timing.tau_c_s(),
            total_cycles,
            seed,
            mode,
            trace_limit: 0,
        }
    }

    /// Cycles excluded from statistics: the transient from the all-open start.
    pub fn warmup_cycles(&self) -> u64 {
        2 * self.n
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("beta_qd", self.beta_qd)?;
        check_probability("beta_ms", self.beta_ms)?;
        check_probability("p_dc", self.p_dc)?;
        check_positive("tau_c", self.tau_c_s)?;
        if self.n == 0 {
            return Err(Error::InvalidCount {
                name: "n",
                value: 0,
                expected: "at least one cycle",
            });
        }
        if self.total_cycles <= self.warmup_cycles() {
            return Err(Error::InvalidCount {
                name: "total_cycles",
                value: self.total_cycles,
                expected: "more cycles than the 2n warmup",
            });
        }
        if self.total_cycles < 10 * self.n {
            warn!(
                "total_cycles = {} is below 10·n = {}; equilibrium estimates will be poor",
                self.total_cycles,
                10 * self.n
            );
        }
        Ok(())
    }
}

/// Aggregate outcome of one run, measured after the warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub mode: SimMode,
    pub seed: u64,
    pub n: u64,
    pub cycles_run: u64,
    pub warmup_cycles: u64,
    pub measured_cycles: u64,
    /// Pairs confirmed by both receivers where both heralds were genuine.
    pub true_coincidences: u64,
    /// Pairs confirmed by both receivers with at least one false herald.
    pub false_coincidences: u64,
    pub left_true_heralds: u64,
    pub left_false_heralds: u64,
    pub right_true_heralds: u64,
    pub right_false_heralds: u64,
    /// Confirmations seen by one receiver only (literal mode).
    pub one_sided_confirmations: u64,
    pub timeouts: u64,
    pub resets: u64,
    pub dropped_announcements: u64,
    /// Fraction of measured cycles with both receivers open.
    pub open_occupancy: f64,
    pub open_occupancy_se: f64,
    /// Confirmed pairs per second.
    pub rate_hz: f64,
    pub rate_se_hz: f64,
    pub infidelity_estimate: Option<f64>,
}

impl SimStats {
    pub fn coincidences(&self) -> u64 {
        self.true_coincidences + self.false_coincidences
    }
}

/// `false / (true + false)` over confirmed pairs; `None` without pairs.
pub fn estimate_infidelity(stats: &SimStats) -> Option<f64> {
    let total = stats.coincidences();
    (total > 0).then(|| stats.false_coincidences as f64 / total as f64)
}

/// One line of the optional event trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub side: Side,
    pub event: TraceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Herald(HeraldKind),
    Announce { bin: u64 },
    Dropped { bin: u64 },
    Confirmed { bin: u64 },
    Reset { bin: u64, announced: u64 },
    Timeout { bin: u64 },
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TraceKind::Herald(HeraldKind::TrueHerald) => write!(f, "herald_true"),
            TraceKind::Herald(HeraldKind::FalseHerald) => write!(f, "herald_false"),
            TraceKind::Announce { bin } => write!(f, "announce bin={bin}"),
            TraceKind::Dropped { bin } => write!(f, "dropped bin={bin}"),
            TraceKind::Confirmed { bin } => write!(f, "confirmed bin={bin}"),
            TraceKind::Reset { bin, announced } => write!(f, "reset bin={bin} announced={announced}"),
            TraceKind::Timeout { bin } => write!(f, "timeout bin={bin}"),
        }
    }
}

/// Writes a trace as `cycle,side,event` CSV.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceEvent]) -> std::io::Result<()> {
    writeln!(out, "cycle,side,event")?;
    for e in trace {
        writeln!(out, "{},{},{}", e.cycle, e.side, e.event)?;
    }
    Ok(())
}

/// Statistics plus the per-side confirmed bin lists and the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub stats: SimStats,
    /// Bins confirmed by the left receiver, in order (whole run).
    pub left_pairs: Vec<u64>,
    pub right_pairs: Vec<u64>,
    pub trace: Vec<TraceEvent>,
}

/// Random stream of one receiver: the root seed on stream `side`.
fn side_rng(seed: u64, side: Side) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(side.index() as u64 + 1);
    rng
}

struct Receiver {
    side: Side,
    state: ReceiverState,
    held: Option<HeraldKind>,
    inbox: VecDeque<ClassicalMessage>,
    rng: ChaCha8Rng,
    confirmed: Vec<(u64, HeraldKind, HeraldKind)>,
    true_heralds: u64,
    false_heralds: u64,
}

struct Tracer {
    limit: usize,
    events: Vec<TraceEvent>,
}

impl Tracer {
    fn push(&mut self, cycle: u64, side: Side, event: TraceKind) {
        if self.events.len() < self.limit {
            self.events.push(TraceEvent { cycle, side, event });
        }
    }
}

/// Runs the midpoint-source protocol cycle by cycle.
///
/// Pair `i` from the midpoint is attempted by both receivers in cycle `i`;
/// the constant flight time to the receivers is absorbed into their clocks.
/// Announcements arrive `n` cycles after they are sent. After
/// `total_cycles` the source stops and the run drains for `n` more cycles so
/// every heralded bin gets resolved.
pub fn des_run(config: &SimConfig) -> Result<SimRun> {
    config.validate()?;
    let n = config.n;
    let total = config.total_cycles;
    let warmup = config.warmup_cycles();
    let measured = total - warmup;
    let batch_len = measured.div_ceil(BATCHES);

    let mut rx = [Side::Left, Side::Right].map(|side| Receiver {
        side,
        state: ReceiverState::Open,
        held: None,
        inbox: VecDeque::new(),
        rng: side_rng(config.seed, side),
        confirmed: Vec::new(),
        true_heralds: 0,
        false_heralds: 0,
    });
    let mut tracer = Tracer {
        limit: config.trace_limit,
        events: Vec::new(),
    };
    let mut open_by_batch = vec![0u64; BATCHES as usize];
    let (mut timeouts, mut resets, mut dropped) = (0u64, 0u64, 0u64);

    for cycle in 0..total + n {
        let emitting = cycle < total;
        let counted = emitting && cycle >= warmup;
        let was_open = [rx[0].state.is_open(), rx[1].state.is_open()];
        if counted && was_open[0] && was_open[1] {
            open_by_batch[((cycle - warmup) / batch_len) as usize] += 1;
        }

        let mut sent: [Option<ClassicalMessage>; 2] = [None, None];
        for (i, r) in rx.iter_mut().enumerate() {
            let herald = if emitting {
                // Drawn every cycle so each stream stays aligned with the clock.
                let h = bsm_attempt_sample(&mut r.rng, config.beta_qd, config.beta_ms, config.p_dc, config.bsm);
                h.filter(|_| was_open[i])
            } else {
                None
            };
            if let Some(kind) = herald {
                if counted {
                    match kind {
                        HeraldKind::TrueHerald => r.true_heralds += 1,
                        HeraldKind::FalseHerald => r.false_heralds += 1,
                    }
                }
                tracer.push(cycle, r.side, TraceKind::Herald(kind));
            }

            let arriving = match r.inbox.front() {
                Some(m) if m.arrival == cycle => r.inbox.pop_front(),
                _ => None,
            };
            let inbox = arriving.as_ref().map(std::slice::from_ref).unwrap_or(&[]);
            let out = receiver_step(r.state, r.held, r.side, cycle, herald, inbox, n);
            r.state = out.state;
            r.held = out.held;
            sent[i] = out.outgoing;

            match out.resolution {
                Some(Resolution::Confirmed { bin, local, remote }) => {
                    r.confirmed.push((bin, local, remote));
                    tracer.push(cycle, r.side, TraceKind::Confirmed { bin });
                }
                Some(Resolution::Reset { bin, announced }) => {
                    resets += 1;
                    tracer.push(cycle, r.side, TraceKind::Reset { bin, announced });
                }
                Some(Resolution::Timeout { bin }) => {
                    timeouts += 1;
                    tracer.push(cycle, r.side, TraceKind::Timeout { bin });
                }
                None => {}
            }
        }

        for (i, msg) in sent.into_iter().enumerate() {
            let Some(msg) = msg else { continue };
            let far = 1 - i;
            if config.mode == SimMode::Omniscient && !was_open[far] {
                dropped += 1;
                tracer.push(cycle, msg.origin, TraceKind::Dropped { bin: msg.bin });
                continue;
            }
            tracer.push(cycle, msg.origin, TraceKind::Announce { bin: msg.bin });
            rx[far].inbox.push_back(msg);
        }
    }

    // Pairs are bins confirmed on both sides.
    let [left, right] = &rx;
    let mut pairs_by_batch = vec![0u64; BATCHES as usize];
    let (mut true_pairs, mut false_pairs, mut both) = (0u64, 0u64, 0u64);
    let (mut a, mut b) = (0, 0);
    while a < left.confirmed.len() && b < right.confirmed.len() {
        let (lb, lk, _) = left.confirmed[a];
        let (rb, rk, _) = right.confirmed[b];
        match lb.cmp(&rb) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                both += 1;
                if lb >= warmup && lb < total {
                    pairs_by_batch[((lb - warmup) / batch_len) as usize] += 1;
                    if lk == HeraldKind::TrueHerald && rk == HeraldKind::TrueHerald {
                        true_pairs += 1;
                    } else {
                        false_pairs += 1;
                    }
                }
                a += 1;
                b += 1;
            }
        }
    }
    let one_sided = (left.confirmed.len() + right.confirmed.len()) as u64 - 2 * both;

    let batch_sizes: Vec<f64> = (0..BATCHES)
        .map(|k| (measured.saturating_sub(k * batch_len)).min(batch_len) as f64)
        .collect();
    let (occupancy, occupancy_se) = batch_mean(&open_by_batch, &batch_sizes);
    let (pair_rate, pair_rate_se) = batch_mean(&pairs_by_batch, &batch_sizes);

    let mut stats = SimStats {
        mode: config.mode,
        seed: config.seed,
        n,
        cycles_run: total,
        warmup_cycles: warmup,
        measured_cycles: measured,
        true_coincidences: true_pairs,
        false_coincidences: false_pairs,
        left_true_heralds: left.true_heralds,
        left_false_heralds: left.false_heralds,
        right_true_heralds: right.true_heralds,
        right_false_heralds: right.false_heralds,
        one_sided_confirmations: one_sided,
        timeouts,
        resets,
        dropped_announcements: dropped,
        open_occupancy: occupancy,
        open_occupancy_se: occupancy_se,
        rate_hz: pair_rate / config.tau_c_s,
        rate_se_hz: pair_rate_se / config.tau_c_s,
        infidelity_estimate: None,
    };
    stats.infidelity_estimate = estimate_infidelity(&stats);

    Ok(SimRun {
        stats,
        left_pairs: left.confirmed.iter().map(|c| c.0).collect(),
        right_pairs: right.confirmed.iter().map(|c| c.0).collect(),
        trace: tracer.events,
    })
}

/// Per-cycle mean of `counts` and its batch-means standard error.
fn batch_mean(counts: &[u64], sizes: &[f64]) -> (f64, f64) {
    let total_cycles: f64 = sizes.iter().sum();
    let total: u64 = counts.iter().sum();
    let mean = total as f64 / total_cycles;
    let full: Vec<f64> = counts
        .iter()
        .zip(sizes)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&c, &s)| c as f64 / s)
        .collect();
    let k = full.len() as f64;
    if k < 2.0 {
        return (mean, f64::NAN);
    }
    let avg = full.iter().sum::<f64>() / k;
    let var = full.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Outcome of the midpoint-interference baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpiStats {
    pub windows: u64,
    pub pairs: u64,
    pub rate_hz: f64,
    /// Binomial standard error of `rate_hz`.
    pub rate_se_hz: f64,
}

/// Midpoint interference: one attempt per round-trip window `tau_t`, each
/// succeeding with probability `beta_1`.
pub fn mpi_reference_run<R: Rng + ?Sized>(beta_1: f64, tau_t_s: f64, windows: u64, rng: &mut R) -> Result<MpiStats> {
    check_probability("beta_1", beta_1)?;
    check_positive("tau_t", tau_t_s)?;
    if windows == 0 {
        return Err(Error::InvalidCount {
            name: "windows",
            value: 0,
            expected: "at least one window",
        });
    }
    let pairs = (0..windows).filter(|_| rng.random::<f64>() < beta_1).count() as u64;
    let elapsed = windows as f64 * tau_t_s;
    let frac = pairs as f64 / windows as f64;
    Ok(MpiStats {
        windows,
        pairs,
        rate_hz: pairs as f64 / elapsed,
        rate_se_hz: (windows as f64 * frac * (1.0 - frac)).sqrt() / elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::pi0_closed_form;

    #[test]
    fn lossless_link_pairs_every_n_plus_one_cycles() {
        let mut cfg = SimConfig::with_side_probability(1.0, 10, 1000, 1, SimMode::Literal);
        cfg.tau_c_s = 1e-6;
        let run = des_run(&cfg).unwrap();
        assert_eq!(run.left_pairs, run.right_pairs);
        assert!(run.left_pairs.windows(2).all(|w| w[1] - w[0] == 11));
        assert_eq!(run.left_pairs[0], 0);
        let expected = (20..1000).filter(|b| b % 11 == 0).count() as u64;
        assert_eq!(run.stats.true_coincidences, expected);
        assert_eq!(run.stats.false_coincidences, 0);
        assert_eq!(run.stats.timeouts, 0);
        assert_eq!(run.stats.resets, 0);
    }

    #[test]
    fn dead_link_never_pairs() {
        let cfg = SimConfig::with_side_probability(0.0, 5, 10_000, 1, SimMode::Omniscient);
        let run = des_run(&cfg).unwrap();
        assert_eq!(run.stats.coincidences(), 0);
        assert_eq!(run.stats.open_occupancy, 1.0);
        assert_eq!(run.stats.infidelity_estimate, None);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = SimConfig::with_side_probability(0.2, 7, 200_000, 42, SimMode::Literal);
        cfg.p_dc = 1e-3;
        cfg.beta_qd = 0.5;
        let a = des_run(&cfg).unwrap();
        let b = des_run(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(des_run(&cfg).unwrap().stats, a.stats);
    }

    #[test]
    fn omniscient_pairs_are_symmetric() {
        let cfg = SimConfig::with_side_probability(0.3, 9, 300_000, 5, SimMode::Omniscient);
        let run = des_run(&cfg).unwrap();
        assert_eq!(run.left_pairs, run.right_pairs);
        assert_eq!(run.stats.one_sided_confirmations, 0);
        assert_eq!(run.stats.resets + run.stats.timeouts > 0, true);
    }

    #[test]
    fn omniscient_occupancy_matches_chain() {
        for (p, n) in [(0.3, 4u64), (0.05, 30), (0.8, 12)] {
            let cfg = SimConfig::with_side_probability(p, n, 2_000_000, 9, SimMode::Omniscient);
            let s = des_run(&cfg).unwrap().stats;
            let pi0 = pi0_closed_form(n as usize, p).unwrap();
            assert!(
                (s.open_occupancy - pi0).abs() < 3.0 * s.open_occupancy_se,
                "p={p} n={n} occ={} pi0={pi0} se={}",
                s.open_occupancy,
                s.open_occupancy_se
            );
        }
    }

    #[test]
    fn counts_are_consistent() {
        let mut cfg = SimConfig::with_side_probability(0.1, 20, 500_000, 3, SimMode::Literal);
        cfg.p_dc = 1e-2;
        cfg.beta_qd = 0.5;
        let s = des_run(&cfg).unwrap().stats;
        let left = s.left_true_heralds + s.left_false_heralds;
        let right = s.right_true_heralds + s.right_false_heralds;
        assert!(s.coincidences() <= left.min(right));
        assert!((0.0..=1.0).contains(&s.open_occupancy));
    }

    #[test]
    fn no_dark_counts_means_perfect_pairs() {
        let cfg = SimConfig::with_side_probability(0.2, 5, 200_000, 8, SimMode::Literal);
        let s = des_run(&cfg).unwrap().stats;
        assert!(s.true_coincidences > 0);
        assert_eq!(s.false_coincidences, 0);
        assert_eq!(s.infidelity_estimate, Some(0.0));
    }

    #[test]
    fn lossless_with_dark_counts_has_no_false_pairs() {
        let mut cfg = SimConfig::with_side_probability(1.0, 3, 100_000, 2, SimMode::Omniscient);
        cfg.p_dc = 1e-3;
        let s = des_run(&cfg).unwrap().stats;
        assert_eq!(s.false_coincidences, 0);
    }

    #[test]
    fn trace_is_capped_and_written() {
        let mut cfg = SimConfig::with_side_probability(1.0, 2, 100, 1, SimMode::Literal);
        cfg.trace_limit = 5;
        let run = des_run(&cfg).unwrap();
        assert_eq!(run.trace.len(), 5);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &run.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cycle,side,event\n0,left,herald_true\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn config_validation() {
        let cfg = SimConfig::with_side_probability(0.5, 10, 20, 1, SimMode::Literal);
        assert!(des_run(&cfg).is_err());
        let cfg = SimConfig::with_side_probability(1.5, 10, 1000, 1, SimMode::Literal);
        assert!(des_run(&cfg).is_err());
        let cfg = SimConfig::with_side_probability(0.5, 0, 1000, 1, SimMode::Literal);
        assert!(des_run(&cfg).is_err());
    }

    #[test]
    fn mpi_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = mpi_reference_run(1.0, 250e-6, 1000, &mut rng).unwrap();
        assert_eq!(s.pairs, 1000);
        assert!((s.rate_hz - 4000.0).abs() < 1e-9);
        let s = mpi_reference_run(0.0, 250e-6, 1000, &mut rng).unwrap();
        assert_eq!(s.pairs, 0);
        let s = mpi_reference_run(1e-4, 250e-6, 10_000_000, &mut rng).unwrap();
        let expected = 0.4;
        let se = (1e7f64 * 1e-4 * (1.0 - 1e-4)).sqrt() / (1e7 * 250e-6);
        assert!((s.rate_hz - expected).abs() < 3.0 * se, "rate={} se={se}", s.rate_hz);
        assert!(mpi_reference_run(0.5, 0.0, 10, &mut rng).is_err());
    }
}
