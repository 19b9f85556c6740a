use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optics::BsmVariant;

/// End of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Ground truth behind a double click. Receivers cannot tell these apart;
/// the simulator carries the truth along for bookkeeping only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldKind {
    /// Both photons reached the detectors.
    TrueHerald,
    /// At least one click of the pattern was a dark count.
    FalseHerald,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeraldRecord {
    pub cycle: u64,
    pub side: Side,
    pub kind: HeraldKind,
}

/// Number of uniform draws [`bsm_attempt_sample`] consumes, whatever the outcome.
pub const DRAWS_PER_ATTEMPT: usize = 3;

/// Samples one local BSM attempt.
///
/// The dot photon survives with probability `beta_qd` and the midpoint
/// photon with `beta_ms`. With both present the double click is genuine.
/// With one present a dark count completes an accepted pattern with
/// probability `2·p_dc` per pattern; with none, two dark counts are needed
/// (`p_dc²` per pattern). Always consumes [`DRAWS_PER_ATTEMPT`] draws so that
/// the stream position depends only on the cycle.
pub fn bsm_attempt_sample<R: Rng + ?Sized>(
    rng: &mut R,
    beta_qd: f64,
    beta_ms: f64,
    p_dc: f64,
    variant: BsmVariant,
) -> Option<HeraldKind> {
    let dot: f64 = rng.random();
    let mid: f64 = rng.random();
    let dark: f64 = rng.random();
    let m = variant.dark_count_multiplicity();
    match (dot < beta_qd, mid < beta_ms) {
        (true, true) => Some(HeraldKind::TrueHerald),
        (true, false) | (false, true) => (dark < 2.0 * p_dc * m).then_some(HeraldKind::FalseHerald),
        (false, false) => (dark < p_dc * p_dc * m).then_some(HeraldKind::FalseHerald),
    }
}

/// Controller state of one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiverState {
    /// Exciting the quantum dot every cycle.
    Open,
    /// Holding the spin heralded in `bin` until `deadline = bin + n`.
    Closed { bin: u64, deadline: u64 },
}

impl ReceiverState {
    pub fn is_open(&self) -> bool {
        matches!(self, ReceiverState::Open)
    }
}

/// Success announcement sent to the far receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub origin: Side,
    pub bin: u64,
    /// `bin + n`: one full transmission delay later.
    pub arrival: u64,
    /// Truth of the sender's herald (simulator bookkeeping, not on the wire).
    pub herald: HeraldKind,
}

/// How a closed period ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// The far side announced the same bin: an entangled pair.
    Confirmed {
        bin: u64,
        local: HeraldKind,
        remote: HeraldKind,
    },
    /// The far side announced a different bin.
    Reset { bin: u64, announced: u64 },
    /// No announcement by the deadline.
    Timeout { bin: u64 },
}

/// Result of one controller cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// State for the next cycle.
    pub state: ReceiverState,
    pub outgoing: Option<ClassicalMessage>,
    pub resolution: Option<Resolution>,
    /// Kind of the herald that closed the receiver, kept until resolution.
    pub held: Option<HeraldKind>,
}

/// Advances one receiver by one clock cycle.
///
/// Within a cycle the local attempt comes first (an open receiver that
/// heralds closes and announces the bin), then messages arriving this cycle,
/// then the deadline. A resolution reopens the receiver for the next cycle.
/// `held` is the herald kind the receiver is holding, if closed.
///
/// # Panics
///
/// If a closed receiver is handed a local herald or a message arrives off
/// schedule; both are simulator bugs.
pub fn receiver_step(
    state: ReceiverState,
    held: Option<HeraldKind>,
    side: Side,
    cycle: u64,
    local_herald: Option<HeraldKind>,
    inbox: &[ClassicalMessage],
    n: u64,
) -> StepOutcome {
    let mut outgoing = None;
    let (mut state, mut held) = (state, held);
    if let Some(kind) = local_herald {
        assert!(state.is_open(), "closed receiver cannot herald");
        state = ReceiverState::Closed {
            bin: cycle,
            deadline: cycle + n,
        };
        held = Some(kind);
        outgoing = Some(ClassicalMessage {
            origin: side,
            bin: cycle,
            arrival: cycle + n,
            herald: kind,
        });
    }

    for msg in inbox {
        assert_eq!(msg.arrival, cycle, "message delivered off schedule");
        assert_eq!(msg.origin, side.other(), "message delivered to its sender");
    }

    let mut resolution = None;
    if let ReceiverState::Closed { bin, deadline } = state {
        if let Some(msg) = inbox.iter().find(|m| m.bin == bin) {
            resolution = Some(Resolution::Confirmed {
                bin,
                local: held.expect("closed receiver holds a herald"),
                remote: msg.herald,
            });
        } else if let Some(msg) = inbox.first() {
            resolution = Some(Resolution::Reset {
                bin,
                announced: msg.bin,
            });
        } else if cycle == deadline {
            resolution = Some(Resolution::Timeout { bin });
        }
    }
    if resolution.is_some() {
        state = ReceiverState::Open;
        held = None;
    }
    StepOutcome {
        state,
        outgoing,
        resolution,
        held,
    }
}
