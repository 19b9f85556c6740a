//! Cycle-driven simulation of the midpoint-source control protocol.
//!
//! Each clock cycle the midpoint source emits one entangled pair and every
//! open receiver tries to swap entanglement with its half. A receiver that
//! heralds closes, holds its spin and announces the bin to the far side; the
//! announcement arrives one transmission delay (`n` cycles) later. The
//! receiver reopens when the far side confirms the same bin, announces a
//! different bin, or the deadline passes.
//!
//! [`des_run`] drives two receivers with messages delivered literally. In
//! [`SimMode::Omniscient`] announcements for bins the far receiver never
//! attempted are dropped, which reproduces the Markov chain in
//! [`crate::markov`] cycle for cycle. Receivers know which bins they skipped,
//! so this rule is local; it is not what a receiver following the plain
//! message rules does, and [`SimMode::Literal`] measures the difference.
//!
//! Randomness: one root seed, one ChaCha stream per side, and exactly
//! [`DRAWS_PER_ATTEMPT`] draws per side per cycle, so the optical outcome of
//! bin `i` at either side is fixed by `(seed, side, i)` alone. Runs in the two
//! modes with the same seed see identical photons.

mod receiver;
mod sim;

pub use receiver::{
    bsm_attempt_sample, receiver_step, ClassicalMessage, HeraldKind, HeraldRecord, ReceiverState, Resolution,
    Side, StepOutcome, DRAWS_PER_ATTEMPT,
};
pub use sim::{
    des_run, estimate_infidelity, mpi_reference_run, write_trace_csv, MpiStats, SimConfig, SimMode, SimRun,
    SimStats, TraceEvent, TraceKind, BATCHES,
};
