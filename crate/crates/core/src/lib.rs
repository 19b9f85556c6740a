//! Rate models and protocol simulation for heralded entanglement links.
//!
//! The crate compares two ways of entangling a pair of distant quantum-dot
//! spins over optical fiber:
//!
//! * midpoint interference, where both dots send photons to one central
//!   Bell-state measurement and wait a full round trip per attempt, and
//! * midpoint source, where a central entangled-pair source feeds a local
//!   Bell-state measurement at each end every clock cycle.
//!
//! Modules, bottom up:
//!
//! * [`optics`]: loss budgets in dB, detection probabilities, dark counts and
//!   the infidelity they cause.
//! * [`analytic`]: closed-form rates for both layouts.
//! * [`markov`]: the protocol's Markov chain and its stationary distribution.
//! * [`protocol`]: a cycle-by-cycle simulation of the two receivers.
//!
//! The guide in `book/` walks through each of these; its code listings are
//! compiled and run as doctests of this crate.

pub mod analytic;
pub mod error;
pub mod markov;
pub mod optics;
pub mod protocol;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/loss-budgets.md")]
    mod loss_budgets {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/markov-chain.md")]
    mod markov_chain {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/dark-counts.md")]
    mod dark_counts {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
