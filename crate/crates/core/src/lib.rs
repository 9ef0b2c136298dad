//! Packet-level simulator of one ECN bottleneck shared by DCTCP,
//! Prague-like and ECN-CUBIC senders.
//!
//! The pieces, bottom up: [`engine`] (clock, event queue, seeded RNG),
//! [`aqm`] (FIFO with step or ramp marking on sojourn or expected service
//! time), [`alpha`] (fixed-point DCTCP average), [`prr`], [`cca`],
//! [`sender`] (ack clocking and TSO bursts), then [`scenario`], [`sim`],
//! [`sweep`] and [`output`] for running experiments.

pub mod aqm;
pub mod alpha;
pub mod cca;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod output;
pub mod prr;
pub mod scenario;
pub mod sender;
pub mod sim;
pub mod sweep;
pub mod variant;

pub use error::{Result, SimError};
