//! Slot-level simulator for an OFDMA downlink dense heterogeneous network.
//!
//! The crate models base-station on/off operation, user association,
//! subcarrier assignment and power allocation under per-user queue
//! dynamics, and compares three control schemes:
//!
//! - `load-aware`: per-slot drift-plus-penalty minimisation of
//!   `V * total_power - sum(queue * rate)` with slow-timescale BS toggling,
//! - `greedy-off`: utilisation-threshold switch-off with nearest-BS association,
//! - `fixed`: everything on, static round-robin allocation.
//!
//! Module map:
//!
//! - [`scenario`]: deployment geometry, BS fleet, user points, scenario files.
//! - [`traffic`]: arrival profiles, arrival draws and the queue recursion.
//! - [`phy`]: channel gains, SINR, rates and the BS power-consumption model.
//! - [`control`]: slot decisions, constraint checks and the three schemes.
//! - [`sim`]: the slot loop, run metrics, sweeps and CSV/JSON output.
//! - [`cli`]: experiment configuration and the command implementations.

pub mod cli;
pub mod control;
pub mod phy;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use control::{ControlConfig, Scheme, SlotDecision};
pub use phy::{ChannelModel, Gains, PowerModel};
pub use scenario::{BaseStation, BsTier, DensityTier, Point, Scenario, UserPoint};
pub use sim::{NetworkState, RunMetrics};
