//! Software gateway between event-based sensors and a SpiNNaker board.
//!
//! The crate is split along the signal path:
//!
//! * [`aer`]: address-event records, SpiNNaker multicast packets, routing.
//! * [`link`]: the 2-of-7 NRZ asynchronous link with transition handshaking.
//! * [`rate`]: value ↔ frequency ↔ period conversion and spike trains.
//! * [`neuron`] and [`network`]: a deterministic stand-in for the board.
//! * [`gateway`]: the sensor-side state machine, PC control channel and display.
//! * [`experiment`]: the closed-loop driver and its artifacts.
//! * [`sweep`]: batch runs over many configurations.

pub mod aer;
pub mod config;
pub mod experiment;
pub mod gateway;
pub mod link;
pub mod network;
pub mod neuron;
pub mod par;
pub mod rate;
pub mod sweep;
