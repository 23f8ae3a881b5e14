//! Deterministic discrete-event simulator of 802.11b-style medium access.

pub mod dcf;
pub mod engine;
pub mod error;
pub mod ext;
pub mod fair;
pub mod frame;
pub mod harness;
pub mod network;
pub mod pcf;
pub mod phy;
pub mod rate;
pub mod scenario;
pub mod station;

pub use error::{Error, Result};
