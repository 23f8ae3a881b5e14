use thiserror::Error;

use crate::engine::Micros;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Contract violations and invalid inputs surfaced by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot schedule at {at} us: clock is already at {now} us")]
    ScheduleInPast { at: Micros, now: Micros },
    #[error("empty range [{lo}, {hi}]")]
    EmptyRange { lo: u64, hi: u64 },
    #[error("unsupported rate {0} Mbps (expected 1, 2, 5.5 or 11)")]
    UnsupportedRate(f64),
    #[error("transition matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("fair share must be positive, got {0}")]
    InvalidShare(f64),
    #[error("fairness index needs at least two entries with matching lengths")]
    FairnessArity,
    #[error("fairness index is undefined when every throughput is zero")]
    AllZeroThroughput,
    #[error("burst frames must share one destination")]
    MixedDestinations,
    #[error("invalid configuration: {0}")]
    Config(String),
}
