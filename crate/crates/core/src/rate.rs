//! Rate selection: sender-driven auto rate fallback, receiver-selected rates
//! carried in CTS, and opportunistic multi-packet bursts.

use crate::dcf::Timing;
use crate::engine::Micros;
use crate::error::{Error, Result};
use crate::frame::{Frame, RateInfo};
use crate::phy::{airtime, Quality, Rate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArfConfig {
    /// Time after a downgrade at which the next attempt probes one rate up.
    pub recovery: Micros,
    /// Consecutive ACKs that trigger an upgrade.
    pub success_threshold: u32,
    pub initial: Rate,
}

impl Default for ArfConfig {
    fn default() -> Self {
        ArfConfig {
            recovery: 60_000,
            success_threshold: 10,
            initial: Rate::R11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArfResult {
    Ack,
    NoAck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArfState {
    pub current_rate: Rate,
    pub consecutive_successes: u32,
    pub consecutive_failures: u32,
    /// Deadline of the recovery timer, if running.
    pub recovery_deadline: Option<Micros>,
    pub just_upgraded: bool,
}

impl ArfState {
    pub fn new(initial: Rate) -> Self {
        ArfState {
            current_rate: initial,
            consecutive_successes: 0,
            consecutive_failures: 0,
            recovery_deadline: None,
            just_upgraded: false,
        }
    }

    /// Rate for an attempt starting at `now`. Fires the recovery timer if it
    /// has expired.
    pub fn rate_at(&mut self, now: Micros) -> Rate {
        if let Some(deadline) = self.recovery_deadline {
            if now >= deadline {
                self.upgrade();
            }
        }
        self.current_rate
    }

    fn upgrade(&mut self) {
        self.recovery_deadline = None;
        self.consecutive_successes = 0;
        self.consecutive_failures = 0;
        if self.current_rate != Rate::R11 {
            self.current_rate = self.current_rate.step_up();
            self.just_upgraded = true;
        }
    }

    fn downgrade(&mut self, now: Micros, cfg: &ArfConfig) {
        self.current_rate = self.current_rate.step_down();
        self.consecutive_failures = 0;
        self.consecutive_successes = 0;
        self.just_upgraded = false;
        self.recovery_deadline = Some(now + cfg.recovery);
    }
}

/// Feeds one ACK outcome into the fallback state and returns the rate for
/// the next attempt.
pub fn arf_on_result(
    state: &mut ArfState,
    result: ArfResult,
    now: Micros,
    cfg: &ArfConfig,
) -> Rate {
    match result {
        ArfResult::Ack => {
            state.just_upgraded = false;
            state.consecutive_failures = 0;
            state.consecutive_successes += 1;
            if state.consecutive_successes >= cfg.success_threshold {
                state.upgrade();
            }
        }
        ArfResult::NoAck => {
            state.consecutive_successes = 0;
            if state.just_upgraded {
                state.downgrade(now, cfg);
            } else {
                state.consecutive_failures += 1;
                if state.consecutive_failures >= 2 {
                    state.downgrade(now, cfg);
                }
            }
        }
    }
    state.rate_at(now)
}

/// Receiver-side rate choice from the observed link state.
pub fn rbar_select_rate(quality: Quality) -> Rate {
    quality.max_rate()
}

pub fn rbar_needs_rsh(tentative: Rate, selected: Rate) -> bool {
    tentative != selected
}

/// Reservation a third party derives from rate/size fields. `after_cts` is
/// true when the frame heard was the CTS rather than the RTS.
pub fn rbar_reservation(info: RateInfo, timing: &Timing, after_cts: bool) -> Micros {
    let tail = timing.sifs + airtime(info.size, info.rate) + timing.sifs + timing.ack_time();
    if after_cts {
        tail
    } else {
        timing.sifs + timing.cts_time() + tail
    }
}

/// Base rate anchoring burst accounting.
pub const OAR_BASE: Rate = Rate::R2;

pub fn oar_burst_len(selected: Rate, base: Rate) -> usize {
    ((selected.mbps() / base.mbps()).floor() as usize).max(1)
}

/// Flags a burst: more-fragments on all but the last, fragment number 0.
pub fn oar_mark_burst(frames: &mut [Frame]) -> Result<()> {
    if let Some(first) = frames.first() {
        let dst = first.dst;
        if frames.iter().any(|f| f.dst != dst) {
            return Err(Error::MixedDestinations);
        }
    }
    let n = frames.len();
    for (i, f) in frames.iter_mut().enumerate() {
        f.more_fragments = i + 1 < n;
        f.fragment_number = 0;
    }
    Ok(())
}

/// Number of packets (given by size) that fit in one burst at `selected`:
/// at most [`oar_burst_len`] and, when `temporal_cap` is set, no more total
/// DATA airtime than one `max_packet` frame at the base rate.
pub fn oar_burst_count(
    sizes: &[u64],
    selected: Rate,
    max_packet: u64,
    temporal_cap: bool,
) -> usize {
    let limit = oar_burst_len(selected, OAR_BASE);
    let budget = airtime(max_packet, OAR_BASE);
    let mut used = 0;
    let mut n = 0;
    for &s in sizes.iter().take(limit) {
        let t = airtime(s, selected);
        if temporal_cap && n > 0 && used + t > budget {
            break;
        }
        used += t;
        n += 1;
    }
    n.max(1).min(sizes.len().max(1))
}

/// Rate selection plug-in attached to a station.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum RateScheme {
    #[default]
    Fixed,
    Arf(ArfConfig),
    Rbar,
    Oar {
        temporal_cap: bool,
    },
}

impl RateScheme {
    /// Schemes that need the receiver's CTS to learn the rate.
    pub fn receiver_based(&self) -> bool {
        matches!(self, RateScheme::Rbar | RateScheme::Oar { .. })
    }
}
