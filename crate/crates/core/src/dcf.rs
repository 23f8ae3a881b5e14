//! Distributed coordination function primitives: inter-frame spaces, binary
//! exponential backoff, NAV arithmetic, the RTS and fragmentation decisions,
//! and reservation durations for the 4-way and 2-way handshakes.
//!
//! The stateful per-node machine built on these lives in [`crate::station`].

use crate::engine::{Micros, RandomStream};
use crate::error::{Error, Result};
use crate::phy::{airtime, Rate};

pub const RTS_BYTES: u64 = 20;
pub const CTS_BYTES: u64 = 14;
pub const ACK_BYTES: u64 = 14;
pub const BEACON_BYTES: u64 = 40;
pub const CF_POLL_BYTES: u64 = 20;
pub const CF_END_BYTES: u64 = 20;
pub const CF_ACK_BYTES: u64 = 14;
/// Reservation sub-header prepended to DATA when a rate changes.
pub const RSH_BYTES: u64 = 10;

/// Rate used for every control and management frame.
pub const CONTROL_RATE: Rate = Rate::R1;

pub const CW_MIN: u32 = 16;
pub const CW_MAX: u32 = 256;
pub const RETRY_LIMIT: u32 = 7;

/// Inter-frame spaces and slot length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub slot: Micros,
    pub sifs: Micros,
    pub pifs: Micros,
    pub difs: Micros,
}

impl Default for Timing {
    fn default() -> Self {
        Timing::from_slot_sifs(20, 10)
    }
}

impl Timing {
    /// PIFS = SIFS + slot, DIFS = SIFS + 2 slots.
    pub fn from_slot_sifs(slot: Micros, sifs: Micros) -> Self {
        Timing {
            slot,
            sifs,
            pifs: sifs + slot,
            difs: sifs + 2 * slot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot == 0 || !(self.sifs < self.pifs && self.pifs < self.difs) {
            return Err(Error::Config(format!(
                "inter-frame spaces must satisfy SIFS < PIFS < DIFS with a non-zero slot, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn rts_time(&self) -> Micros {
        airtime(RTS_BYTES, CONTROL_RATE)
    }

    pub fn cts_time(&self) -> Micros {
        airtime(CTS_BYTES, CONTROL_RATE)
    }

    pub fn ack_time(&self) -> Micros {
        airtime(ACK_BYTES, CONTROL_RATE)
    }

    /// Latest instant, relative to the end of an RTS, by which a CTS must
    /// have been fully received.
    pub fn cts_timeout(&self) -> Micros {
        self.sifs + self.cts_time() + self.slot
    }

    /// Same as [`Timing::cts_timeout`] for the ACK after DATA.
    pub fn ack_timeout(&self) -> Micros {
        self.sifs + self.ack_time() + self.slot
    }

    /// NAV carried by an RTS protecting one DATA frame of airtime `data`.
    pub fn rts_duration(&self, data: Micros) -> Micros {
        3 * self.sifs + self.cts_time() + data + self.ack_time()
    }

    /// NAV carried by the CTS answering an RTS with duration `rts_duration`.
    pub fn cts_duration(&self, rts_duration: Micros) -> Micros {
        rts_duration.saturating_sub(self.sifs + self.cts_time())
    }

    /// NAV carried by a DATA frame. `next` is the airtime of the following
    /// fragment or burst frame, if any.
    pub fn data_duration(&self, next: Option<Micros>) -> Micros {
        let own = self.sifs + self.ack_time();
        match next {
            Some(d) => own + 2 * self.sifs + d + self.ack_time(),
            None => own,
        }
    }

    /// NAV carried by the ACK answering a DATA frame with `data_duration`.
    pub fn ack_duration(&self, data_duration: Micros) -> Micros {
        data_duration.saturating_sub(self.sifs + self.ack_time())
    }

    /// Longest possible single DCF exchange: DIFS, a full backoff window,
    /// RTS, CTS, a maximum DATA frame and its ACK, and three SIFS gaps.
    pub fn max_exchange(&self, cw_max: u32, max_data: Micros) -> Micros {
        self.difs
            + (cw_max as Micros - 1) * self.slot
            + self.rts_time()
            + self.cts_time()
            + max_data
            + self.ack_time()
            + 3 * self.sifs
    }
}

/// Result of one transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxOutcome {
    Success,
    Failure,
}

/// Binary exponential backoff: double on failure up to `CW_MAX`, reset to
/// `CW_MIN` on success.
pub fn cw_after(cw: u32, outcome: TxOutcome) -> u32 {
    cw_after_bounded(cw, outcome, CW_MIN, CW_MAX)
}

pub fn cw_after_bounded(cw: u32, outcome: TxOutcome, cw_min: u32, cw_max: u32) -> u32 {
    match outcome {
        TxOutcome::Failure => cw.saturating_mul(2).min(cw_max),
        TxOutcome::Success => cw_min,
    }
}

/// Backoff slots drawn uniformly from `[0, cw - 1]`.
pub fn draw_backoff(cw: u32, stream: &mut RandomStream) -> u32 {
    let hi = cw.max(1) as u64 - 1;
    stream
        .uniform_int(0, hi)
        .expect("backoff window is never empty") as u32
}

/// NAV only ever extends: a shorter reservation never cuts an existing one.
pub fn nav_merge(nav_until: Micros, heard_duration: Micros, now: Micros) -> Micros {
    nav_until.max(now + heard_duration)
}

/// RTS/CTS is used for frames at or above the threshold.
pub fn should_use_rts(payload_bytes: u64, rts_threshold: u64) -> bool {
    payload_bytes >= rts_threshold
}

/// One MAC fragment of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fragment {
    pub size: u64,
    pub more_fragments: bool,
    pub number: u32,
}

/// Splits `payload_bytes` into `ceil(payload / threshold)` fragments. A zero
/// byte payload still yields one (empty) fragment.
pub fn fragment_plan(payload_bytes: u64, frag_threshold: u64) -> Vec<Fragment> {
    let threshold = frag_threshold.max(1);
    if payload_bytes == 0 {
        return vec![Fragment {
            size: 0,
            more_fragments: false,
            number: 0,
        }];
    }
    let count = payload_bytes.div_ceil(threshold);
    (0..count)
        .map(|i| {
            let size = if i + 1 == count {
                payload_bytes - threshold * (count - 1)
            } else {
                threshold
            };
            Fragment {
                size,
                more_fragments: i + 1 < count,
                number: i as u32,
            }
        })
        .collect()
}

/// Per-node MAC parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MacParams {
    pub timing: Timing,
    pub rts_threshold: u64,
    pub frag_threshold: u64,
    pub retry_limit: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Data rate when no rate adaptation is configured.
    pub data_rate: Rate,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            timing: Timing::default(),
            rts_threshold: 500,
            frag_threshold: 2346,
            retry_limit: RETRY_LIMIT,
            cw_min: CW_MIN,
            cw_max: CW_MAX,
            data_rate: Rate::R11,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return Err(Error::Config(format!(
                "cw_min {} must be positive and at most cw_max {}",
                self.cw_min, self.cw_max
            )));
        }
        if self.frag_threshold == 0 {
            return Err(Error::Config("frag_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cw_examples() {
        assert_eq!(cw_after(16, TxOutcome::Failure), 32);
        assert_eq!(cw_after(256, TxOutcome::Failure), 256);
        assert_eq!(cw_after(128, TxOutcome::Success), 16);
    }

    #[test]
    fn cw_stays_in_power_of_two_set() {
        let mut cw = CW_MIN;
        for _ in 0..10 {
            cw = cw_after(cw, TxOutcome::Failure);
            assert!([16, 32, 64, 128, 256].contains(&cw));
        }
    }

    #[test]
    fn backoff_degenerate_window() {
        let mut s = RandomStream::new(1, 1);
        assert_eq!(draw_backoff(1, &mut s), 0);
    }

    #[test]
    fn backoff_mean_for_cw16() {
        let mut s = RandomStream::new(2024, 5);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            let b = draw_backoff(16, &mut s);
            assert!(b <= 15);
            sum += b as u64;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 7.5).abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn nav_examples() {
        assert_eq!(nav_merge(0, 500, 100), 600);
        assert_eq!(nav_merge(1000, 200, 100), 1000);
        assert_eq!(nav_merge(600, 0, 100), 600);
    }

    #[test]
    fn rts_threshold_is_inclusive() {
        assert!(!should_use_rts(100, 500));
        assert!(should_use_rts(500, 500));
        assert!(should_use_rts(1500, 500));
    }

    fn plan(p: u64, t: u64) -> Vec<(u64, u8, u32)> {
        fragment_plan(p, t)
            .into_iter()
            .map(|f| (f.size, f.more_fragments as u8, f.number))
            .collect()
    }

    #[test]
    fn fragment_examples() {
        assert_eq!(plan(3000, 1500), vec![(1500, 1, 0), (1500, 0, 1)]);
        assert_eq!(plan(1000, 1500), vec![(1000, 0, 0)]);
        assert_eq!(
            plan(3001, 1500),
            vec![(1500, 1, 0), (1500, 1, 1), (1, 0, 2)]
        );
    }

    #[test]
    fn default_spaces_are_ordered() {
        let t = Timing::default();
        assert_eq!((t.slot, t.sifs, t.pifs, t.difs), (20, 10, 30, 50));
        t.validate().unwrap();
        assert!(Timing { pifs: 60, ..t }.validate().is_err());
    }

    #[test]
    fn handshake_durations_chain() {
        let t = Timing::default();
        let data = airtime(1500, Rate::R11);
        let rts = t.rts_duration(data);
        assert_eq!(rts, 3 * 10 + 304 + 1283 + 304);
        let cts = t.cts_duration(rts);
        assert_eq!(cts, rts - 10 - 304);
        assert_eq!(t.data_duration(None), 10 + 304);
        assert_eq!(t.ack_duration(t.data_duration(None)), 0);
        assert_eq!(t.cts_timeout(), 10 + 304 + 20);
    }

    proptest! {
        #[test]
        fn fragments_cover_payload(payload in 0u64..20_000, threshold in 1u64..3000) {
            let frags = fragment_plan(payload, threshold);
            let total: u64 = frags.iter().map(|f| f.size).sum();
            prop_assert_eq!(total, payload);
            prop_assert!(frags.iter().all(|f| f.size <= threshold));
            for (i, f) in frags.iter().enumerate() {
                prop_assert_eq!(f.number as usize, i);
                prop_assert_eq!(f.more_fragments, i + 1 < frags.len());
            }
        }

        #[test]
        fn nav_never_shrinks(nav in 0u64..1_000_000, d in 0u64..100_000, now in 0u64..1_000_000) {
            let merged = nav_merge(nav, d, now);
            prop_assert!(merged >= nav);
            prop_assert!(merged >= now + d);
        }

        #[test]
        fn backoff_within_window(cw in 1u32..1024, seed in any::<u64>()) {
            let mut s = RandomStream::new(seed, 0);
            prop_assert!(draw_backoff(cw, &mut s) < cw);
        }
    }
}
