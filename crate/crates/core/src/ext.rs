//! DCF extensions: the ACK that doubles as a reverse-direction RTS, traffic
//! categories with per-category AIFS and persistence factor, and exposed-node
//! parallel transmission.

use crate::dcf::Timing;
use crate::engine::Micros;
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind, NodeIdx};
use crate::phy::{airtime, max_payload_within, Rate};

/// NAV on the ACK closing an inbound DATA. Zero when there is nothing to
/// send back; otherwise it covers CTS, the reverse DATA and its ACK.
pub fn dcfplus_ack_duration(reverse_bytes: Option<u64>, rate: Rate, timing: &Timing) -> Micros {
    match reverse_bytes {
        None => 0,
        Some(b) => 3 * timing.sifs + timing.cts_time() + airtime(b, rate) + timing.ack_time(),
    }
}

/// Whether the reverse exchange may ride on an ACK. Fragmented inbound
/// traffic and reverse packets that would need fragmenting are excluded.
pub fn dcfplus_allowed(inbound: &Frame, reverse_bytes: u64, frag_threshold: u64) -> bool {
    let fragmented = inbound.more_fragments
        || inbound.fragment_number > 0
        || inbound
            .packet
            .is_some_and(|p| p.offset > 0 || p.total > inbound.payload_bytes);
    !fragmented && reverse_bytes <= frag_threshold
}

pub const MAX_CATEGORIES: usize = 8;

/// Contention parameters of one traffic category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryConfig {
    pub aifs: Micros,
    pub cw_min: u32,
    pub cw_max: u32,
    pub pf: f64,
}

impl CategoryConfig {
    /// A category indistinguishable from plain DCF.
    pub fn legacy(timing: &Timing, cw_min: u32, cw_max: u32) -> Self {
        CategoryConfig {
            aifs: timing.difs,
            cw_min,
            cw_max,
            pf: 2.0,
        }
    }

    pub fn validate(&self, timing: &Timing) -> Result<()> {
        if self.aifs < timing.difs {
            return Err(Error::Config(format!(
                "AIFS {} us is shorter than DIFS {} us",
                self.aifs, timing.difs
            )));
        }
        if !(self.pf >= 1.0) {
            return Err(Error::Config(format!(
                "persistence factor {} is below 1",
                self.pf
            )));
        }
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return Err(Error::Config(format!(
                "category window bounds {}..{} are invalid",
                self.cw_min, self.cw_max
            )));
        }
        Ok(())
    }
}

pub fn validate_categories(cats: &[CategoryConfig], timing: &Timing) -> Result<()> {
    if cats.is_empty() || cats.len() > MAX_CATEGORIES {
        return Err(Error::Config(format!(
            "a node needs between 1 and {MAX_CATEGORIES} traffic categories, got {}",
            cats.len()
        )));
    }
    cats.iter().try_for_each(|c| c.validate(timing))
}

/// Window growth after a collision, real or virtual.
pub fn expand_cw(cw: u32, pf: f64, cw_max: u32) -> u32 {
    ((cw as f64 * pf).round() as u32).min(cw_max)
}

/// Picks the winner among categories whose backoff hit zero in the same
/// slot: lowest AIFS, then lowest category id. Returns `(winner, losers)`.
pub fn edcf_contend(ready: &[(usize, Micros)]) -> Option<(usize, Vec<usize>)> {
    let &(winner, _) = ready.iter().min_by_key(|&&(id, aifs)| (aifs, id))?;
    let losers = ready
        .iter()
        .map(|&(id, _)| id)
        .filter(|&id| id != winner)
        .collect();
    Some((winner, losers))
}

/// Exposed-node detection state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IcaState {
    pub overheard_rts: Option<OverheardRts>,
    pub cts_timeout_at: Option<Micros>,
    pub exposed: bool,
    pub parallel_budget_end: Option<Micros>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheardRts {
    pub sender: NodeIdx,
    pub receiver: NodeIdx,
    pub duration: Micros,
    pub heard_at: Micros,
}

impl OverheardRts {
    /// End of the primary DATA frame implied by the RTS reservation.
    pub fn data_end(&self, timing: &Timing) -> Micros {
        (self.heard_at + self.duration).saturating_sub(timing.sifs + timing.ack_time())
    }
}

/// Updates detection state for a frame decoded by a non-addressee.
/// `cts_timeout` is measured from the end of the RTS.
pub fn ica_on_overhear(state: &mut IcaState, frame: &Frame, now: Micros, cts_timeout: Micros) {
    match frame.kind {
        FrameKind::Rts => {
            if let Some(receiver) = frame.dst {
                state.overheard_rts = Some(OverheardRts {
                    sender: frame.src,
                    receiver,
                    duration: frame.duration,
                    heard_at: now,
                });
                state.cts_timeout_at = Some(now + cts_timeout);
                state.exposed = false;
                state.parallel_budget_end = None;
            }
        }
        FrameKind::Cts => {
            state.overheard_rts = None;
            state.cts_timeout_at = None;
            state.exposed = false;
            state.parallel_budget_end = None;
        }
        _ => {}
    }
}

/// Called when the CTS timeout elapses. Returns true if the node is now
/// exposed.
pub fn ica_on_timeout(state: &mut IcaState, now: Micros, timing: &Timing) -> bool {
    match (state.overheard_rts, state.cts_timeout_at) {
        (Some(rts), Some(at)) if now >= at => {
            state.exposed = true;
            state.cts_timeout_at = None;
            state.parallel_budget_end = Some(rts.data_end(timing));
            true
        }
        _ => false,
    }
}

/// Fragment sizes for a parallel transmission starting at `now` that ends
/// no later than the primary DATA. Each fragment after the first follows
/// the previous one's ACK. `None` if not even a `min_fragment` fits.
pub fn ica_plan_parallel(
    state: &IcaState,
    remaining: u64,
    frag_threshold: u64,
    rate: Rate,
    now: Micros,
    timing: &Timing,
    min_fragment: u64,
) -> Option<Vec<u64>> {
    if !state.exposed || remaining == 0 {
        return None;
    }
    let end = state.parallel_budget_end?;
    if now >= end {
        return None;
    }
    let fit = max_payload_within(end - now, rate);
    let size = frag_threshold.min(remaining).min(fit);
    if size == 0 || (size < min_fragment && size < remaining) {
        return None;
    }
    let mut sizes = Vec::new();
    let mut t = now;
    let mut left = remaining;
    while left > 0 {
        let f = size.min(left);
        if t + airtime(f, rate) > end {
            break;
        }
        sizes.push(f);
        left -= f;
        t += airtime(f, rate) + 2 * timing.sifs + timing.ack_time();
    }
    (!sizes.is_empty()).then_some(sizes)
}
