//! Fairness-oriented backoff schemes and the fairness index.
//!
//! Shared-window MILD backoff, the estimation-based window adjustment, the
//! SCFQ tag arithmetic with a centralized reference scheduler, and the
//! packet-size driven backoff interval used by distributed fair scheduling.

use std::collections::VecDeque;

use crate::engine::{Micros, RandomStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MildOutcome {
    Collision,
    Success,
}

pub const MILD_FACTOR: f64 = 1.5;

pub fn mild_update(cw: u32, outcome: MildOutcome, factor: f64, cw_min: u32, cw_max: u32) -> u32 {
    match outcome {
        MildOutcome::Collision => ((cw as f64 * factor).round() as u32).min(cw_max),
        MildOutcome::Success => cw.saturating_sub(1).max(cw_min),
    }
}

/// Copy semantics: the advertised window replaces the local one.
pub fn share_cw_on_hear(_local_cw: u32, advertised_cw: u32) -> u32 {
    advertised_cw
}

/// How pairwise ratios are folded into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FairnessReading {
    /// Minimum over pairs; 1 only when every normalized share is equal.
    #[default]
    WorstPair,
    /// Maximum over pairs.
    BestPair,
}

pub fn fairness_index(shares: &[f64], throughputs: &[f64]) -> Result<f64> {
    fairness_index_with(shares, throughputs, FairnessReading::WorstPair)
}

/// Pairwise ratio `min(x_i, x_j) / max(x_i, x_j)` over normalized
/// throughputs `x_i = W_i / phi_i`. A zero entry next to a non-zero one
/// gives a ratio of 0.
pub fn fairness_index_with(
    shares: &[f64],
    throughputs: &[f64],
    reading: FairnessReading,
) -> Result<f64> {
    if shares.len() < 2 || shares.len() != throughputs.len() {
        return Err(Error::FairnessArity);
    }
    if let Some(&bad) = shares.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::InvalidShare(bad));
    }
    if throughputs.iter().all(|&w| w == 0.0) {
        return Err(Error::AllZeroThroughput);
    }
    let norm: Vec<f64> = throughputs.iter().zip(shares).map(|(w, p)| w / p).collect();
    let mut acc = match reading {
        FairnessReading::WorstPair => f64::INFINITY,
        FairnessReading::BestPair => 0.0,
    };
    for i in 0..norm.len() {
        for j in i + 1..norm.len() {
            let (a, b) = (norm[i], norm[j]);
            let hi = a.max(b);
            let ratio = if hi == 0.0 { 1.0 } else { a.min(b) / hi };
            acc = match reading {
                FairnessReading::WorstPair => acc.min(ratio),
                FairnessReading::BestPair => acc.max(ratio),
            };
        }
    }
    Ok(acc)
}

/// Sliding-window record of own and overheard delivered bits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficEstimate {
    pub window: Micros,
    own: VecDeque<(Micros, u64)>,
    others: VecDeque<(Micros, u64)>,
    own_bits: u64,
    other_bits: u64,
}

impl TrafficEstimate {
    pub fn new(window: Micros) -> Self {
        TrafficEstimate {
            window,
            own: VecDeque::new(),
            others: VecDeque::new(),
            own_bits: 0,
            other_bits: 0,
        }
    }

    pub fn record_own(&mut self, now: Micros, bits: u64) {
        self.own.push_back((now, bits));
        self.own_bits += bits;
    }

    /// Traffic inferred from a CTS or ACK neither sent by nor addressed to
    /// this node.
    pub fn record_other(&mut self, now: Micros, bits: u64) {
        self.others.push_back((now, bits));
        self.other_bits += bits;
    }

    fn expire(&mut self, now: Micros) {
        let window = self.window;
        let stale = |t: Micros| t + window <= now;
        while let Some(&(t, b)) = self.own.front() {
            if !stale(t) {
                break;
            }
            self.own.pop_front();
            self.own_bits -= b;
        }
        while let Some(&(t, b)) = self.others.front() {
            if !stale(t) {
                break;
            }
            self.others.pop_front();
            self.other_bits -= b;
        }
    }

    /// `(W_self, W_others)` over the window ending at `now`.
    pub fn totals(&mut self, now: Micros) -> (u64, u64) {
        self.expire(now);
        (self.own_bits, self.other_bits)
    }
}

/// Doubles the window when this node is ahead of its share, halves it when
/// behind, and leaves it alone on an exact tie.
pub fn estimation_backoff_update(
    cw: u32,
    w_self: u64,
    w_others: u64,
    phi_self: f64,
    cw_min: u32,
    cw_max: u32,
) -> u32 {
    let mine = w_self as f64 / phi_self;
    let theirs = w_others as f64 / (1.0 - phi_self);
    if mine > theirs {
        cw.saturating_mul(2).min(cw_max)
    } else if mine < theirs {
        (cw / 2).max(cw_min)
    } else {
        cw
    }
}

/// Start/finish tag bookkeeping for self-clocked fair queueing.
#[derive(Debug, Clone, PartialEq)]
pub struct ScfqTags {
    phi: Vec<f64>,
    prev_finish: Vec<f64>,
}

impl ScfqTags {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = phi.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::InvalidShare(bad));
        }
        let n = phi.len();
        Ok(ScfqTags {
            phi,
            prev_finish: vec![0.0; n],
        })
    }

    pub fn prev_finish(&self, flow: usize) -> f64 {
        self.prev_finish[flow]
    }

    /// Returns `(S, F)` for a packet of `bits` arriving at virtual time
    /// `arrival_v` on `flow`.
    pub fn assign(&mut self, flow: usize, bits: f64, arrival_v: f64) -> (f64, f64) {
        let s = arrival_v.max(self.prev_finish[flow]);
        let f = s + bits / self.phi[flow];
        self.prev_finish[flow] = f;
        (s, f)
    }
}

/// One flow's input to the reference scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFlow {
    pub phi: f64,
    /// Packet lengths in bits, in arrival order.
    pub packets: Vec<f64>,
}

/// Centralized SCFQ service order for flows whose packets are all queued at
/// time zero. Returns `(flow, packet index)` pairs. Finish tags within a
/// relative 1e-9 are treated as equal and broken by flow id, then arrival.
pub fn scfq_oracle(flows: &[OracleFlow]) -> Result<Vec<(usize, usize)>> {
    let mut tags = ScfqTags::new(flows.iter().map(|f| f.phi).collect())?;
    let mut heads = vec![0usize; flows.len()];
    let mut head_tag: Vec<Option<f64>> = vec![None; flows.len()];
    let mut order = Vec::new();
    loop {
        for (i, f) in flows.iter().enumerate() {
            if head_tag[i].is_none() && heads[i] < f.packets.len() {
                // Everything arrived at virtual time zero.
                head_tag[i] = Some(tags.assign(i, f.packets[heads[i]], 0.0).1);
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, tag) in head_tag.iter().enumerate() {
            if let Some(t) = *tag {
                let better = match best {
                    None => true,
                    Some((_, bt)) => t < bt && !tags_equal(t, bt),
                };
                if better {
                    best = Some((i, t));
                }
            }
        }
        let Some((flow, _)) = best else { break };
        order.push((flow, heads[flow]));
        heads[flow] += 1;
        head_tag[flow] = None;
    }
    Ok(order)
}

fn tags_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Multiplier with mean 1 used to randomize the fair-share backoff.
pub fn dfs_multiplier(stream: &mut RandomStream) -> f64 {
    0.5 + stream.uniform_f64()
}

/// Backoff slots for a packet of `l_bits` at share `phi`: the linear
/// interval `floor(scaling * L / phi)`, scaled by `u`, then logarithmically
/// compressed above `compress_threshold`.
pub fn dfs_backoff(
    l_bits: u64,
    phi: f64,
    scaling: f64,
    u: f64,
    compress_threshold: Option<u64>,
) -> u64 {
    let base = (scaling * l_bits as f64 / phi + 1e-9).floor();
    let b = (base * u + 1e-9).floor() as u64;
    match compress_threshold {
        Some(c) if c > 0 && b > c => {
            let cf = c as f64;
            c + (cf * (b as f64 / cf).log2()).floor() as u64
        }
        _ => b,
    }
}

/// Scaling that maps a maximum-size packet at share 1 to `cw_min` slots.
pub fn default_dfs_scaling(max_packet_bytes: u64, cw_min: u32) -> f64 {
    cw_min as f64 / (max_packet_bytes.max(1) * 8) as f64
}
