//! Radio medium model.
//!
//! Reachability is geometric: a node decodes frames from senders within
//! `hear_range` and senses energy out to `sense_range`. Received power falls
//! off as `1/d^2` from a unit transmitter and is used only by the capture
//! rule. Propagation delay is zero.

use std::fmt;

use crate::engine::{Micros, RandomStream};
use crate::error::{Error, Result};

/// PLCP preamble plus header: 24 bytes always sent at 1 Mbps.
pub const PLCP_US: Micros = 192;

/// One of the four 802.11b data rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rate {
    R1,
    R2,
    R5_5,
    R11,
}

impl Rate {
    /// All rates in ascending order.
    pub const ALL: [Rate; 4] = [Rate::R1, Rate::R2, Rate::R5_5, Rate::R11];

    pub fn from_mbps(mbps: f64) -> Result<Rate> {
        Rate::ALL
            .into_iter()
            .find(|r| (r.mbps() - mbps).abs() < 1e-9)
            .ok_or(Error::UnsupportedRate(mbps))
    }

    pub fn mbps(self) -> f64 {
        self.tenths() as f64 / 10.0
    }

    /// Rate in units of 100 kbps; keeps airtime arithmetic in integers.
    fn tenths(self) -> u64 {
        match self {
            Rate::R1 => 10,
            Rate::R2 => 20,
            Rate::R5_5 => 55,
            Rate::R11 => 110,
        }
    }

    pub fn modulation(self) -> &'static str {
        match self {
            Rate::R1 => "BPSK",
            Rate::R2 | Rate::R5_5 | Rate::R11 => "QPSK",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Rate::R1 | Rate::R2 => "11 (Barker sequence)",
            Rate::R5_5 | Rate::R11 => "8 CCK",
        }
    }

    fn index(self) -> usize {
        match self {
            Rate::R1 => 0,
            Rate::R2 => 1,
            Rate::R5_5 => 2,
            Rate::R11 => 3,
        }
    }

    /// Next higher rate, saturating at 11 Mbps.
    pub fn step_up(self) -> Rate {
        Rate::ALL[(self.index() + 1).min(3)]
    }

    /// Next lower rate, saturating at 1 Mbps.
    pub fn step_down(self) -> Rate {
        Rate::ALL[self.index().saturating_sub(1)]
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::R5_5 => f.write_str("5.5"),
            r => write!(f, "{}", r.tenths() / 10),
        }
    }
}

/// Airtime of a frame with `payload_bytes` of MPDU after the PLCP header.
///
/// The payload portion is rounded up to the next microsecond so that
/// reservations computed from it never undershoot.
pub fn airtime(payload_bytes: u64, rate: Rate) -> Micros {
    PLCP_US + payload_time(payload_bytes, rate)
}

/// Time to send `bytes` at `rate`, without the PLCP header.
pub fn payload_time(bytes: u64, rate: Rate) -> Micros {
    (bytes * 8 * 10).div_ceil(rate.tenths())
}

/// Largest payload whose airtime at `rate` fits in `budget`.
pub fn max_payload_within(budget: Micros, rate: Rate) -> u64 {
    if budget < PLCP_US {
        return 0;
    }
    (budget - PLCP_US) * rate.tenths() / 80
}

/// Frame error probability doubling per 300 bytes of size above `base_size`.
pub fn frame_error_prob(payload_bytes: u64, base_fer: f64, base_size: u64) -> f64 {
    let exponent = (payload_bytes as f64 - base_size as f64) / 300.0;
    (base_fer * exponent.exp2()).clamp(0.0, 1.0)
}

/// Shannon capacity `B * log2(1 + SNR)` in bits per second.
pub fn shannon_capacity(bandwidth_hz: f64, snr: f64) -> f64 {
    bandwidth_hz * (1.0 + snr).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Node placement plus decode and sense ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    ids: Vec<u32>,
    positions: Vec<Position>,
    hear_range: f64,
    sense_range: f64,
}

impl Topology {
    pub fn new(nodes: Vec<(u32, f64, f64)>, hear_range: f64, sense_range: f64) -> Result<Self> {
        if sense_range < hear_range {
            return Err(Error::Config(format!(
                "sense_range {sense_range} is smaller than hear_range {hear_range}"
            )));
        }
        let mut ids = Vec::with_capacity(nodes.len());
        let mut positions = Vec::with_capacity(nodes.len());
        for (id, x, y) in nodes {
            if ids.contains(&id) {
                return Err(Error::Config(format!("duplicate node id {id}")));
            }
            ids.push(id);
            positions.push(Position { x, y });
        }
        Ok(Topology {
            ids,
            positions,
            hear_range,
            sense_range,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> u32 {
        self.ids[index]
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn hear_range(&self) -> f64 {
        self.hear_range
    }

    pub fn sense_range(&self) -> f64 {
        self.sense_range
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.positions[a], self.positions[b]);
        (p.x - q.x).hypot(p.y - q.y)
    }

    /// True if `a` can decode frames from `b` (and vice versa).
    pub fn can_hear(&self, a: usize, b: usize) -> bool {
        a != b && self.distance(a, b) <= self.hear_range
    }

    /// True if `a` detects energy from `b` (and vice versa).
    pub fn can_sense(&self, a: usize, b: usize) -> bool {
        a != b && self.distance(a, b) <= self.sense_range
    }

    /// Received power at `a` from a unit transmitter at `b`. Distances below
    /// one meter are clamped to avoid the singularity.
    pub fn power(&self, a: usize, b: usize) -> f64 {
        let d = self.distance(a, b).max(1.0);
        1.0 / (d * d)
    }
}

/// Channel quality class of one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quality {
    Bad,
    Low,
    Mid,
    High,
}

impl Quality {
    pub const ALL: [Quality; 4] = [Quality::Bad, Quality::Low, Quality::Mid, Quality::High];

    /// Highest rate the link sustains in this state.
    pub fn max_rate(self) -> Rate {
        match self {
            Quality::Bad => Rate::R1,
            Quality::Low => Rate::R2,
            Quality::Mid => Rate::R5_5,
            Quality::High => Rate::R11,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Quality> {
        match s.to_ascii_uppercase().as_str() {
            "BAD" => Some(Quality::Bad),
            "LOW" => Some(Quality::Low),
            "MID" => Some(Quality::Mid),
            "HIGH" => Some(Quality::High),
            _ => None,
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Bad => "BAD",
            Quality::Low => "LOW",
            Quality::Mid => "MID",
            Quality::High => "HIGH",
        })
    }
}

/// Row-stochastic 4x4 transition matrix over [`Quality`] states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix([[f64; 4]; 4]);

impl TransitionMatrix {
    pub fn new(rows: [[f64; 4]; 4]) -> Result<Self> {
        for (row, r) in rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || r.iter().any(|p| *p < 0.0) {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(TransitionMatrix(rows))
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        TransitionMatrix(m)
    }

    pub fn rows(&self) -> &[[f64; 4]; 4] {
        &self.0
    }

    fn next(&self, from: Quality, u: f64) -> Quality {
        let row = &self.0[from.index()];
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return Quality::ALL[j];
            }
        }
        // Rounding can leave `acc` a hair under 1; fall back to the last
        // reachable state.
        Quality::ALL[row.iter().rposition(|p| *p > 0.0).unwrap_or(from.index())]
    }
}

/// Per directed link Markov quality process.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkQuality {
    n: usize,
    states: Vec<Quality>,
    matrix: TransitionMatrix,
    dwell: Micros,
}

impl LinkQuality {
    pub fn new(n: usize, initial: Quality, matrix: TransitionMatrix, dwell: Micros) -> Self {
        LinkQuality {
            n,
            states: vec![initial; n * n],
            matrix,
            dwell,
        }
    }

    /// Links fixed at HIGH forever.
    pub fn static_high(n: usize) -> Self {
        Self::new(n, Quality::High, TransitionMatrix::identity(), 0)
    }

    pub fn dwell(&self) -> Micros {
        self.dwell
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn is_static(&self) -> bool {
        self.dwell == 0 || self.matrix == TransitionMatrix::identity()
    }

    pub fn get(&self, from: usize, to: usize) -> Quality {
        self.states[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, q: Quality) {
        self.states[from * self.n + to] = q;
    }

    /// Advances every directed link one Markov step, in row-major order.
    pub fn step(&mut self, stream: &mut RandomStream) {
        for from in 0..self.n {
            for to in 0..self.n {
                if from == to {
                    continue;
                }
                let u = stream.uniform_f64();
                let i = from * self.n + to;
                self.states[i] = self.matrix.next(self.states[i], u);
            }
        }
    }
}

/// Free-function form of [`LinkQuality::step`].
pub fn step_link_quality(mut links: LinkQuality, stream: &mut RandomStream) -> LinkQuality {
    links.step(stream);
    links
}

/// Absolute frame error configuration per quality state.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    /// Base FER per quality state, indexed by [`Quality::index`].
    pub base_fer: [f64; 4],
    pub base_size: u64,
    /// When false, RTS/CTS/ACK and other control frames are never errored.
    pub control_errors: bool,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            base_fer: [0.5, 0.1, 0.02, 0.005],
            base_size: 300,
            control_errors: false,
        }
    }
}

impl ErrorModel {
    /// A channel that never corrupts frames.
    pub fn clean() -> Self {
        ErrorModel {
            base_fer: [0.0; 4],
            ..ErrorModel::default()
        }
    }

    /// Error probability for `bytes` sent at `rate` over a link in `state`.
    /// Rates above what the state sustains never decode.
    pub fn fer(&self, bytes: u64, rate: Rate, state: Quality) -> f64 {
        if rate > state.max_rate() {
            return 1.0;
        }
        frame_error_prob(bytes, self.base_fer[state.index()], self.base_size)
    }
}

/// Outcome of one transmission at one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RxOutcome {
    Received,
    Collided,
    Errored,
    NotHeard,
}

/// One transmission as seen by a particular receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub start: Micros,
    pub power: f64,
    /// Within hear range of the receiver.
    pub decodable: bool,
    /// Error probability if received alone.
    pub fer: f64,
}

/// Decides the fate of temporally overlapping transmissions at a receiver.
///
/// A lone decodable arrival is received unless a Bernoulli draw on its FER
/// (from the receiver's stream) errors it. With several arrivals the
/// strongest is received only if its power is at least `capture_ratio` times
/// the sum of the others and it started no later than any of them; every
/// other decodable arrival collides. A receiver that was transmitting hears
/// nothing.
pub fn resolve_reception(
    receiver_transmitting: bool,
    arrivals: &[Arrival],
    capture_ratio: f64,
    stream: &mut RandomStream,
) -> Vec<RxOutcome> {
    let heard = |a: &Arrival, o: RxOutcome| if a.decodable { o } else { RxOutcome::NotHeard };
    if receiver_transmitting {
        return vec![RxOutcome::NotHeard; arrivals.len()];
    }
    match arrivals {
        [] => Vec::new(),
        [only] => {
            if !only.decodable {
                vec![RxOutcome::NotHeard]
            } else if stream.bernoulli(only.fer) {
                vec![RxOutcome::Errored]
            } else {
                vec![RxOutcome::Received]
            }
        }
        _ => {
            let strongest = arrivals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.power.total_cmp(&b.1.power))
                .map(|(i, _)| i)
                .expect("non-empty");
            let s = &arrivals[strongest];
            let others: f64 = arrivals
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != strongest)
                .map(|(_, a)| a.power)
                .sum();
            let earliest = arrivals
                .iter()
                .enumerate()
                .all(|(i, a)| i == strongest || s.start <= a.start);
            let captured = s.decodable && s.power >= capture_ratio * others && earliest;
            arrivals
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    if captured && i == strongest {
                        RxOutcome::Received
                    } else {
                        heard(a, RxOutcome::Collided)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn airtime_examples() {
        assert_eq!(airtime(0, Rate::R11), 192);
        assert_eq!(airtime(1500, Rate::R11), 192 + 1091);
        assert_eq!(airtime(1500, Rate::R1), 12192);
        assert_eq!(airtime(1000, Rate::R5_5), 192 + 1455);
    }

    #[test]
    fn unsupported_rate() {
        assert_eq!(Rate::from_mbps(3.0), Err(Error::UnsupportedRate(3.0)));
        assert_eq!(Rate::from_mbps(5.5).unwrap(), Rate::R5_5);
    }

    #[test]
    fn rate_table_rows() {
        let rows: Vec<_> = Rate::ALL
            .iter()
            .map(|r| (r.to_string(), r.modulation(), r.code()))
            .collect();
        assert_eq!(rows[0], ("1".into(), "BPSK", "11 (Barker sequence)"));
        assert_eq!(rows[1], ("2".into(), "QPSK", "11 (Barker sequence)"));
        assert_eq!(rows[2], ("5.5".into(), "QPSK", "8 CCK"));
        assert_eq!(rows[3], ("11".into(), "QPSK", "8 CCK"));
    }

    #[test]
    fn fer_doubling() {
        assert!((frame_error_prob(300, 0.01, 300) - 0.01).abs() < 1e-15);
        assert!((frame_error_prob(600, 0.01, 300) - 0.02).abs() < 1e-15);
        assert!((frame_error_prob(1200, 0.01, 300) - 0.08).abs() < 1e-15);
        assert_eq!(frame_error_prob(6000, 0.5, 300), 1.0);
    }

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_capacity(5e6, 0.0), 0.0);
        assert!((shannon_capacity(1e6, 1.0) - 1e6).abs() < 1e-6);
        assert!((shannon_capacity(22e6, 3.0) - 44e6).abs() < 1e-6);
    }

    #[test]
    fn max_payload_inverts_airtime() {
        for rate in Rate::ALL {
            for budget in [100, 192, 193, 500, 910, 2000, 12192] {
                let p = max_payload_within(budget, rate);
                if budget >= 192 {
                    assert!(airtime(p, rate) <= budget);
                    assert!(airtime(p + 1, rate) > budget);
                } else {
                    assert_eq!(p, 0);
                }
            }
        }
    }

    fn arrival(start: Micros, power: f64) -> Arrival {
        Arrival {
            start,
            power,
            decodable: true,
            fer: 0.0,
        }
    }

    #[test]
    fn lone_frame_is_received() {
        let mut s = RandomStream::new(0, 0);
        assert_eq!(
            resolve_reception(false, &[arrival(0, 1.0)], 10.0, &mut s),
            vec![RxOutcome::Received]
        );
    }

    #[test]
    fn equal_power_overlap_collides() {
        let mut s = RandomStream::new(0, 0);
        let out = resolve_reception(false, &[arrival(0, 1.0), arrival(5, 1.0)], 10.0, &mut s);
        assert_eq!(out, vec![RxOutcome::Collided, RxOutcome::Collided]);
    }

    #[test]
    fn near_far_capture() {
        let mut s = RandomStream::new(0, 0);
        let near = arrival(0, 1.0 / 4.0);
        let far = arrival(3, 1.0 / 100.0);
        let out = resolve_reception(false, &[near, far], 10.0, &mut s);
        assert_eq!(out, vec![RxOutcome::Received, RxOutcome::Collided]);
        // Stronger frame that started later is not captured.
        let late_near = arrival(5, 1.0 / 4.0);
        let out = resolve_reception(false, &[far, late_near], 10.0, &mut s);
        assert_eq!(out, vec![RxOutcome::Collided, RxOutcome::Collided]);
    }

    #[test]
    fn transmitting_receiver_hears_nothing() {
        let mut s = RandomStream::new(0, 0);
        let out = resolve_reception(true, &[arrival(0, 1.0)], 10.0, &mut s);
        assert_eq!(out, vec![RxOutcome::NotHeard]);
    }

    #[test]
    fn certain_error() {
        let mut s = RandomStream::new(0, 0);
        let a = Arrival {
            fer: 1.0,
            ..arrival(0, 1.0)
        };
        assert_eq!(
            resolve_reception(false, &[a], 10.0, &mut s),
            vec![RxOutcome::Errored]
        );
    }

    #[test]
    fn ranges_are_symmetric() {
        let t = Topology::new(
            vec![(0, 0.0, 0.0), (1, 30.0, 40.0), (2, 100.0, 0.0)],
            50.0,
            90.0,
        )
        .unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(t.can_hear(a, b), t.can_hear(b, a));
                assert_eq!(t.can_sense(a, b), t.can_sense(b, a));
            }
        }
        assert!(t.can_hear(0, 1));
        assert!(!t.can_hear(0, 2));
        assert!(t.can_sense(1, 2));
    }

    #[test]
    fn topology_rejects_bad_input() {
        assert!(Topology::new(vec![(0, 0.0, 0.0)], 50.0, 40.0).is_err());
        assert!(Topology::new(vec![(3, 0.0, 0.0), (3, 1.0, 0.0)], 50.0, 50.0).is_err());
    }

    #[test]
    fn identity_matrix_holds_state() {
        let mut lq = LinkQuality::new(3, Quality::Mid, TransitionMatrix::identity(), 1000);
        lq.set(0, 1, Quality::Bad);
        let mut s = RandomStream::new(1, 99);
        for _ in 0..100 {
            lq.step(&mut s);
        }
        assert_eq!(lq.get(0, 1), Quality::Bad);
        assert_eq!(lq.get(2, 1), Quality::Mid);
    }

    #[test]
    fn absorbing_bad_state() {
        let m = TransitionMatrix::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        let mut lq = LinkQuality::new(2, Quality::High, m, 1000);
        let mut s = RandomStream::new(3, 99);
        for _ in 0..500 {
            lq.step(&mut s);
        }
        assert_eq!(lq.get(0, 1), Quality::Bad);
        assert_eq!(lq.get(1, 0), Quality::Bad);
    }

    #[test]
    fn two_state_symmetric_occupancy() {
        let m = TransitionMatrix::new([
            [0.5, 0.0, 0.0, 0.5],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.5, 0.0, 0.0, 0.5],
        ])
        .unwrap();
        let mut lq = LinkQuality::new(2, Quality::High, m, 1000);
        let mut s = RandomStream::new(11, 99);
        let steps = 10_000;
        let mut high = 0;
        for _ in 0..steps {
            lq.step(&mut s);
            if lq.get(0, 1) == Quality::High {
                high += 1;
            }
        }
        let frac = high as f64 / steps as f64;
        assert!((frac - 0.5).abs() <= 0.02, "occupancy {frac}");
    }

    #[test]
    fn non_stochastic_rows_rejected() {
        let err = TransitionMatrix::new([
            [0.5, 0.4, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]);
        assert!(matches!(err, Err(Error::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn rate_above_quality_never_decodes() {
        let em = ErrorModel::clean();
        assert_eq!(em.fer(1000, Rate::R11, Quality::Mid), 1.0);
        assert_eq!(em.fer(1000, Rate::R5_5, Quality::Mid), 0.0);
    }
}
