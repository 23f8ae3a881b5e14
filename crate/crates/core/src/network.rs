//! The shared medium and everything attached to it: stations, traffic
//! sources, link-quality evolution and per-run bookkeeping.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use crate::dcf::CONTROL_RATE;
use crate::engine::{Engine, EventHandle, Micros, RandomStream};
use crate::error::Result;
use crate::frame::{Frame, FrameKind, NodeIdx, Packet, PacketId, Role};
use crate::phy::{
    airtime, resolve_reception, Arrival, ErrorModel, LinkQuality, Rate, RxOutcome, Topology,
    PLCP_US,
};
use crate::station::{
    rsh_time, Action, Ctx, MacEvent, PacketOutcome, Reception, Station, StationConfig,
    StationStats, TimerKind,
};

const RX_STREAM_BASE: u64 = 1 << 32;
const LINK_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// Keeps `depth` packets queued at the source at all times.
    Backlogged { bytes: u64, depth: usize },
    /// Constant bit rate.
    Cbr { rate_bps: u64, bytes: u64 },
    /// One reply of `bytes` per packet the source receives from `dst`.
    Echo { bytes: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub kind: FlowKind,
    pub start: Micros,
    pub stop: Micros,
    pub category: usize,
    /// Eligible for the ACK-as-RTS reverse exchange.
    pub reverse: bool,
    /// Fair share used by windowed fairness.
    pub share: f64,
    /// Backlogged only: most packets outstanding before the reply from the
    /// destination (or the MAC ACK when no echo flow answers) frees a slot.
    pub window: Option<usize>,
    /// Stop after generating this many packets.
    pub count: Option<u64>,
}

impl FlowSpec {
    pub fn new(src: NodeIdx, dst: NodeIdx, kind: FlowKind) -> Self {
        FlowSpec {
            src,
            dst,
            kind,
            start: 0,
            stop: Micros::MAX,
            category: 0,
            reverse: false,
            share: 1.0,
            window: None,
            count: None,
        }
    }

    pub fn packet_bytes(&self) -> u64 {
        match self.kind {
            FlowKind::Backlogged { bytes, .. }
            | FlowKind::Cbr { bytes, .. }
            | FlowKind::Echo { bytes } => bytes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub seed: u64,
    pub duration: Micros,
    pub topology: Topology,
    pub links: LinkQuality,
    pub error_model: ErrorModel,
    pub capture_ratio: f64,
    pub ideal_sense: bool,
    pub stations: Vec<StationConfig>,
    pub flows: Vec<FlowSpec>,
    pub queue_limit: usize,
    pub trace: bool,
}

/// Per-flow counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowCounters {
    pub generated_packets: u64,
    pub generated_bits: u64,
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub dropped_packets: u64,
    pub queued_packets: u64,
    pub delays: Vec<Micros>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionRecord {
    pub time: Micros,
    pub receiver: NodeIdx,
    pub sender: NodeIdx,
    pub kind: FrameKind,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxRecord {
    pub sender: NodeIdx,
    pub dst: Option<NodeIdx>,
    pub kind: FrameKind,
    pub role: Role,
    pub start: Micros,
    pub end: Micros,
    pub bytes: u64,
    pub rate: Rate,
    pub more_fragments: bool,
}

/// Raw outcome of one run.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub duration: Micros,
    pub flows: Vec<FlowCounters>,
    pub transmissions: u64,
    pub collision_events: u64,
    pub collisions: Vec<CollisionRecord>,
    /// `(time, flow, bits)` for every delivered packet.
    pub deliveries: Vec<(Micros, usize, u64)>,
    pub stations: Vec<StationStats>,
    pub tx_log: Vec<TxRecord>,
    pub trace: String,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorldEvent {
    Timer(NodeIdx, TimerKind),
    TxEnd(u64),
    Arrival(usize),
    LinkStep,
    Rsh(u64),
}

#[derive(Debug, Clone)]
struct Tx {
    id: u64,
    sender: NodeIdx,
    frame: Frame,
    rate: Rate,
    start: Micros,
    end: Micros,
    counted: bool,
}

pub struct Network {
    cfg: NetworkConfig,
    engine: Engine<WorldEvent>,
    stations: Vec<Station>,
    mac_rng: Vec<RandomStream>,
    rx_rng: Vec<RandomStream>,
    link_rng: RandomStream,
    links: LinkQuality,
    timers: HashMap<(NodeIdx, TimerKind), (EventHandle, Micros)>,
    busy: Vec<u32>,
    active: BTreeMap<u64, Tx>,
    history: VecDeque<Tx>,
    next_tx: u64,
    next_packet: PacketId,
    queue: VecDeque<(NodeIdx, MacEvent)>,
    delivered: HashSet<PacketId>,
    at_source: Vec<usize>,
    outstanding: Vec<usize>,
    answered: Vec<bool>,
    echo_origin: HashMap<PacketId, usize>,
    out: RunOutput,
}

impl Network {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        let n = cfg.topology.len();
        let stations = cfg
            .stations
            .iter()
            .enumerate()
            .map(|(i, c)| Station::new(i, c.clone()))
            .collect();
        let out = RunOutput {
            duration: cfg.duration,
            flows: vec![FlowCounters::default(); cfg.flows.len()],
            ..RunOutput::default()
        };
        let answered = cfg
            .flows
            .iter()
            .map(|f| {
                cfg.flows.iter().any(|e| {
                    matches!(e.kind, FlowKind::Echo { .. }) && e.src == f.dst && e.dst == f.src
                })
            })
            .collect();
        Ok(Network {
            at_source: vec![0; cfg.flows.len()],
            outstanding: vec![0; cfg.flows.len()],
            answered,
            echo_origin: HashMap::new(),
            engine: Engine::new(),
            stations,
            mac_rng: (0..n as u64)
                .map(|i| RandomStream::new(cfg.seed, i))
                .collect(),
            rx_rng: (0..n as u64)
                .map(|i| RandomStream::new(cfg.seed, RX_STREAM_BASE + i))
                .collect(),
            link_rng: RandomStream::new(cfg.seed, LINK_STREAM),
            links: cfg.links.clone(),
            timers: HashMap::new(),
            busy: vec![0; n],
            active: BTreeMap::new(),
            history: VecDeque::new(),
            next_tx: 0,
            next_packet: 0,
            queue: VecDeque::new(),
            delivered: HashSet::new(),
            out,
            cfg,
        })
    }

    pub fn station(&self, i: NodeIdx) -> &Station {
        &self.stations[i]
    }

    /// Runs to the configured duration and returns the collected output.
    pub fn run(mut self) -> Result<RunOutput> {
        for (i, f) in self.cfg.flows.iter().enumerate() {
            if !matches!(f.kind, FlowKind::Echo { .. }) && f.start < self.cfg.duration {
                self.engine.schedule(f.start, WorldEvent::Arrival(i))?;
            }
        }
        if !self.links.is_static() {
            let dwell = self.links.dwell();
            self.engine.schedule(dwell, WorldEvent::LinkStep)?;
        }
        for i in 0..self.stations.len() {
            let actions = self.stations[i].start(0);
            self.apply(i, actions);
        }
        self.drain();
        while let Some(ev) = self.engine.pop_until(self.cfg.duration) {
            self.out.events += 1;
            self.dispatch(ev.time, ev.payload);
            self.drain();
        }
        self.finish();
        Ok(self.out)
    }

    fn now(&self) -> Micros {
        self.engine.now()
    }

    fn trace(&mut self, node: Option<NodeIdx>, kind: &str, detail: std::fmt::Arguments) {
        if !self.cfg.trace {
            return;
        }
        let now = self.now();
        match node {
            Some(n) => {
                let _ = writeln!(self.out.trace, "{now}\t{n}\t{kind}\t{detail}");
            }
            None => {
                let _ = writeln!(self.out.trace, "{now}\t-\t{kind}\t{detail}");
            }
        }
    }

    fn dispatch(&mut self, _time: Micros, ev: WorldEvent) {
        match ev {
            WorldEvent::Timer(mut node, kind) => {
                self.timers.remove(&(node, kind));
                if kind == TimerKind::Contend && self.cfg.ideal_sense {
                    // Serialize simultaneous expiries by node index.
                    let now = self.now();
                    let first = (0..node).find(|m| {
                        self.timers
                            .get(&(*m, kind))
                            .is_some_and(|&(_, at)| at == now)
                    });
                    if let Some(first) = first {
                        let (h, _) = self.timers.remove(&(first, kind)).expect("timer present");
                        self.engine.cancel(h);
                        let h = self.engine.schedule_in(0, WorldEvent::Timer(node, kind));
                        self.timers.insert((node, kind), (h, now));
                        node = first;
                    }
                }
                self.trace(Some(node), "timer", format_args!("{}", kind.as_str()));
                self.queue.push_back((node, MacEvent::Timer(kind)));
            }
            WorldEvent::TxEnd(id) => self.tx_end(id),
            WorldEvent::Arrival(flow) => {
                self.trace(
                    Some(self.cfg.flows[flow].src),
                    "arrival",
                    format_args!("flow={flow}"),
                );
                self.arrival(flow);
            }
            WorldEvent::LinkStep => {
                self.trace(None, "link_step", format_args!(""));
                self.links.step(&mut self.link_rng);
                self.engine
                    .schedule_in(self.links.dwell(), WorldEvent::LinkStep);
            }
            WorldEvent::Rsh(id) => self.rsh(id),
        }
    }

    fn drain(&mut self) {
        while let Some((node, ev)) = self.queue.pop_front() {
            let now = self.now();
            let mut ctx = Ctx {
                now,
                rng: &mut self.mac_rng[node],
                ideal_sense: self.cfg.ideal_sense,
            };
            let actions = self.stations[node].handle(ev, &mut ctx);
            self.apply(node, actions);
        }
    }

    fn apply(&mut self, node: NodeIdx, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Transmit { frame, rate } => self.start_tx(node, frame, rate),
                Action::SetTimer { kind, at } => {
                    if let Some((h, _)) = self.timers.remove(&(node, kind)) {
                        self.engine.cancel(h);
                    }
                    let h = self
                        .engine
                        .schedule(at, WorldEvent::Timer(node, kind))
                        .expect("stations never arm timers in the past");
                    self.timers.insert((node, kind), (h, at));
                }
                Action::CancelTimer(kind) => {
                    if let Some((h, _)) = self.timers.remove(&(node, kind)) {
                        self.engine.cancel(h);
                    }
                }
                Action::Completed { packet, outcome } => self.completed(node, packet, outcome),
            }
        }
    }

    // ---- medium ---------------------------------------------------------

    fn frame_airtime(frame: &Frame, rate: Rate) -> Micros {
        if !frame.kind.is_data() {
            return airtime(frame.payload_bytes, CONTROL_RATE);
        }
        airtime(frame.payload_bytes, rate) + if frame.rsh { rsh_time() } else { 0 }
    }

    fn start_tx(&mut self, sender: NodeIdx, frame: Frame, rate: Rate) {
        let now = self.now();
        let end = now + Self::frame_airtime(&frame, rate);
        let id = self.next_tx;
        self.next_tx += 1;
        self.trace(
            Some(sender),
            "tx",
            format_args!(
                "{} dst={} bytes={} rate={} dur={} end={}",
                frame.kind,
                frame.dst.map_or("*".to_string(), |d| d.to_string()),
                frame.payload_bytes,
                rate,
                frame.duration,
                end
            ),
        );
        self.out.transmissions += 1;
        self.out.tx_log.push(TxRecord {
            sender,
            dst: frame.dst,
            kind: frame.kind,
            role: frame.role,
            start: now,
            end,
            bytes: frame.payload_bytes,
            rate,
            more_fragments: frame.more_fragments,
        });
        if frame.rsh && frame.kind.is_data() {
            self.engine
                .schedule_in(PLCP_US + rsh_time(), WorldEvent::Rsh(id));
        }
        self.engine
            .schedule(end, WorldEvent::TxEnd(id))
            .expect("end is in the future");
        self.active.insert(
            id,
            Tx {
                id,
                sender,
                frame,
                rate,
                start: now,
                end,
                counted: false,
            },
        );
        for n in 0..self.busy.len() {
            if n == sender || self.cfg.topology.can_sense(sender, n) {
                self.busy[n] += 1;
                if self.busy[n] == 1 {
                    self.queue.push_back((n, MacEvent::MediumBusy));
                }
            }
        }
    }

    /// Transmissions overlapping `[start, end)`, excluding `id`.
    fn overlapping(&self, id: u64, start: Micros, end: Micros) -> Vec<&Tx> {
        self.history
            .iter()
            .chain(self.active.values())
            .filter(|t| t.id != id && t.start < end && t.end > start)
            .collect()
    }

    fn tx_end(&mut self, id: u64) {
        let tx = self.active.remove(&id).expect("active transmission");
        let now = self.now();
        self.trace(Some(tx.sender), "tx_end", format_args!("{}", tx.frame.kind));
        let n = self.busy.len();
        let mut received = Vec::new();
        let mut collided_at_dst = false;
        let mut group: Vec<u64> = Vec::new();
        for r in 0..n {
            if r == tx.sender || !self.cfg.topology.can_hear(tx.sender, r) {
                continue;
            }
            let others = self.overlapping(id, tx.start, tx.end);
            let receiver_tx = others.iter().any(|o| o.sender == r)
                || self
                    .active
                    .values()
                    .any(|o| o.sender == r && o.start < tx.end);
            let quality = self.links.get(tx.sender, r);
            let fer = if tx.frame.kind.is_data() || self.cfg.error_model.control_errors {
                self.cfg
                    .error_model
                    .fer(tx.frame.payload_bytes, tx.rate, quality)
            } else {
                0.0
            };
            let mut arrivals = vec![Arrival {
                start: tx.start,
                power: self.cfg.topology.power(tx.sender, r),
                decodable: true,
                fer,
            }];
            let mut members = vec![id];
            for o in others
                .iter()
                .filter(|o| o.sender != r && self.cfg.topology.can_sense(o.sender, r))
            {
                arrivals.push(Arrival {
                    start: o.start,
                    power: self.cfg.topology.power(o.sender, r),
                    decodable: self.cfg.topology.can_hear(o.sender, r),
                    fer: 0.0,
                });
                members.push(o.id);
            }
            let outcome = resolve_reception(
                receiver_tx,
                &arrivals,
                self.cfg.capture_ratio,
                &mut self.rx_rng[r],
            )[0];
            match outcome {
                RxOutcome::Received => received.push((r, quality)),
                RxOutcome::Collided if tx.frame.dst == Some(r) => {
                    collided_at_dst = true;
                    group = members;
                    self.out.collisions.push(CollisionRecord {
                        time: now,
                        receiver: r,
                        sender: tx.sender,
                        kind: tx.frame.kind,
                        role: tx.frame.role,
                    });
                    self.trace(
                        Some(r),
                        "collision",
                        format_args!("{} from={}", tx.frame.kind, tx.sender),
                    );
                }
                _ => {}
            }
        }
        let mut tx = tx;
        if collided_at_dst {
            let already = tx.counted
                || group.iter().any(|g| {
                    self.history
                        .iter()
                        .chain(self.active.values())
                        .any(|t| t.id == *g && t.counted)
                });
            if !already {
                self.out.collision_events += 1;
            }
            tx.counted = true;
            for t in self.history.iter_mut().chain(self.active.values_mut()) {
                if group.contains(&t.id) {
                    t.counted = true;
                }
            }
        }
        let sender = tx.sender;
        let frame = tx.frame.clone();
        self.history.push_back(tx);
        self.prune_history();

        self.queue.push_back((sender, MacEvent::TxDone));
        for (r, quality) in received {
            if frame.is_for(r) && frame.kind.is_data() {
                self.on_delivered(r, &frame);
            }
            self.queue.push_back((
                r,
                MacEvent::Received(Reception {
                    frame: frame.clone(),
                    quality,
                }),
            ));
        }
        for m in 0..n {
            if m == sender || self.cfg.topology.can_sense(sender, m) {
                self.busy[m] -= 1;
                if self.busy[m] == 0 {
                    self.queue.push_back((m, MacEvent::MediumIdle));
                }
            }
        }
    }

    fn prune_history(&mut self) {
        let horizon = self
            .active
            .values()
            .map(|t| t.start)
            .min()
            .unwrap_or(self.now());
        while self.history.front().is_some_and(|t| t.end <= horizon) {
            self.history.pop_front();
        }
    }

    fn rsh(&mut self, id: u64) {
        let Some(tx) = self.active.get(&id) else {
            return;
        };
        let (sender, dst, end) = (tx.sender, tx.frame.dst, tx.end);
        let t = self.stations[sender].config().params.timing;
        let until = end + t.sifs + t.ack_time();
        self.trace(Some(sender), "rsh", format_args!("nav_until={until}"));
        for n in 0..self.busy.len() {
            if n == sender || Some(n) == dst || !self.cfg.topology.can_hear(sender, n) {
                continue;
            }
            let clash = self
                .active
                .values()
                .any(|o| o.id != id && (o.sender == n || self.cfg.topology.can_sense(o.sender, n)));
            if !clash {
                self.queue.push_back((n, MacEvent::NavHint(until)));
            }
        }
    }

    // ---- traffic --------------------------------------------------------

    fn new_packet(&mut self, flow: usize) -> Packet {
        let f = &self.cfg.flows[flow];
        let id = self.next_packet;
        self.next_packet += 1;
        let mut p = Packet::new(id, flow, f.dst, f.packet_bytes(), self.engine.now());
        p.category = f.category;
        p.reverse = f.reverse;
        let c = &mut self.out.flows[flow];
        c.generated_packets += 1;
        c.generated_bits += p.bytes * 8;
        p
    }

    /// Hands a new packet to the source MAC; `None` if it was tail-dropped.
    fn enqueue(&mut self, flow: usize) -> Option<PacketId> {
        if self.cfg.flows[flow]
            .count
            .is_some_and(|c| self.out.flows[flow].generated_packets >= c)
        {
            return None;
        }
        let p = self.new_packet(flow);
        let id = p.id;
        let src = self.cfg.flows[flow].src;
        if self.stations[src].queue_len() >= self.cfg.queue_limit {
            self.out.flows[flow].dropped_packets += 1;
            return None;
        }
        self.queue.push_back((src, MacEvent::Enqueued(p)));
        Some(id)
    }

    fn top_up(&mut self, flow: usize) {
        let f = &self.cfg.flows[flow];
        let FlowKind::Backlogged { depth, .. } = f.kind else {
            return;
        };
        let window = f.window.unwrap_or(usize::MAX);
        if self.now() >= f.stop || self.now() < f.start {
            return;
        }
        while self.at_source[flow] < depth && self.outstanding[flow] < window {
            if self.enqueue(flow).is_none() {
                break;
            }
            self.at_source[flow] += 1;
            self.outstanding[flow] += 1;
        }
    }

    fn release(&mut self, flow: usize) {
        self.outstanding[flow] = self.outstanding[flow].saturating_sub(1);
        self.top_up(flow);
    }

    fn arrival(&mut self, flow: usize) {
        let f = self.cfg.flows[flow].clone();
        let now = self.now();
        match f.kind {
            FlowKind::Backlogged { .. } => self.top_up(flow),
            FlowKind::Cbr { rate_bps, bytes } => {
                let _ = self.enqueue(flow);
                let interval = (bytes * 8 * 1_000_000).div_ceil(rate_bps.max(1)).max(1);
                if now + interval < f.stop.min(self.cfg.duration) {
                    self.engine.schedule_in(interval, WorldEvent::Arrival(flow));
                }
            }
            FlowKind::Echo { .. } => {}
        }
    }

    fn completed(&mut self, node: NodeIdx, packet: Packet, outcome: PacketOutcome) {
        let flow = packet.flow;
        self.trace(
            Some(node),
            "done",
            format_args!("packet={} outcome={:?}", packet.id, outcome),
        );
        let lost = outcome == PacketOutcome::Dropped && !self.delivered.contains(&packet.id);
        if lost {
            self.out.flows[flow].dropped_packets += 1;
            if let Some(origin) = self.echo_origin.remove(&packet.id) {
                self.release(origin);
            }
        }
        if matches!(self.cfg.flows[flow].kind, FlowKind::Backlogged { .. }) {
            self.at_source[flow] -= 1;
            if lost || !self.answered[flow] {
                self.outstanding[flow] = self.outstanding[flow].saturating_sub(1);
            }
            self.top_up(flow);
        }
    }

    fn on_delivered(&mut self, at: NodeIdx, frame: &Frame) {
        let Some(p) = frame.packet else { return };
        if !p.completes(frame.payload_bytes) || !self.delivered.insert(p.id) {
            return;
        }
        let now = self.now();
        let c = &mut self.out.flows[p.flow];
        c.delivered_packets += 1;
        c.delivered_bits += p.total * 8;
        c.delays.push(now - p.created);
        self.out.deliveries.push((now, p.flow, p.total * 8));
        let echoes: Vec<usize> = self
            .cfg
            .flows
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                matches!(f.kind, FlowKind::Echo { .. })
                    && f.src == at
                    && f.dst == frame.src
                    && now >= f.start
                    && now < f.stop
            })
            .map(|(i, _)| i)
            .collect();
        if let Some(origin) = self.echo_origin.remove(&p.id) {
            self.release(origin);
        }
        let origin_is_echo = matches!(self.cfg.flows[p.flow].kind, FlowKind::Echo { .. });
        if !origin_is_echo {
            for e in echoes {
                match self.enqueue(e) {
                    Some(id) => {
                        self.echo_origin.insert(id, p.flow);
                    }
                    None => self.release(p.flow),
                }
            }
        }
    }

    fn finish(&mut self) {
        for s in &self.stations {
            for p in s.queued_packets() {
                if !self.delivered.contains(&p.id) {
                    self.out.flows[p.flow].queued_packets += 1;
                }
            }
        }
        self.out.stations = self.stations.iter().map(|s| s.stats()).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcf::MacParams;

    fn two_nodes(trace: bool) -> NetworkConfig {
        let topology = Topology::new(vec![(0, 0.0, 0.0), (1, 10.0, 0.0)], 100.0, 100.0).unwrap();
        NetworkConfig {
            seed: 1,
            duration: 200_000,
            topology,
            links: LinkQuality::static_high(2),
            error_model: ErrorModel::clean(),
            capture_ratio: 10.0,
            ideal_sense: false,
            stations: vec![StationConfig::dcf(MacParams::default()); 2],
            flows: vec![FlowSpec::new(
                0,
                1,
                FlowKind::Backlogged {
                    bytes: 1500,
                    depth: 4,
                },
            )],
            queue_limit: 100,
            trace,
        }
    }

    #[test]
    fn single_exchange_timeline() {
        let mut cfg = two_nodes(true);
        cfg.duration = 4_000;
        let out = Network::new(cfg).unwrap().run().unwrap();
        let log = &out.tx_log;
        let kinds: Vec<FrameKind> = log.iter().take(4).map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                FrameKind::Rts,
                FrameKind::Cts,
                FrameKind::Data,
                FrameKind::Ack
            ]
        );
        for w in log.windows(2).take(3) {
            assert_eq!(w[1].start - w[0].end, 10);
        }
        assert!(log[0].start >= 50);
        assert_eq!((log[0].start - 50) % 20, 0);
        assert_eq!(out.collision_events, 0);
        assert_eq!(out.flows[0].delivered_packets, 1);
    }

    #[test]
    fn conservation_holds() {
        let out = Network::new(two_nodes(false)).unwrap().run().unwrap();
        let f = &out.flows[0];
        assert!(f.delivered_packets > 50);
        assert_eq!(
            f.generated_packets,
            f.delivered_packets + f.dropped_packets + f.queued_packets
        );
    }

    #[test]
    fn same_seed_same_trace() {
        let a = Network::new(two_nodes(true)).unwrap().run().unwrap();
        let b = Network::new(two_nodes(true)).unwrap().run().unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(!a.trace.is_empty());
    }
}
