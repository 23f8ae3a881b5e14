//! Per-node MAC state machine.
//!
//! A [`Station`] consumes [`MacEvent`]s and returns [`Action`]s; it never
//! touches the medium or the event queue directly. Contention runs per
//! traffic category so plain DCF is the single-category case.

use std::collections::{BTreeMap, VecDeque};

use crate::dcf::{
    draw_backoff, fragment_plan, nav_merge, should_use_rts, MacParams, ACK_BYTES, BEACON_BYTES,
    CF_END_BYTES, CF_POLL_BYTES, CONTROL_RATE, CTS_BYTES, RSH_BYTES, RTS_BYTES,
};
use crate::engine::{Micros, RandomStream};
use crate::ext::{
    dcfplus_ack_duration, dcfplus_allowed, edcf_contend, expand_cw, ica_on_overhear,
    ica_on_timeout, ica_plan_parallel, CategoryConfig, IcaState,
};
use crate::fair::{
    dfs_backoff, dfs_multiplier, estimation_backoff_update, mild_update, share_cw_on_hear,
    MildOutcome, TrafficEstimate,
};
use crate::frame::{Frame, FrameKind, NodeIdx, Packet, PacketId, RateInfo, Role};
use crate::pcf::{handle_poll, PollCursor, PollDecision, SuperframeConfig};
use crate::phy::{airtime, payload_time, Quality, Rate};
use crate::rate::{
    arf_on_result, oar_burst_count, rbar_needs_rsh, rbar_reservation, rbar_select_rate, ArfResult,
    ArfState, RateScheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerKind {
    Contend,
    NavEnd,
    Respond,
    CtsTimeout,
    AckTimeout,
    IcaCtsTimeout,
    Superframe,
    PcfNext,
}

impl TimerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimerKind::Contend => "contend",
            TimerKind::NavEnd => "nav_end",
            TimerKind::Respond => "respond",
            TimerKind::CtsTimeout => "cts_timeout",
            TimerKind::AckTimeout => "ack_timeout",
            TimerKind::IcaCtsTimeout => "ica_cts_timeout",
            TimerKind::Superframe => "superframe",
            TimerKind::PcfNext => "pcf_next",
        }
    }
}

/// A decoded frame handed to a station.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub frame: Frame,
    /// State of the sender-to-receiver link when the frame arrived.
    pub quality: Quality,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacEvent {
    Enqueued(Packet),
    MediumBusy,
    MediumIdle,
    Timer(TimerKind),
    Received(Reception),
    /// The station's own transmission finished.
    TxDone,
    /// NAV update from a reservation sub-header decoded mid-frame.
    NavHint(Micros),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    Acked,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Transmit {
        frame: Frame,
        rate: Rate,
    },
    /// Arms (or re-arms) the timer of this kind.
    SetTimer {
        kind: TimerKind,
        at: Micros,
    },
    CancelTimer(TimerKind),
    Completed {
        packet: Packet,
        outcome: PacketOutcome,
    },
}

/// Context supplied with every event.
pub struct Ctx<'a> {
    pub now: Micros,
    pub rng: &'a mut RandomStream,
    /// Two nodes whose backoff ends in the same microsecond are serialized
    /// instead of colliding.
    pub ideal_sense: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackoffScheme {
    Beb,
    Mild {
        factor: f64,
    },
    Estimation {
        phi: f64,
        window: Micros,
    },
    Dfs {
        phi: f64,
        scaling: f64,
        compress: Option<u64>,
        randomize: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    /// Wait after an overheard RTS before concluding no CTS was sent.
    pub cts_timeout: Micros,
    pub min_fragment: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationConfig {
    pub params: MacParams,
    pub rate: RateScheme,
    pub backoff: BackoffScheme,
    pub categories: Vec<CategoryConfig>,
    pub dcf_plus: bool,
    pub ica: Option<IcaConfig>,
    /// Present when this node is the point coordinator.
    pub pc: Option<SuperframeConfig>,
    /// Largest packet the scenario generates; sizes bursts and CFP budgets.
    pub max_packet: u64,
}

impl StationConfig {
    pub fn dcf(params: MacParams) -> Self {
        let cat = CategoryConfig::legacy(&params.timing, params.cw_min, params.cw_max);
        StationConfig {
            params,
            rate: RateScheme::Fixed,
            backoff: BackoffScheme::Beb,
            categories: vec![cat],
            dcf_plus: false,
            ica: None,
            pc: None,
            max_packet: 1500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StationStats {
    pub contention_wins: u64,
    pub virtual_collisions: u64,
    pub reverse_exchanges: u64,
    pub parallel_starts: u64,
    pub drops: u64,
}

#[derive(Debug, Clone)]
struct Category {
    cfg: CategoryConfig,
    queue: VecDeque<Packet>,
    cw: u32,
    backoff: Option<u64>,
    retries: u32,
    /// Countdown origin while the category is actively counting down.
    start: Option<Micros>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Normal,
    Parallel,
    Reverse,
}

impl Mode {
    fn role(self) -> Role {
        match self {
            Mode::Normal => Role::Normal,
            Mode::Parallel => Role::Parallel,
            Mode::Reverse => Role::Reverse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitCts,
    SendingData,
    AwaitAck,
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    packet: PacketId,
    offset: u64,
    bytes: u64,
    more: bool,
    number: u32,
}

#[derive(Debug, Clone)]
struct Exchange {
    cat: usize,
    dst: NodeIdx,
    rate: Rate,
    tentative: Rate,
    rsh: bool,
    mode: Mode,
    units: Vec<Unit>,
    next: usize,
    phase: Phase,
}

#[derive(Debug, Clone, Copy)]
struct ReverseWait {
    peer: NodeIdx,
    cat: usize,
    packet: PacketId,
}

#[derive(Debug, Clone, Copy)]
struct CfPending {
    cat: usize,
    packet: PacketId,
    bytes: u64,
    dst: NodeIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PcPhase {
    Idle,
    WaitBeacon { boundary: Micros },
    Cfp { end: Micros },
    Ending,
}

#[derive(Debug, Clone)]
struct PcState {
    cfg: SuperframeConfig,
    cursor: PollCursor,
    phase: PcPhase,
    cf_ack_owed: bool,
    response_complete: bool,
    awaiting_ack: bool,
    timer_set: bool,
}

#[derive(Debug, Clone)]
pub struct Station {
    me: NodeIdx,
    cfg: StationConfig,
    cats: Vec<Category>,
    nav_until: Micros,
    nav_timer: Option<Micros>,
    busy: bool,
    idle_since: Micros,
    armed: bool,
    transmitting: bool,
    sent: Option<Frame>,
    exchange: Option<Exchange>,
    pending: Option<(Frame, Rate)>,
    reverse_wait: Option<ReverseWait>,
    arf: BTreeMap<NodeIdx, ArfState>,
    tentative: BTreeMap<NodeIdx, Rate>,
    estimate: TrafficEstimate,
    ica: IcaState,
    cf_pending: Option<CfPending>,
    pc: Option<PcState>,
    stats: StationStats,
}

impl Station {
    pub fn new(me: NodeIdx, cfg: StationConfig) -> Self {
        let cats = cfg
            .categories
            .iter()
            .map(|&c| Category {
                cfg: c,
                queue: VecDeque::new(),
                cw: c.cw_min,
                backoff: None,
                retries: 0,
                start: None,
            })
            .collect();
        let window = match cfg.backoff {
            BackoffScheme::Estimation { window, .. } => window,
            _ => 100_000,
        };
        let pc = cfg.pc.clone().map(|c| PcState {
            cfg: c,
            cursor: PollCursor::default(),
            phase: PcPhase::Idle,
            cf_ack_owed: false,
            response_complete: false,
            awaiting_ack: false,
            timer_set: false,
        });
        Station {
            me,
            cfg,
            cats,
            nav_until: 0,
            nav_timer: None,
            busy: false,
            idle_since: 0,
            armed: false,
            transmitting: false,
            sent: None,
            exchange: None,
            pending: None,
            reverse_wait: None,
            arf: BTreeMap::new(),
            tentative: BTreeMap::new(),
            estimate: TrafficEstimate::new(window),
            ica: IcaState::default(),
            cf_pending: None,
            pc,
            stats: StationStats::default(),
        }
    }

    pub fn id(&self) -> NodeIdx {
        self.me
    }

    pub fn config(&self) -> &StationConfig {
        &self.cfg
    }

    pub fn stats(&self) -> StationStats {
        self.stats
    }

    pub fn nav_until(&self) -> Micros {
        self.nav_until
    }

    /// Contention window of the first category.
    pub fn cw(&self) -> u32 {
        self.cats[0].cw
    }

    pub fn retry_count(&self) -> u32 {
        self.cats[0].retries
    }

    pub fn ica_state(&self) -> &IcaState {
        &self.ica
    }

    pub fn queue_len(&self) -> usize {
        self.cats.iter().map(|c| c.queue.len()).sum()
    }

    /// Packets still queued, per flow id.
    pub fn queued_packets(&self) -> impl Iterator<Item = &Packet> {
        self.cats.iter().flat_map(|c| c.queue.iter())
    }

    /// Actions needed at time zero (the coordinator's first superframe).
    pub fn start(&mut self, now: Micros) -> Vec<Action> {
        let mut out = Vec::new();
        if self.pc.is_some() {
            out.push(Action::SetTimer {
                kind: TimerKind::Superframe,
                at: now,
            });
        }
        out
    }

    pub fn handle(&mut self, event: MacEvent, ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match event {
            MacEvent::Enqueued(p) => {
                let c = p.category.min(self.cats.len() - 1);
                self.cats[c].queue.push_back(p);
            }
            MacEvent::MediumBusy => self.on_busy(ctx, &mut out),
            MacEvent::MediumIdle => self.on_idle(ctx, &mut out),
            MacEvent::Timer(kind) => self.on_timer(kind, ctx, &mut out),
            MacEvent::Received(rx) => self.on_receive(rx, ctx, &mut out),
            MacEvent::TxDone => self.on_tx_done(ctx, &mut out),
            MacEvent::NavHint(until) => {
                if !self.transmitting && self.exchange.is_none() {
                    self.nav_until = until;
                }
            }
        }
        self.resume(ctx, &mut out);
        out
    }

    // ---- contention ----------------------------------------------------

    fn has_traffic(&self) -> bool {
        self.cats.iter().any(|c| !c.queue.is_empty())
    }

    fn blocked(&self) -> bool {
        self.armed
            || self.transmitting
            || self.exchange.is_some()
            || self.pending.is_some()
            || self.reverse_wait.is_some()
            || self.pc.as_ref().is_some_and(|p| p.phase != PcPhase::Idle)
    }

    fn resume(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.blocked() || self.busy || !self.has_traffic() {
            return;
        }
        let now = ctx.now;
        if self.nav_until > now {
            if self.nav_timer != Some(self.nav_until) {
                self.nav_timer = Some(self.nav_until);
                out.push(Action::SetTimer {
                    kind: TimerKind::NavEnd,
                    at: self.nav_until,
                });
            }
            return;
        }
        let idle_from = self.idle_since.max(self.nav_until);
        let slot = self.cfg.params.timing.slot;
        let mut earliest: Option<Micros> = None;
        for i in 0..self.cats.len() {
            if self.cats[i].queue.is_empty() {
                continue;
            }
            if self.cats[i].backoff.is_none() {
                let b = self.draw(i, ctx.rng);
                self.cats[i].backoff = Some(b);
            }
            let c = &mut self.cats[i];
            let start = (idle_from + c.cfg.aifs).max(now);
            c.start = Some(start);
            let expiry = start + c.backoff.unwrap_or(0) * slot;
            earliest = Some(earliest.map_or(expiry, |e: Micros| e.min(expiry)));
        }
        if let Some(at) = earliest {
            self.armed = true;
            out.push(Action::SetTimer {
                kind: TimerKind::Contend,
                at,
            });
        }
    }

    fn draw(&self, cat: usize, rng: &mut RandomStream) -> u64 {
        let c = &self.cats[cat];
        if let BackoffScheme::Dfs {
            phi,
            scaling,
            compress,
            randomize,
        } = self.cfg.backoff
        {
            if let Some(head) = c.queue.front() {
                if head.first_attempt {
                    let u = if randomize { dfs_multiplier(rng) } else { 1.0 };
                    return dfs_backoff(head.remaining() * 8, phi, scaling, u, compress);
                }
            }
        }
        draw_backoff(c.cw, rng) as u64
    }

    /// Stops every active countdown, banking elapsed slots. A category that
    /// expires exactly now keeps running unless `ideal_sense` is set.
    fn freeze(&mut self, now: Micros, ideal: bool, out: &mut Vec<Action>) {
        if !self.armed {
            return;
        }
        let slot = self.cfg.params.timing.slot;
        let mut keep = false;
        for c in &mut self.cats {
            let Some(start) = c.start else { continue };
            let b = c.backoff.unwrap_or(0);
            if now >= start {
                if start + b * slot == now && !ideal {
                    keep = true;
                    continue;
                }
                let elapsed = (now - start) / slot;
                c.backoff = Some(b - elapsed.min(b));
            }
            c.start = None;
        }
        if !keep {
            self.armed = false;
            out.push(Action::CancelTimer(TimerKind::Contend));
        }
    }

    fn on_contend(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.armed = false;
        let now = ctx.now;
        let slot = self.cfg.params.timing.slot;
        let stalled = self.transmitting
            || self.exchange.is_some()
            || self.pending.is_some()
            || self.reverse_wait.is_some()
            || (ctx.ideal_sense && (self.busy || self.nav_until > now));
        let mut ready = Vec::new();
        for (i, c) in self.cats.iter_mut().enumerate() {
            let Some(start) = c.start.take() else {
                continue;
            };
            let b = c.backoff.unwrap_or(0);
            if !stalled && start + b * slot == now {
                ready.push((i, c.cfg.aifs));
            } else if now >= start {
                let elapsed = (now - start) / slot;
                c.backoff = Some(b - elapsed.min(b));
            }
        }
        let Some((winner, losers)) = edcf_contend(&ready) else {
            return;
        };
        for l in losers {
            self.stats.virtual_collisions += 1;
            let c = &mut self.cats[l];
            c.cw = expand_cw(c.cw, c.cfg.pf, c.cfg.cw_max);
            c.backoff = None;
            c.retries += 1;
            if let Some(h) = c.queue.front_mut() {
                h.first_attempt = false;
            }
            if c.retries > self.cfg.params.retry_limit {
                self.drop_head(l, out);
            }
        }
        self.cats[winner].backoff = None;
        self.stats.contention_wins += 1;
        self.start_access(winner, ctx, out);
    }

    // ---- rate selection ------------------------------------------------

    fn select_rate(&mut self, dst: NodeIdx, now: Micros) -> Rate {
        let base = self.cfg.params.data_rate;
        match &self.cfg.rate {
            RateScheme::Fixed => base,
            RateScheme::Arf(a) => {
                let initial = a.initial;
                self.arf
                    .entry(dst)
                    .or_insert_with(|| ArfState::new(initial))
                    .rate_at(now)
            }
            RateScheme::Rbar | RateScheme::Oar { .. } => *self.tentative.get(&dst).unwrap_or(&base),
        }
    }

    fn arf_feed(&mut self, dst: NodeIdx, result: ArfResult, now: Micros) {
        if let RateScheme::Arf(a) = &self.cfg.rate {
            let a = *a;
            let st = self
                .arf
                .entry(dst)
                .or_insert_with(|| ArfState::new(a.initial));
            arf_on_result(st, result, now, &a);
        }
    }

    // ---- exchanges -----------------------------------------------------

    fn units_for(&self, p: &Packet) -> Vec<Unit> {
        let thr = self.cfg.params.frag_threshold;
        let base_no = (p.acked / thr.max(1)) as u32;
        let mut offset = p.acked;
        fragment_plan(p.remaining(), thr)
            .into_iter()
            .map(|f| {
                let u = Unit {
                    packet: p.id,
                    offset,
                    bytes: f.size,
                    more: f.more_fragments,
                    number: base_no + f.number,
                };
                offset += f.size;
                u
            })
            .collect()
    }

    fn start_access(&mut self, cat: usize, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let Some(head) = self.cats[cat].queue.front().cloned() else {
            return;
        };
        let rate = self.select_rate(head.dst, ctx.now);
        let receiver_based = self.cfg.rate.receiver_based();
        let units = if receiver_based {
            vec![Unit {
                packet: head.id,
                offset: head.acked,
                bytes: head.remaining(),
                more: false,
                number: 0,
            }]
        } else {
            self.units_for(&head)
        };
        let use_rts =
            receiver_based || should_use_rts(units[0].bytes, self.cfg.params.rts_threshold);
        self.exchange = Some(Exchange {
            cat,
            dst: head.dst,
            rate,
            tentative: rate,
            rsh: false,
            mode: Mode::Normal,
            units,
            next: 0,
            phase: if use_rts {
                Phase::AwaitCts
            } else {
                Phase::SendingData
            },
        });
        if use_rts {
            let t = self.cfg.params.timing;
            let first = self.exchange.as_ref().unwrap().units[0].bytes;
            let mut rts = Frame::new(FrameKind::Rts, self.me, Some(head.dst), RTS_BYTES)
                .with_duration(t.rts_duration(airtime(first, rate)));
            rts.retry = self.cats[cat].retries > 0;
            if receiver_based {
                rts.rate_info = Some(RateInfo { rate, size: first });
            }
            self.transmit(rts, CONTROL_RATE, out);
        } else {
            let f = self.data_frame();
            self.transmit(f, rate, out);
        }
    }

    /// DATA frame for the exchange's current unit.
    fn data_frame(&self) -> Frame {
        let ex = self.exchange.as_ref().expect("exchange in progress");
        let u = ex.units[ex.next];
        let t = &self.cfg.params.timing;
        let cat = &self.cats[ex.cat];
        let pkt = cat
            .queue
            .iter()
            .find(|p| p.id == u.packet)
            .expect("unit packet is queued");
        let mut f =
            Frame::new(FrameKind::Data, self.me, Some(ex.dst), u.bytes).with_role(ex.mode.role());
        f.packet = Some(pkt.as_ref_at(u.offset));
        f.more_fragments = u.more;
        f.fragment_number = u.number;
        f.retry = cat.retries > 0;
        let next = ex
            .units
            .get(ex.next + 1)
            .filter(|_| u.more)
            .map(|n| airtime(n.bytes, ex.rate));
        f.duration = t.data_duration(next);
        f.rsh = ex.rsh && ex.next == 0;
        if matches!(self.cfg.backoff, BackoffScheme::Mild { .. }) {
            f.cw_advert = Some(cat.cw);
        }
        f
    }

    fn transmit(&mut self, frame: Frame, rate: Rate, out: &mut Vec<Action>) {
        self.transmitting = true;
        self.sent = Some(frame.clone());
        out.push(Action::Transmit { frame, rate });
    }

    fn respond_after_sifs(&mut self, frame: Frame, rate: Rate, now: Micros, out: &mut Vec<Action>) {
        self.pending = Some((frame, rate));
        out.push(Action::SetTimer {
            kind: TimerKind::Respond,
            at: now + self.cfg.params.timing.sifs,
        });
    }

    fn find_packet(&mut self, cat: usize, id: PacketId) -> Option<&mut Packet> {
        self.cats[cat].queue.iter_mut().find(|p| p.id == id)
    }

    fn remove_packet(&mut self, cat: usize, id: PacketId) -> Option<Packet> {
        let q = &mut self.cats[cat].queue;
        let pos = q.iter().position(|p| p.id == id)?;
        q.remove(pos)
    }

    fn on_success_policy(&mut self, cat: usize, now: Micros) {
        let c = &mut self.cats[cat];
        let (lo, hi) = (c.cfg.cw_min, c.cfg.cw_max);
        c.cw = match self.cfg.backoff {
            BackoffScheme::Beb | BackoffScheme::Dfs { .. } => lo,
            BackoffScheme::Mild { factor } => {
                mild_update(c.cw, MildOutcome::Success, factor, lo, hi)
            }
            BackoffScheme::Estimation { phi, .. } => {
                let (ws, wo) = self.estimate.totals(now);
                estimation_backoff_update(c.cw, ws, wo, phi, lo, hi)
            }
        };
    }

    fn on_failure_policy(&mut self, cat: usize, first_failure: bool, now: Micros) {
        let c = &mut self.cats[cat];
        let (lo, hi) = (c.cfg.cw_min, c.cfg.cw_max);
        c.cw = match self.cfg.backoff {
            BackoffScheme::Beb => expand_cw(c.cw, c.cfg.pf, hi),
            // The share comparison alone drives the window.
            BackoffScheme::Estimation { phi, .. } => {
                let (ws, wo) = self.estimate.totals(now);
                estimation_backoff_update(c.cw, ws, wo, phi, lo, hi)
            }
            BackoffScheme::Mild { factor } => {
                mild_update(c.cw, MildOutcome::Collision, factor, lo, hi)
            }
            BackoffScheme::Dfs { .. } if first_failure => lo,
            BackoffScheme::Dfs { .. } => expand_cw(c.cw, c.cfg.pf, hi),
        };
    }

    fn drop_head(&mut self, cat: usize, out: &mut Vec<Action>) {
        let c = &mut self.cats[cat];
        c.retries = 0;
        c.backoff = None;
        if !matches!(self.cfg.backoff, BackoffScheme::Estimation { .. }) {
            c.cw = c.cfg.cw_min;
        }
        if let Some(p) = c.queue.pop_front() {
            self.stats.drops += 1;
            out.push(Action::Completed {
                packet: p,
                outcome: PacketOutcome::Dropped,
            });
        }
    }

    /// One failed attempt of the packet `id` in category `cat`.
    fn attempt_failed(&mut self, cat: usize, id: PacketId, now: Micros, out: &mut Vec<Action>) {
        let first = self.find_packet(cat, id).map(|p| {
            let f = p.first_attempt;
            p.first_attempt = false;
            f
        });
        self.on_failure_policy(cat, first.unwrap_or(false), now);
        let c = &mut self.cats[cat];
        c.backoff = None;
        c.retries += 1;
        if c.retries > self.cfg.params.retry_limit {
            if c.queue.front().map(|p| p.id) != Some(id) {
                if let Some(pos) = c.queue.iter().position(|p| p.id == id) {
                    let p = c.queue.remove(pos).unwrap();
                    c.queue.push_front(p);
                }
            }
            self.drop_head(cat, out);
        }
    }

    /// `bytes` of packet `id` were acknowledged.
    fn unit_acked(
        &mut self,
        cat: usize,
        id: PacketId,
        bytes: u64,
        now: Micros,
        out: &mut Vec<Action>,
    ) {
        self.cats[cat].retries = 0;
        let done = match self.find_packet(cat, id) {
            Some(p) => {
                p.acked += bytes;
                p.acked >= p.bytes
            }
            None => false,
        };
        if done {
            let p = self.remove_packet(cat, id).expect("packet present");
            self.estimate.record_own(now, p.bytes * 8);
            self.on_success_policy(cat, now);
            self.cats[cat].backoff = None;
            out.push(Action::Completed {
                packet: p,
                outcome: PacketOutcome::Acked,
            });
        }
    }

    // ---- event handlers ------------------------------------------------

    fn on_busy(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.busy = true;
        self.freeze(ctx.now, ctx.ideal_sense, out);
        if self.transmitting {
            return;
        }
        if let Some(pc) = self.pc.as_mut() {
            if pc.timer_set && matches!(pc.phase, PcPhase::Cfp { .. } | PcPhase::WaitBeacon { .. })
            {
                pc.timer_set = false;
                out.push(Action::CancelTimer(TimerKind::PcfNext));
            }
        }
    }

    fn on_idle(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.busy = false;
        self.idle_since = ctx.now;
        let t = self.cfg.params.timing;
        if let Some(pc) = self.pc.as_mut() {
            if !pc.timer_set && !self.transmitting {
                let gap = match pc.phase {
                    PcPhase::WaitBeacon { .. } => Some(t.pifs),
                    PcPhase::Cfp { .. } => Some(if pc.response_complete { t.sifs } else { t.pifs }),
                    _ => None,
                };
                if let Some(gap) = gap {
                    pc.response_complete = false;
                    pc.timer_set = true;
                    out.push(Action::SetTimer {
                        kind: TimerKind::PcfNext,
                        at: ctx.now + gap,
                    });
                }
            }
        }
    }

    fn on_timer(&mut self, kind: TimerKind, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        let t = self.cfg.params.timing;
        match kind {
            TimerKind::Contend => self.on_contend(ctx, out),
            TimerKind::NavEnd => self.nav_timer = None,
            TimerKind::Respond => {
                if let Some((frame, rate)) = self.pending.take() {
                    if let Some(ex) = self.exchange.as_mut() {
                        if ex.phase == Phase::SendingData && frame.kind == FrameKind::Data {
                            ex.phase = Phase::AwaitAck;
                        }
                    }
                    self.freeze(now, true, out);
                    self.transmit(frame, rate, out);
                }
            }
            TimerKind::CtsTimeout => {
                if let Some(ex) = self
                    .exchange
                    .as_ref()
                    .filter(|e| e.phase == Phase::AwaitCts)
                {
                    let (cat, id) = (ex.cat, ex.units[0].packet);
                    self.exchange = None;
                    self.attempt_failed(cat, id, now, out);
                } else if self.reverse_wait.take().is_some() {
                    // Peer did not take up the reverse exchange; contend normally.
                }
            }
            TimerKind::AckTimeout => {
                if let Some(ex) = self.exchange.take() {
                    let u = ex.units[ex.next];
                    self.arf_feed(ex.dst, ArfResult::NoAck, now);
                    self.attempt_failed(ex.cat, u.packet, now, out);
                }
            }
            TimerKind::IcaCtsTimeout => self.on_ica_timeout(ctx, out),
            TimerKind::Superframe => {
                let Some(pc) = self.pc.as_mut() else { return };
                out.push(Action::SetTimer {
                    kind: TimerKind::Superframe,
                    at: now + pc.cfg.superframe_period,
                });
                pc.phase = PcPhase::WaitBeacon { boundary: now };
                if !self.busy {
                    pc.timer_set = true;
                    out.push(Action::SetTimer {
                        kind: TimerKind::PcfNext,
                        at: now + t.pifs,
                    });
                }
            }
            TimerKind::PcfNext => self.on_pcf_next(ctx, out),
        }
    }

    fn on_pcf_next(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        let t = self.cfg.params.timing;
        let data_rate = self.cfg.params.data_rate;
        let max_packet = self.cfg.max_packet;
        let own_busy = self.transmitting || self.exchange.is_some() || self.pending.is_some();
        let Some(pc) = self.pc.as_mut() else { return };
        pc.timer_set = false;
        match pc.phase {
            PcPhase::WaitBeacon { boundary } => {
                if own_busy || self.busy {
                    pc.timer_set = true;
                    out.push(Action::SetTimer {
                        kind: TimerKind::PcfNext,
                        at: now + t.slot,
                    });
                    return;
                }
                let end = boundary + pc.cfg.cfp_max;
                let beacon_end = now + airtime(BEACON_BYTES, CONTROL_RATE);
                if beacon_end >= end {
                    pc.phase = PcPhase::Idle;
                    return;
                }
                pc.cursor.begin_cfp();
                pc.phase = PcPhase::Cfp { end };
                let f = Frame::new(FrameKind::Beacon, self.me, None, BEACON_BYTES)
                    .with_duration(end - beacon_end)
                    .with_role(Role::ContentionFree);
                self.freeze(now, true, out);
                self.transmit(f, CONTROL_RATE, out);
            }
            PcPhase::Cfp { end } => {
                let poll = airtime(CF_POLL_BYTES, CONTROL_RATE);
                let need = poll
                    + t.sifs
                    + airtime(max_packet, data_rate)
                    + t.sifs
                    + t.ack_time()
                    + t.sifs
                    + airtime(CF_END_BYTES, CONTROL_RATE);
                let fits = now + need <= end;
                let pollable = pc.cfg.pollable.clone();
                let cf_ack = std::mem::take(&mut pc.cf_ack_owed);
                pc.awaiting_ack = false;
                let mut f = match pc.cursor.next(&pollable, fits) {
                    PollDecision::Poll(n) => {
                        Frame::new(FrameKind::CfPoll, self.me, Some(n), CF_POLL_BYTES)
                            .with_duration(end - now)
                    }
                    PollDecision::End => {
                        pc.phase = PcPhase::Ending;
                        Frame::new(FrameKind::CfEnd, self.me, None, CF_END_BYTES)
                    }
                };
                f.cf_ack = cf_ack;
                f.role = Role::ContentionFree;
                self.transmit(f, CONTROL_RATE, out);
            }
            PcPhase::Idle | PcPhase::Ending => {}
        }
    }

    fn on_tx_done(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.transmitting = false;
        let now = ctx.now;
        let t = self.cfg.params.timing;
        let Some(sent) = self.sent.take() else { return };
        match sent.kind {
            FrameKind::Rts => out.push(Action::SetTimer {
                kind: TimerKind::CtsTimeout,
                at: now + t.cts_timeout(),
            }),
            FrameKind::Data => {
                if let Some(ex) = self.exchange.as_mut() {
                    ex.phase = Phase::AwaitAck;
                    out.push(Action::SetTimer {
                        kind: TimerKind::AckTimeout,
                        at: now + t.ack_timeout(),
                    });
                }
            }
            FrameKind::Ack if self.reverse_wait.is_some() => out.push(Action::SetTimer {
                kind: TimerKind::CtsTimeout,
                at: now + t.cts_timeout(),
            }),
            FrameKind::Beacon | FrameKind::CfPoll => {
                let gap = if sent.kind == FrameKind::Beacon {
                    t.sifs
                } else {
                    t.pifs
                };
                if let Some(pc) = self.pc.as_mut() {
                    pc.timer_set = true;
                    pc.response_complete = false;
                    out.push(Action::SetTimer {
                        kind: TimerKind::PcfNext,
                        at: now + gap,
                    });
                }
            }
            FrameKind::CfEnd => {
                if let Some(pc) = self.pc.as_mut() {
                    pc.phase = PcPhase::Idle;
                }
            }
            _ => {}
        }
    }

    fn on_receive(&mut self, rx: Reception, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let f = &rx.frame;
        if self.pc.is_none() {
            self.check_cf_resolution(f, ctx.now, out);
        }
        if f.is_for(self.me) {
            self.on_addressed(rx, ctx, out);
        } else {
            self.on_overheard(&rx.frame, ctx, out);
        }
    }

    /// A polled node learns the fate of its contention-free DATA from the
    /// coordinator's next frame or from the addressee's ACK.
    fn check_cf_resolution(&mut self, f: &Frame, now: Micros, out: &mut Vec<Action>) {
        let Some(p) = self.cf_pending else { return };
        let from_pc = matches!(
            f.kind,
            FrameKind::Beacon | FrameKind::CfPoll | FrameKind::CfEnd
        );
        let acked = if f.kind == FrameKind::Ack && f.is_for(self.me) && f.src == p.dst {
            Some(true)
        } else if from_pc {
            Some(f.cf_ack && f.src == p.dst)
        } else {
            None
        };
        match acked {
            Some(true) => {
                self.cf_pending = None;
                self.unit_acked(p.cat, p.packet, p.bytes, now, out);
            }
            Some(false) => {
                self.cf_pending = None;
                let c = &mut self.cats[p.cat];
                c.retries += 1;
                if c.retries > self.cfg.params.retry_limit
                    && c.queue.front().map(|h| h.id) == Some(p.packet)
                {
                    self.drop_head(p.cat, out);
                }
            }
            None => {}
        }
    }

    fn on_addressed(&mut self, rx: Reception, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        let t = self.cfg.params.timing;
        let f = rx.frame;
        match f.kind {
            FrameKind::Rts => {
                let free = self.exchange.is_none()
                    && self.pending.is_none()
                    && self.reverse_wait.is_none()
                    && !self.transmitting
                    && self.nav_until <= now;
                if !free {
                    return;
                }
                let mut cts = Frame::new(FrameKind::Cts, self.me, Some(f.src), CTS_BYTES);
                match f.rate_info {
                    Some(info) => {
                        let selected = rbar_select_rate(rx.quality);
                        let sel = RateInfo {
                            rate: selected,
                            size: info.size,
                        };
                        cts.rate_info = Some(sel);
                        cts.rsh = rbar_needs_rsh(info.rate, selected);
                        cts.duration =
                            rbar_reservation(sel, &t, true) + if cts.rsh { rsh_time() } else { 0 };
                    }
                    None => cts.duration = t.cts_duration(f.duration),
                }
                self.respond_after_sifs(cts, CONTROL_RATE, now, out);
            }
            FrameKind::Cts => self.on_cts(&f, ctx, out),
            FrameKind::Data | FrameKind::DataCfAck => {
                if f.kind == FrameKind::DataCfAck {
                    if let Some(pc) = self.pc.as_mut() {
                        pc.cf_ack_owed = true;
                        pc.response_complete = true;
                        return;
                    }
                }
                if self.pending.is_some() || self.transmitting {
                    return;
                }
                let mut ack =
                    Frame::new(FrameKind::Ack, self.me, Some(f.src), ACK_BYTES).with_role(f.role);
                ack.acked_bytes = f.payload_bytes;
                if f.more_fragments {
                    ack.duration = t.ack_duration(f.duration);
                } else if let Some(w) = self.reverse_candidate(&f) {
                    let bytes = self.cats[w.cat]
                        .queue
                        .iter()
                        .find(|p| p.id == w.packet)
                        .map(|p| p.bytes)
                        .unwrap_or(0);
                    let rate = self.select_rate(w.peer, now);
                    ack.duration = dcfplus_ack_duration(Some(bytes), rate, &t);
                    self.reverse_wait = Some(w);
                }
                self.respond_after_sifs(ack, CONTROL_RATE, now, out);
            }
            FrameKind::Ack => self.on_ack(&f, ctx, out),
            FrameKind::CfPoll => {
                if let Some(pc_node) = Some(f.src) {
                    let head_cat = self.cats.iter().position(|c| !c.queue.is_empty());
                    let head = head_cat.and_then(|c| self.cats[c].queue.front());
                    let reply = handle_poll(self.me, pc_node, head, self.cfg.params.frag_threshold);
                    if reply.kind == FrameKind::DataCfAck {
                        let p = reply.packet.expect("poll reply carries a packet");
                        self.cf_pending = Some(CfPending {
                            cat: head_cat.unwrap(),
                            packet: p.id,
                            bytes: reply.payload_bytes,
                            dst: reply.dst.unwrap(),
                        });
                    }
                    let rate = if reply.kind == FrameKind::DataCfAck {
                        self.cfg.params.data_rate
                    } else {
                        CONTROL_RATE
                    };
                    self.respond_after_sifs(reply, rate, now, out);
                }
            }
            FrameKind::CfAck => {
                if let Some(pc) = self.pc.as_mut() {
                    pc.response_complete = true;
                }
            }
            FrameKind::Beacon | FrameKind::CfEnd => {}
        }
    }

    /// A reverse-priority packet for the sender of `data` that may ride on
    /// the ACK.
    fn reverse_candidate(&self, data: &Frame) -> Option<ReverseWait> {
        if !self.cfg.dcf_plus
            || data.kind != FrameKind::Data
            || data.role != Role::Normal
            || self.exchange.is_some()
            || self.reverse_wait.is_some()
        {
            return None;
        }
        for (ci, c) in self.cats.iter().enumerate() {
            for p in &c.queue {
                if p.reverse && p.dst == data.src && p.acked == 0 {
                    if dcfplus_allowed(data, p.bytes, self.cfg.params.frag_threshold) {
                        return Some(ReverseWait {
                            peer: data.src,
                            cat: ci,
                            packet: p.id,
                        });
                    }
                    return None;
                }
            }
        }
        None
    }

    fn on_cts(&mut self, f: &Frame, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        if let Some(w) = self.reverse_wait.filter(|w| w.peer == f.src) {
            self.reverse_wait = None;
            out.push(Action::CancelTimer(TimerKind::CtsTimeout));
            let Some(p) = self.cats[w.cat]
                .queue
                .iter()
                .find(|p| p.id == w.packet)
                .cloned()
            else {
                return;
            };
            let rate = self.select_rate(w.peer, now);
            self.stats.reverse_exchanges += 1;
            self.exchange = Some(Exchange {
                cat: w.cat,
                dst: w.peer,
                rate,
                tentative: rate,
                rsh: false,
                mode: Mode::Reverse,
                units: vec![Unit {
                    packet: p.id,
                    offset: 0,
                    bytes: p.bytes,
                    more: false,
                    number: 0,
                }],
                next: 0,
                phase: Phase::SendingData,
            });
            let d = self.data_frame();
            self.respond_after_sifs(d, rate, now, out);
            return;
        }
        let Some(ex) = self.exchange.as_ref() else {
            return;
        };
        if ex.phase != Phase::AwaitCts || ex.dst != f.src {
            return;
        }
        out.push(Action::CancelTimer(TimerKind::CtsTimeout));
        let mut ex = self.exchange.take().unwrap();
        if let Some(info) = f.rate_info {
            ex.rate = info.rate;
            ex.rsh = rbar_needs_rsh(ex.tentative, info.rate);
            self.tentative.insert(ex.dst, info.rate);
            if let RateScheme::Oar { temporal_cap } = self.cfg.rate {
                let q = &self.cats[ex.cat].queue;
                let run: Vec<&Packet> = q.iter().take_while(|p| p.dst == ex.dst).collect();
                let sizes: Vec<u64> = run.iter().map(|p| p.remaining()).collect();
                let n = oar_burst_count(&sizes, info.rate, self.cfg.max_packet, temporal_cap);
                ex.units = run
                    .iter()
                    .take(n)
                    .enumerate()
                    .map(|(i, p)| Unit {
                        packet: p.id,
                        offset: p.acked,
                        bytes: p.remaining(),
                        more: i + 1 < n,
                        number: 0,
                    })
                    .collect();
            }
        }
        ex.phase = Phase::SendingData;
        let rate = ex.rate;
        self.exchange = Some(ex);
        let d = self.data_frame();
        self.respond_after_sifs(d, rate, now, out);
    }

    fn on_ack(&mut self, f: &Frame, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        let t = self.cfg.params.timing;
        let Some(ex) = self.exchange.as_ref() else {
            return;
        };
        if ex.phase != Phase::AwaitAck || ex.dst != f.src {
            return;
        }
        out.push(Action::CancelTimer(TimerKind::AckTimeout));
        let mut ex = self.exchange.take().unwrap();
        let u = ex.units[ex.next];
        self.arf_feed(ex.dst, ArfResult::Ack, now);
        self.unit_acked(ex.cat, u.packet, u.bytes, now, out);
        ex.next += 1;
        let more = ex.next < ex.units.len() && u.more;
        if more && self.find_packet(ex.cat, ex.units[ex.next].packet).is_some() {
            ex.phase = Phase::SendingData;
            let rate = ex.rate;
            self.exchange = Some(ex);
            let d = self.data_frame();
            self.respond_after_sifs(d, rate, now, out);
            return;
        }
        if ex.mode == Mode::Normal && self.cfg.dcf_plus && f.duration > 0 && self.pending.is_none()
        {
            let cts = Frame::new(FrameKind::Cts, self.me, Some(f.src), CTS_BYTES)
                .with_duration(f.duration.saturating_sub(t.sifs + t.cts_time()))
                .with_role(Role::Reverse);
            self.respond_after_sifs(cts, CONTROL_RATE, now, out);
        }
    }

    fn on_overheard(&mut self, f: &Frame, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let now = ctx.now;
        let t = self.cfg.params.timing;
        match f.kind {
            FrameKind::CfEnd => self.nav_until = self.nav_until.min(now),
            FrameKind::Rts | FrameKind::Cts if f.rate_info.is_some() => {
                let info = f.rate_info.unwrap();
                let mut d = rbar_reservation(info, &t, f.kind == FrameKind::Cts);
                if f.rsh {
                    d += rsh_time();
                }
                self.nav_until = nav_merge(self.nav_until, d, now);
            }
            _ => self.nav_until = nav_merge(self.nav_until, f.duration, now),
        }
        if let (Some(adv), BackoffScheme::Mild { .. }) = (f.cw_advert, &self.cfg.backoff) {
            for c in &mut self.cats {
                c.cw = share_cw_on_hear(c.cw, adv).clamp(c.cfg.cw_min, c.cfg.cw_max);
            }
        }
        if f.kind == FrameKind::Ack && f.acked_bytes > 0 {
            self.estimate.record_other(now, f.acked_bytes * 8);
        }
        if let Some(pc) = self.pc.as_mut() {
            match f.kind {
                FrameKind::DataCfAck => pc.awaiting_ack = true,
                FrameKind::Ack if pc.awaiting_ack => {
                    pc.awaiting_ack = false;
                    pc.response_complete = true;
                }
                _ => {}
            }
        }
        if let Some(ica) = self.cfg.ica {
            match f.kind {
                FrameKind::Rts => {
                    ica_on_overhear(&mut self.ica, f, now, ica.cts_timeout);
                    out.push(Action::SetTimer {
                        kind: TimerKind::IcaCtsTimeout,
                        at: now + ica.cts_timeout,
                    });
                }
                FrameKind::Cts => {
                    ica_on_overhear(&mut self.ica, f, now, ica.cts_timeout);
                    out.push(Action::CancelTimer(TimerKind::IcaCtsTimeout));
                }
                _ => {}
            }
        }
    }

    fn on_ica_timeout(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let Some(ica) = self.cfg.ica else { return };
        let now = ctx.now;
        let t = self.cfg.params.timing;
        if !ica_on_timeout(&mut self.ica, now, &t) {
            return;
        }
        if self.transmitting
            || self.exchange.is_some()
            || self.pending.is_some()
            || self.reverse_wait.is_some()
            || self.pc.as_ref().is_some_and(|p| p.phase != PcPhase::Idle)
        {
            return;
        }
        let Some(rts) = self.ica.overheard_rts else {
            return;
        };
        let Some(cat) = self.cats.iter().position(|c| !c.queue.is_empty()) else {
            return;
        };
        let head = self.cats[cat].queue.front().cloned().unwrap();
        if head.dst == rts.sender || head.dst == rts.receiver {
            return;
        }
        let rate = self.select_rate(head.dst, now);
        let Some(sizes) = ica_plan_parallel(
            &self.ica,
            head.remaining(),
            self.cfg.params.frag_threshold,
            rate,
            now,
            &t,
            ica.min_fragment,
        ) else {
            return;
        };
        let mut offset = head.acked;
        let n = sizes.len();
        let units = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let u = Unit {
                    packet: head.id,
                    offset,
                    bytes: s,
                    more: i + 1 < n,
                    number: i as u32,
                };
                offset += s;
                u
            })
            .collect();
        self.ica.exposed = false;
        self.stats.parallel_starts += 1;
        self.freeze(now, true, out);
        self.exchange = Some(Exchange {
            cat,
            dst: head.dst,
            rate,
            tentative: rate,
            rsh: false,
            mode: Mode::Parallel,
            units,
            next: 0,
            phase: Phase::SendingData,
        });
        let d = self.data_frame();
        self.transmit(d, rate, out);
    }
}

/// Extra airtime of a reservation sub-header (sent at the control rate,
/// sharing the DATA preamble).
pub fn rsh_time() -> Micros {
    payload_time(RSH_BYTES, CONTROL_RATE)
}
