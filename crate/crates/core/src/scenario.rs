//! Scenario files: a sectioned `key = value` text format describing nodes,
//! links, MAC variants and traffic.
//!
//! ```text
//! [sim]
//! seed = 7
//! duration = 10s
//!
//! [nodes]
//! hear_range = 250
//! sense_range = 550
//! node = 1 0 0
//! node = 2 50 0
//!
//! [mac]
//! mac = dcf+rbar
//! node.2.rts_threshold = 3000
//!
//! [flows]
//! flow = 1 2 backlogged bytes=1500
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::dcf::{MacParams, Timing};
use crate::engine::Micros;
use crate::ext::{validate_categories, CategoryConfig};
use crate::fair::{default_dfs_scaling, FairnessReading, MILD_FACTOR};
use crate::frame::NodeIdx;
use crate::network::{FlowKind, FlowSpec, NetworkConfig};
use crate::pcf::SuperframeConfig;
use crate::phy::{ErrorModel, LinkQuality, Quality, Rate, Topology, TransitionMatrix};
use crate::rate::{ArfConfig, RateScheme};
use crate::station::{BackoffScheme, IcaConfig, StationConfig};

/// A scenario error, with the 1-based line it refers to when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError {
        line: Some(line),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateKind {
    #[default]
    Fixed,
    Arf,
    Rbar,
    Oar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackoffKind {
    #[default]
    Beb,
    Mild,
    Estimation,
    Dfs,
}

/// A MAC variant such as `dcf+rbar` or `dcf+ica`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Variant {
    pub rate: RateKind,
    pub backoff: BackoffKind,
    pub dcf_plus: bool,
    pub edcf: bool,
    pub ica: bool,
    pub pcf: bool,
    pub two_way: bool,
}

impl Variant {
    /// Parses `+`-joined tokens. `dcf` is the implicit base and may be omitted.
    pub fn parse(s: &str) -> Result<Variant, String> {
        let mut v = Variant::default();
        let s = s.trim();
        if s.is_empty() {
            return Err("empty variant".into());
        }
        for tok in s.split('+').map(str::trim) {
            let set_rate = |v: &mut Variant, r| {
                if v.rate != RateKind::Fixed {
                    return Err(format!("variant '{s}' names more than one rate scheme"));
                }
                v.rate = r;
                Ok(())
            };
            let set_backoff = |v: &mut Variant, b| {
                if v.backoff != BackoffKind::Beb {
                    return Err(format!("variant '{s}' names more than one backoff scheme"));
                }
                v.backoff = b;
                Ok(())
            };
            match tok.to_ascii_lowercase().as_str() {
                "dcf" => {}
                "arf" => set_rate(&mut v, RateKind::Arf)?,
                "rbar" => set_rate(&mut v, RateKind::Rbar)?,
                "oar" => set_rate(&mut v, RateKind::Oar)?,
                "mild" => set_backoff(&mut v, BackoffKind::Mild)?,
                "est" | "estimation" => set_backoff(&mut v, BackoffKind::Estimation)?,
                "dfs" => set_backoff(&mut v, BackoffKind::Dfs)?,
                "dcfplus" => v.dcf_plus = true,
                "edcf" => v.edcf = true,
                "ica" => v.ica = true,
                "pcf" => v.pcf = true,
                "2way" => v.two_way = true,
                other => return Err(format!("unknown variant token '{other}'")),
            }
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("dcf")?;
        let rate = match self.rate {
            RateKind::Fixed => None,
            RateKind::Arf => Some("arf"),
            RateKind::Rbar => Some("rbar"),
            RateKind::Oar => Some("oar"),
        };
        let backoff = match self.backoff {
            BackoffKind::Beb => None,
            BackoffKind::Mild => Some("mild"),
            BackoffKind::Estimation => Some("est"),
            BackoffKind::Dfs => Some("dfs"),
        };
        let flags = [
            (self.dcf_plus, "dcfplus"),
            (self.edcf, "edcf"),
            (self.ica, "ica"),
            (self.pcf, "pcf"),
            (self.two_way, "2way"),
        ];
        for t in rate
            .into_iter()
            .chain(backoff)
            .chain(flags.iter().filter(|(on, _)| *on).map(|(_, t)| *t))
        {
            write!(f, "+{t}")?;
        }
        Ok(())
    }
}

/// Per-node MAC settings before they are turned into a station config.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMac {
    pub variant: Variant,
    pub params: MacParams,
    pub arf: ArfConfig,
    pub oar_temporal_cap: bool,
    pub mild_factor: f64,
    pub phi: Option<f64>,
    pub est_window: Micros,
    pub dfs_scaling: Option<f64>,
    pub dfs_compress: Option<u64>,
    pub dfs_randomize: bool,
    pub ica_cts_timeout: Option<Micros>,
    pub ica_min_fragment: u64,
}

impl Default for NodeMac {
    fn default() -> Self {
        NodeMac {
            variant: Variant::default(),
            params: MacParams::default(),
            arf: ArfConfig::default(),
            oar_temporal_cap: true,
            mild_factor: MILD_FACTOR,
            phi: None,
            est_window: 100_000,
            dfs_scaling: None,
            dfs_compress: None,
            dfs_randomize: true,
            ica_cts_timeout: None,
            ica_min_fragment: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcfSettings {
    pub pc: NodeIdx,
    pub superframe: SuperframeConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub duration: Micros,
    pub window: Micros,
    pub capture_ratio: f64,
    pub ideal_sense: bool,
    pub queue_limit: usize,
    pub reading: FairnessReading,
    pub topology: Topology,
    pub links: LinkQuality,
    pub error_model: ErrorModel,
    pub macs: Vec<NodeMac>,
    pub flows: Vec<FlowSpec>,
    pub pcf: Option<PcfSettings>,
    pub categories: Vec<CategoryConfig>,
}

impl Scenario {
    /// Same scenario with every node switched to `variant`.
    pub fn with_variant(&self, variant: Variant) -> Scenario {
        let mut s = self.clone();
        for m in &mut s.macs {
            m.variant = variant;
        }
        s
    }

    pub fn max_packet(&self) -> u64 {
        self.flows
            .iter()
            .map(FlowSpec::packet_bytes)
            .max()
            .unwrap_or(1500)
    }

    /// Normalized share of the flows sourced at `node`; 1 for a node that
    /// sources nothing.
    pub fn node_share(&self, node: NodeIdx) -> f64 {
        let total: f64 = self.flows.iter().map(|f| f.share).sum();
        let own: f64 = self
            .flows
            .iter()
            .filter(|f| f.src == node)
            .map(|f| f.share)
            .sum();
        if own <= 0.0 || total <= 0.0 {
            return 1.0;
        }
        own / total
    }

    fn station_config(&self, node: NodeIdx) -> Result<StationConfig, ScenarioError> {
        let m = &self.macs[node];
        let v = m.variant;
        let mut params = m.params.clone();
        if v.two_way {
            params.rts_threshold = u64::MAX;
        }
        let mut cfg = StationConfig::dcf(params.clone());
        cfg.max_packet = self.max_packet();
        cfg.rate = match v.rate {
            RateKind::Fixed => RateScheme::Fixed,
            RateKind::Arf => RateScheme::Arf(m.arf),
            RateKind::Rbar => RateScheme::Rbar,
            RateKind::Oar => RateScheme::Oar {
                temporal_cap: m.oar_temporal_cap,
            },
        };
        let share = || m.phi.unwrap_or_else(|| self.node_share(node));
        cfg.backoff = match v.backoff {
            BackoffKind::Beb => BackoffScheme::Beb,
            BackoffKind::Mild => BackoffScheme::Mild {
                factor: m.mild_factor,
            },
            BackoffKind::Estimation => BackoffScheme::Estimation {
                phi: m.phi.unwrap_or(0.5),
                window: m.est_window,
            },
            BackoffKind::Dfs => BackoffScheme::Dfs {
                phi: share(),
                scaling: m
                    .dfs_scaling
                    .unwrap_or_else(|| default_dfs_scaling(cfg.max_packet, params.cw_min)),
                compress: m.dfs_compress,
                randomize: m.dfs_randomize,
            },
        };
        if v.edcf && !self.categories.is_empty() {
            cfg.categories = self.categories.clone();
        }
        cfg.dcf_plus = v.dcf_plus;
        if v.ica {
            cfg.ica = Some(IcaConfig {
                cts_timeout: m.ica_cts_timeout.unwrap_or(params.timing.cts_timeout()),
                min_fragment: m.ica_min_fragment,
            });
        }
        if v.pcf {
            if let Some(p) = self.pcf.as_ref().filter(|p| p.pc == node) {
                cfg.pc = Some(p.superframe.clone());
            }
        }
        Ok(cfg)
    }

    /// Builds the simulator configuration for one run.
    pub fn network_config(&self, trace: bool) -> Result<NetworkConfig, ScenarioError> {
        let stations = (0..self.topology.len())
            .map(|i| self.station_config(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NetworkConfig {
            seed: self.seed,
            duration: self.duration,
            topology: self.topology.clone(),
            links: self.links.clone(),
            error_model: self.error_model.clone(),
            capture_ratio: self.capture_ratio,
            ideal_sense: self.ideal_sense,
            stations,
            flows: self.flows.clone(),
            queue_limit: self.queue_limit,
            trace,
        })
    }
}

/// Parses `10s`, `100ms`, `20us` or a bare microsecond count.
pub fn parse_duration(s: &str) -> Option<Micros> {
    let s = s.trim();
    let (num, mult) = if let Some(n) = s.strip_suffix("ms") {
        (n, 1_000.0)
    } else if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1_000_000.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().ok()?;
    if !(v >= 0.0) || !v.is_finite() {
        return None;
    }
    let us = v * mult;
    (us.fract() == 0.0).then_some(us as Micros)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.trim()
        .parse()
        .or_else(|_| err(line, format!("'{key}' expects a number, got '{v}'")))
}

fn dur(line: usize, key: &str, v: &str) -> Result<Micros, ScenarioError> {
    parse_duration(v).map_or_else(
        || err(line, format!("'{key}' expects a duration, got '{v}'")),
        Ok,
    )
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    parse_bool(v).map_or_else(
        || err(line, format!("'{key}' expects true or false, got '{v}'")),
        Ok,
    )
}

fn quality(line: usize, v: &str) -> Result<Quality, ScenarioError> {
    Quality::parse(v.trim()).map_or_else(|| err(line, format!("unknown link quality '{v}'")), Ok)
}

#[derive(Default)]
struct Raw {
    sim: Vec<(usize, String, String)>,
    nodes: Vec<(usize, String, String)>,
    links: Vec<(usize, String, String)>,
    mac: Vec<(usize, String, String)>,
    flows: Vec<(usize, String, String)>,
    pcf: Vec<(usize, String, String)>,
    edcf: Vec<(usize, String, String)>,
}

fn split_sections(text: &str) -> Result<Raw, ScenarioError> {
    let mut raw = Raw::default();
    let mut section: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim() {
                s @ ("sim" | "nodes" | "links" | "mac" | "flows" | "pcf" | "edcf") => Some(s),
                other => return err(ln, format!("unknown section [{other}]")),
            };
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(ln, format!("expected 'key = value', got '{line}'"));
        };
        let entry = (ln, k.trim().to_string(), v.trim().to_string());
        let bucket = match section {
            Some("sim") => &mut raw.sim,
            Some("nodes") => &mut raw.nodes,
            Some("links") => &mut raw.links,
            Some("mac") => &mut raw.mac,
            Some("flows") => &mut raw.flows,
            Some("pcf") => &mut raw.pcf,
            Some("edcf") => &mut raw.edcf,
            _ => return err(ln, "key outside of any section"),
        };
        bucket.push(entry);
    }
    Ok(raw)
}

fn apply_mac_key(m: &mut NodeMac, ln: usize, key: &str, v: &str) -> Result<(), ScenarioError> {
    let p = &mut m.params;
    match key {
        "mac" => m.variant = Variant::parse(v).or_else(|e| err(ln, e))?,
        "rate" => {
            p.data_rate = Rate::from_mbps(num(ln, key, v)?).or_else(|e| err(ln, e.to_string()))?
        }
        "rts_threshold" => p.rts_threshold = num(ln, key, v)?,
        "frag_threshold" => p.frag_threshold = num(ln, key, v)?,
        "retry_limit" => p.retry_limit = num(ln, key, v)?,
        "cw_min" => p.cw_min = num(ln, key, v)?,
        "cw_max" => p.cw_max = num(ln, key, v)?,
        "slot" => p.timing = Timing::from_slot_sifs(dur(ln, key, v)?, p.timing.sifs),
        "sifs" => p.timing = Timing::from_slot_sifs(p.timing.slot, dur(ln, key, v)?),
        "arf.recovery" => m.arf.recovery = dur(ln, key, v)?,
        "arf.success_threshold" => m.arf.success_threshold = num(ln, key, v)?,
        "arf.initial" => {
            m.arf.initial = Rate::from_mbps(num(ln, key, v)?).or_else(|e| err(ln, e.to_string()))?
        }
        "oar.temporal_cap" => m.oar_temporal_cap = boolean(ln, key, v)?,
        "mild.factor" => m.mild_factor = num(ln, key, v)?,
        "phi" => {
            let phi: f64 = num(ln, key, v)?;
            if !(phi > 0.0 && phi <= 1.0) {
                return err(ln, format!("phi must be in (0, 1], got {phi}"));
            }
            m.phi = Some(phi);
        }
        "est.window" => m.est_window = dur(ln, key, v)?,
        "dfs.scaling" => m.dfs_scaling = Some(num(ln, key, v)?),
        "dfs.compress" => {
            m.dfs_compress = if v.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(num(ln, key, v)?)
            }
        }
        "dfs.randomize" => m.dfs_randomize = boolean(ln, key, v)?,
        "ica.cts_timeout" => m.ica_cts_timeout = Some(dur(ln, key, v)?),
        "ica.min_fragment" => m.ica_min_fragment = num(ln, key, v)?,
        _ => return err(ln, format!("unknown key '{key}' in [mac]")),
    }
    Ok(())
}

fn parse_flow(
    ln: usize,
    v: &str,
    topo: &Topology,
    node: &dyn Fn(usize, &str) -> Result<NodeIdx, ScenarioError>,
) -> Result<FlowSpec, ScenarioError> {
    let mut it = v.split_whitespace();
    let (Some(src), Some(dst), Some(kind)) = (it.next(), it.next(), it.next()) else {
        return err(ln, "flow expects '<src> <dst> <type> [key=value ...]'");
    };
    let src = node(ln, src)?;
    let dst = node(ln, dst)?;
    if src == dst {
        return err(ln, format!("flow from node {} to itself", topo.id(src)));
    }
    let mut opts = BTreeMap::new();
    for kv in it {
        let Some((k, v)) = kv.split_once('=') else {
            return err(ln, format!("flow option '{kv}' is not key=value"));
        };
        opts.insert(k.to_string(), v.to_string());
    }
    let mut take = |k: &str| opts.remove(k);
    let bytes: u64 = take("bytes")
        .map(|b| num(ln, "bytes", &b))
        .transpose()?
        .unwrap_or(1500);
    if bytes == 0 {
        return err(ln, "flow packets need at least one byte");
    }
    let kind = match kind.to_ascii_lowercase().as_str() {
        "backlogged" => FlowKind::Backlogged {
            bytes,
            depth: take("depth")
                .map(|d| num(ln, "depth", &d))
                .transpose()?
                .unwrap_or(4),
        },
        "cbr" => {
            let rate_bps: u64 = match take("rate") {
                Some(r) => num(ln, "rate", &r)?,
                None => return err(ln, "cbr flow needs rate=<bps>"),
            };
            if rate_bps == 0 {
                return err(ln, "cbr rate must be positive");
            }
            FlowKind::Cbr { rate_bps, bytes }
        }
        "echo" => FlowKind::Echo { bytes },
        other => return err(ln, format!("unknown flow type '{other}'")),
    };
    let mut f = FlowSpec::new(src, dst, kind);
    if let Some(s) = take("start") {
        f.start = dur(ln, "start", &s)?;
    }
    if let Some(s) = take("stop") {
        f.stop = dur(ln, "stop", &s)?;
    }
    if let Some(c) = take("category") {
        f.category = num(ln, "category", &c)?;
    }
    if let Some(r) = take("reverse") {
        f.reverse = boolean(ln, "reverse", &r)?;
    }
    if let Some(w) = take("window") {
        let w: usize = num(ln, "window", &w)?;
        if w == 0 || !matches!(f.kind, FlowKind::Backlogged { .. }) {
            return err(
                ln,
                "window applies to backlogged flows and must be positive",
            );
        }
        f.window = Some(w);
    }
    if let Some(c) = take("count") {
        f.count = Some(num(ln, "count", &c)?);
    }
    if let Some(s) = take("share") {
        f.share = num(ln, "share", &s)?;
        if !(f.share > 0.0) {
            return err(ln, "flow share must be positive");
        }
    }
    if matches!(f.kind, FlowKind::Echo { .. }) {
        f.reverse = true;
    }
    if let Some(k) = opts.keys().next() {
        return err(ln, format!("unknown flow option '{k}'"));
    }
    if f.stop <= f.start {
        return err(ln, "flow stop must be after start");
    }
    Ok(f)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw = split_sections(text)?;

    let mut seed = 1u64;
    let mut duration = None;
    let mut window = 100_000;
    let mut capture_ratio = 10.0;
    let mut ideal_sense = false;
    let mut queue_limit = 100usize;
    let mut reading = FairnessReading::WorstPair;
    for (ln, k, v) in &raw.sim {
        let ln = *ln;
        match k.as_str() {
            "seed" => seed = num(ln, k, v)?,
            "duration" => duration = Some(dur(ln, k, v)?),
            "window" => window = dur(ln, k, v)?,
            "capture_ratio" => capture_ratio = num(ln, k, v)?,
            "ideal_sense" => ideal_sense = boolean(ln, k, v)?,
            "queue_limit" => queue_limit = num(ln, k, v)?,
            "fairness" => {
                reading = match v.as_str() {
                    "worst_pair" => FairnessReading::WorstPair,
                    "best_pair" => FairnessReading::BestPair,
                    _ => {
                        return err(
                            ln,
                            format!("fairness expects worst_pair or best_pair, got '{v}'"),
                        )
                    }
                }
            }
            _ => return err(ln, format!("unknown key '{k}' in [sim]")),
        }
    }
    let duration = match duration {
        Some(d) if d > 0 => d,
        _ => {
            return Err(ScenarioError {
                line: None,
                message: "[sim] needs a positive duration".into(),
            })
        }
    };
    if window == 0 {
        return Err(ScenarioError {
            line: None,
            message: "window must be positive".into(),
        });
    }

    let mut hear = 250.0;
    let mut sense = None;
    let mut nodes = Vec::new();
    for (ln, k, v) in &raw.nodes {
        let ln = *ln;
        match k.as_str() {
            "hear_range" => hear = num(ln, k, v)?,
            "sense_range" => sense = Some(num(ln, k, v)?),
            "node" => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                let [id, x, y] = parts[..] else {
                    return err(ln, "node expects '<id> <x> <y>'");
                };
                let id: u32 = num(ln, "node id", id)?;
                if nodes.iter().any(|&(i, _, _)| i == id) {
                    return err(ln, format!("duplicate node id {id}"));
                }
                nodes.push((id, num(ln, "x", x)?, num(ln, "y", y)?));
            }
            _ => return err(ln, format!("unknown key '{k}' in [nodes]")),
        }
    }
    if nodes.is_empty() {
        return Err(ScenarioError {
            line: None,
            message: "[nodes] declares no nodes".into(),
        });
    }
    let topology =
        Topology::new(nodes, hear, sense.unwrap_or(hear)).map_err(|e| ScenarioError {
            line: None,
            message: e.to_string(),
        })?;
    let n = topology.len();
    let node = |ln: usize, s: &str| -> Result<NodeIdx, ScenarioError> {
        let id: u32 = num(ln, "node id", s)?;
        topology
            .index_of(id)
            .map_or_else(|| err(ln, format!("unknown node {id}")), Ok)
    };

    let mut initial = Quality::High;
    let mut dwell = 0;
    let mut rows: [Option<[f64; 4]>; 4] = [None; 4];
    let mut error_model = ErrorModel::default();
    let mut overrides = Vec::new();
    let mut matrix_line = 0;
    for (ln, k, v) in &raw.links {
        let ln = *ln;
        match k.as_str() {
            "initial" => initial = quality(ln, v)?,
            "dwell" => dwell = dur(ln, k, v)?,
            "fer" => {
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(|x| num(ln, k, x))
                    .collect::<Result<_, _>>()?;
                let Ok(arr) = <[f64; 4]>::try_from(vals) else {
                    return err(ln, "fer expects four values for BAD LOW MID HIGH");
                };
                if arr.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return err(ln, "fer values must lie in [0, 1]");
                }
                error_model.base_fer = arr;
            }
            "fer_size" => error_model.base_size = num(ln, k, v)?,
            "control_errors" => error_model.control_errors = boolean(ln, k, v)?,
            "link" => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                let [a, b, q] = parts[..] else {
                    return err(ln, "link expects '<a> <b> <quality>'");
                };
                overrides.push((node(ln, a)?, node(ln, b)?, quality(ln, q)?));
            }
            _ => {
                let Some(state) = k.strip_prefix("row.") else {
                    return err(ln, format!("unknown key '{k}' in [links]"));
                };
                let from = quality(ln, state)?;
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(|x| num(ln, k, x))
                    .collect::<Result<_, _>>()?;
                let Ok(arr) = <[f64; 4]>::try_from(vals) else {
                    return err(ln, "a transition row needs four probabilities");
                };
                rows[from.index()] = Some(arr);
                matrix_line = ln;
            }
        }
    }
    let matrix = if rows.iter().all(Option::is_none) {
        TransitionMatrix::identity()
    } else {
        let mut m = TransitionMatrix::identity().rows().to_owned();
        for (i, r) in rows.iter().enumerate() {
            if let Some(r) = r {
                m[i] = *r;
            }
        }
        TransitionMatrix::new(m).or_else(|e| err(matrix_line, e.to_string()))?
    };
    let mut links = LinkQuality::new(n, initial, matrix, dwell);
    for (a, b, q) in overrides {
        links.set(a, b, q);
        links.set(b, a, q);
    }

    let mut base = NodeMac::default();
    let mut per_node: Vec<(usize, NodeIdx, String, String)> = Vec::new();
    for (ln, k, v) in &raw.mac {
        if let Some(rest) = k.strip_prefix("node.") {
            let Some((id, key)) = rest.split_once('.') else {
                return err(*ln, format!("expected node.<id>.<key>, got '{k}'"));
            };
            per_node.push((*ln, node(*ln, id)?, key.to_string(), v.clone()));
        } else {
            apply_mac_key(&mut base, *ln, k, v)?;
        }
    }
    let mut macs = vec![base; n];
    for (ln, i, k, v) in &per_node {
        apply_mac_key(&mut macs[*i], *ln, k, v)?;
    }
    for (i, m) in macs.iter().enumerate() {
        m.params.validate().map_err(|e| ScenarioError {
            line: None,
            message: format!("node {}: {e}", topology.id(i)),
        })?;
    }

    let mut flows = Vec::new();
    for (ln, k, v) in &raw.flows {
        if k != "flow" {
            return err(*ln, format!("unknown key '{k}' in [flows]"));
        }
        flows.push(parse_flow(*ln, v, &topology, &node)?);
    }

    let mut pcf = None;
    if !raw.pcf.is_empty() {
        let mut pc = None;
        let mut period = 100_000;
        let mut cfp_max = 40_000;
        let mut cp_min = None;
        let mut poll = Vec::new();
        for (ln, k, v) in &raw.pcf {
            let ln = *ln;
            match k.as_str() {
                "pc" => pc = Some(node(ln, v)?),
                "period" => period = dur(ln, k, v)?,
                "cfp_max" => cfp_max = dur(ln, k, v)?,
                "cp_min" => cp_min = Some(dur(ln, k, v)?),
                "poll" => {
                    for id in v.split_whitespace() {
                        poll.push(node(ln, id)?);
                    }
                }
                _ => return err(ln, format!("unknown key '{k}' in [pcf]")),
            }
        }
        let Some(pc) = pc else {
            return Err(ScenarioError {
                line: None,
                message: "[pcf] needs a pc node".into(),
            });
        };
        let p = &macs[pc].params;
        let max_data = crate::phy::airtime(
            flows
                .iter()
                .map(FlowSpec::packet_bytes)
                .max()
                .unwrap_or(1500),
            p.data_rate,
        );
        let max_exchange = p.timing.max_exchange(p.cw_max, max_data);
        let superframe = SuperframeConfig {
            superframe_period: period,
            cfp_max,
            pollable: poll,
            cp_min: cp_min.unwrap_or(max_exchange),
        };
        superframe
            .validate(max_exchange)
            .map_err(|e| ScenarioError {
                line: None,
                message: e.to_string(),
            })?;
        pcf = Some(PcfSettings { pc, superframe });
    }

    let timing = macs[0].params.timing;
    let mut cats: BTreeMap<usize, CategoryConfig> = BTreeMap::new();
    for (ln, k, v) in &raw.edcf {
        let ln = *ln;
        let Some(id) = k.strip_prefix("category.") else {
            return err(ln, format!("unknown key '{k}' in [edcf]"));
        };
        let id: usize = num(ln, "category id", id)?;
        let parts: Vec<&str> = v.split_whitespace().collect();
        let [aifs, lo, hi, pf] = parts[..] else {
            return err(ln, "category expects '<aifs> <cw_min> <cw_max> <pf>'");
        };
        let c = CategoryConfig {
            aifs: dur(ln, "aifs", aifs)?,
            cw_min: num(ln, "cw_min", lo)?,
            cw_max: num(ln, "cw_max", hi)?,
            pf: num(ln, "pf", pf)?,
        };
        c.validate(&timing).or_else(|e| err(ln, e.to_string()))?;
        cats.insert(id, c);
    }
    let categories: Vec<CategoryConfig> = cats.values().copied().collect();
    if !categories.is_empty() {
        if cats.keys().copied().ne(0..categories.len()) {
            return Err(ScenarioError {
                line: None,
                message: "EDCF categories must be numbered 0, 1, 2, ... without gaps".into(),
            });
        }
        validate_categories(&categories, &timing).map_err(|e| ScenarioError {
            line: None,
            message: e.to_string(),
        })?;
    }
    let cat_count = categories.len().max(1);
    for (f, (ln, _, _)) in flows.iter().zip(&raw.flows) {
        let uses_edcf = macs[f.src].variant.edcf && !categories.is_empty();
        if f.category >= if uses_edcf { cat_count } else { 1 } {
            return err(
                *ln,
                format!(
                    "flow category {} is not configured at its source",
                    f.category
                ),
            );
        }
    }
    for (i, m) in macs.iter().enumerate() {
        if m.variant.pcf && pcf.is_none() {
            return Err(ScenarioError {
                line: None,
                message: format!(
                    "node {} uses pcf but the scenario has no [pcf] section",
                    topology.id(i)
                ),
            });
        }
    }
    Ok(Scenario {
        seed,
        duration,
        window,
        capture_ratio,
        ideal_sense,
        queue_limit,
        reading,
        topology,
        links,
        error_model,
        macs,
        flows,
        pcf,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[sim]
duration = 1s
[nodes]
node = 1 0 0
node = 2 10 0
[flows]
flow = 1 2 backlogged bytes=1000
";

    #[test]
    fn minimal_parses() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.duration, 1_000_000);
        assert_eq!(s.topology.len(), 2);
        assert_eq!(s.flows.len(), 1);
        assert_eq!(s.flows[0].packet_bytes(), 1000);
        assert_eq!(s.macs[0].variant, Variant::default());
    }

    #[test]
    fn unknown_flow_node_is_named() {
        let text = MINIMAL.replace("flow = 1 2", "flow = 1 9");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.message.contains("unknown node 9"), "{e}");
        assert_eq!(e.line, Some(8));
    }

    #[test]
    fn duplicate_node_rejected() {
        let text = MINIMAL.replace("node = 2 10 0", "node = 1 10 0");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.message.contains("duplicate node id 1"));
        assert_eq!(e.line, Some(6));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("duration = 1s", "duration = 1s\nspeed = 3");
        let e = parse_scenario(&text).unwrap_err();
        assert_eq!(e.line, Some(4));
        let text = format!("{MINIMAL}[mac]\nnode.2.colour = red\n");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn missing_duration() {
        let text = MINIMAL.replace("duration = 1s", "seed = 3");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn variant_tokens() {
        let v = Variant::parse("dcf+rbar+ica").unwrap();
        assert_eq!(v.rate, RateKind::Rbar);
        assert!(v.ica);
        assert_eq!(v.to_string(), "dcf+rbar+ica");
        assert_eq!(Variant::parse("oar").unwrap().to_string(), "dcf+oar");
        assert!(Variant::parse("arf+rbar").is_err());
        assert!(Variant::parse("dcf+warp").is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("10s"), Some(10_000_000));
        assert_eq!(parse_duration("100ms"), Some(100_000));
        assert_eq!(parse_duration("315us"), Some(315));
        assert_eq!(parse_duration("42"), Some(42));
        assert_eq!(parse_duration("1.5ms"), Some(1_500));
        assert_eq!(parse_duration("-1"), None);
        assert_eq!(parse_duration("fast"), None);
    }

    #[test]
    fn per_node_overrides() {
        let text = format!("{MINIMAL}[mac]\nmac = dcf+arf\nrts_threshold = 3000\nnode.2.mac = dcf+rbar\nnode.2.phi = 0.25\n");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.macs[0].variant.rate, RateKind::Arf);
        assert_eq!(s.macs[1].variant.rate, RateKind::Rbar);
        assert_eq!(s.macs[1].params.rts_threshold, 3000);
        assert_eq!(s.macs[1].phi, Some(0.25));
    }

    #[test]
    fn links_and_matrix() {
        let text = format!(
            "{MINIMAL}[links]\ninitial = MID\ndwell = 10ms\nrow.HIGH = 0.2 0 0 0.8\nlink = 1 2 LOW\n"
        );
        let s = parse_scenario(&text).unwrap();
        assert!(!s.links.is_static());
        assert_eq!(s.links.get(0, 1), Quality::Low);
        assert_eq!(s.links.get(1, 0), Quality::Low);
        let bad = format!("{MINIMAL}[links]\nrow.HIGH = 0.2 0 0 0.7\n");
        assert_eq!(parse_scenario(&bad).unwrap_err().line, Some(10));
    }

    #[test]
    fn pcf_requires_section() {
        let text = format!("{MINIMAL}[mac]\nmac = dcf+pcf\n");
        assert!(parse_scenario(&text).is_err());
        let text = format!("{MINIMAL}[mac]\nmac = dcf+pcf\n[pcf]\npc = 1\npoll = 2\nperiod = 100ms\ncfp_max = 40ms\n");
        let s = parse_scenario(&text).unwrap();
        let cfg = s.network_config(false).unwrap();
        assert!(cfg.stations[0].pc.is_some());
        assert!(cfg.stations[1].pc.is_none());
    }

    #[test]
    fn edcf_categories() {
        let text = format!(
            "{MINIMAL}[mac]\nmac = dcf+edcf\n[edcf]\ncategory.0 = 50 16 256 2\ncategory.1 = 90 32 512 1.5\n"
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.categories.len(), 2);
        let bad = format!("{MINIMAL}[edcf]\ncategory.0 = 30 16 256 2\n");
        assert!(parse_scenario(&bad).is_err());
    }

    #[test]
    fn flow_options() {
        let text = MINIMAL.replace(
            "backlogged bytes=1000",
            "cbr rate=64000 bytes=200 start=1ms stop=500ms share=2",
        );
        let s = parse_scenario(&text).unwrap();
        let f = &s.flows[0];
        assert_eq!(
            f.kind,
            FlowKind::Cbr {
                rate_bps: 64_000,
                bytes: 200
            }
        );
        assert_eq!((f.start, f.stop), (1_000, 500_000));
        let bad = MINIMAL.replace("bytes=1000", "bytes=1000 colour=red");
        assert!(parse_scenario(&bad).is_err());
        let bad = MINIMAL.replace("backlogged", "cbr");
        assert!(parse_scenario(&bad).is_err());
    }
}
