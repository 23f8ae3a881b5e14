//! Running scenarios and turning raw run output into metrics and CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::Micros;
use crate::fair::fairness_index_with;
use crate::frame::{FrameKind, Role};
use crate::network::{Network, RunOutput};
use crate::scenario::{Scenario, ScenarioError, Variant};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Sim(#[from] crate::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("compare needs at least one variant")]
    NoVariants,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMetrics {
    pub flow: usize,
    pub src: u32,
    pub dst: u32,
    pub generated_packets: u64,
    pub generated_bits: u64,
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub dropped: u64,
    pub queued: u64,
    pub throughput_bps: f64,
    pub mean_delay_us: f64,
    pub p95_delay_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub duration: Micros,
    pub flows: Vec<FlowMetrics>,
    pub collision_events: u64,
    pub transmissions: u64,
    pub collision_fraction: f64,
    /// Collided ACKs that closed an ordinary exchange.
    pub primary_ack_collisions: u64,
    pub fairness_series: Vec<f64>,
}

impl Metrics {
    pub fn aggregate_throughput_bps(&self) -> f64 {
        self.flows.iter().map(|f| f.throughput_bps).sum()
    }

    pub fn delivered_bits(&self) -> u64 {
        self.flows.iter().map(|f| f.delivered_bits).sum()
    }

    /// Time average of the windowed fairness index; `None` with no windows.
    pub fn mean_fairness(&self) -> Option<f64> {
        (!self.fairness_series.is_empty())
            .then(|| self.fairness_series.iter().sum::<f64>() / self.fairness_series.len() as f64)
    }
}

fn p95(sorted: &[Micros]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

/// Windowed fairness over full windows that saw any delivery.
pub fn fairness_series(s: &Scenario, out: &RunOutput) -> Vec<f64> {
    let n = s.flows.len();
    if n < 2 {
        return Vec::new();
    }
    let windows = (s.duration / s.window) as usize;
    let mut w = vec![vec![0.0; n]; windows];
    for &(t, flow, bits) in &out.deliveries {
        let k = (t / s.window) as usize;
        if k < windows {
            w[k][flow] += bits as f64;
        }
    }
    let shares: Vec<f64> = s.flows.iter().map(|f| f.share).collect();
    w.iter()
        .filter_map(|tp| fairness_index_with(&shares, tp, s.reading).ok())
        .collect()
}

pub fn metrics_from(s: &Scenario, out: &RunOutput) -> Metrics {
    let secs = s.duration as f64 / 1e6;
    let flows = out
        .flows
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let f = &s.flows[i];
            let mut d = c.delays.clone();
            d.sort_unstable();
            let mean = if d.is_empty() {
                0.0
            } else {
                d.iter().sum::<Micros>() as f64 / d.len() as f64
            };
            FlowMetrics {
                flow: i,
                src: s.topology.id(f.src),
                dst: s.topology.id(f.dst),
                generated_packets: c.generated_packets,
                generated_bits: c.generated_bits,
                delivered_packets: c.delivered_packets,
                delivered_bits: c.delivered_bits,
                dropped: c.dropped_packets,
                queued: c.queued_packets,
                throughput_bps: c.delivered_bits as f64 / secs,
                mean_delay_us: mean,
                p95_delay_us: p95(&d),
            }
        })
        .collect();
    let primary_ack_collisions = out
        .collisions
        .iter()
        .filter(|c| c.kind == FrameKind::Ack && c.role == Role::Normal)
        .count() as u64;
    Metrics {
        duration: s.duration,
        flows,
        collision_events: out.collision_events,
        transmissions: out.transmissions,
        collision_fraction: if out.transmissions == 0 {
            0.0
        } else {
            (out.collision_events as f64 / out.transmissions as f64).min(1.0)
        },
        primary_ack_collisions,
        fairness_series: fairness_series(s, out),
    }
}

/// Runs a scenario and keeps the raw output next to the metrics.
pub fn run_detailed(s: &Scenario, trace: bool) -> Result<(Metrics, RunOutput), HarnessError> {
    let cfg = s.network_config(trace)?;
    let out = Network::new(cfg)?.run()?;
    Ok((metrics_from(s, &out), out))
}

pub fn run_scenario(s: &Scenario) -> Result<Metrics, HarnessError> {
    run_detailed(s, false).map(|(m, _)| m)
}

/// One run per variant, each on its own thread with a fresh simulator.
pub fn compare(variants: &[Variant], s: &Scenario) -> Result<Vec<(String, Metrics)>, HarnessError> {
    if variants.is_empty() {
        return Err(HarnessError::NoVariants);
    }
    let results: Vec<Result<Metrics, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| {
                let sc = s.with_variant(*v);
                scope.spawn(move || run_scenario(&sc))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant run panicked"))
            .collect()
    });
    variants
        .iter()
        .zip(results)
        .map(|(v, r)| r.map(|m| (v.to_string(), m)))
        .collect()
}

pub const CSV_HEADER: &str = "variant,flow,src,dst,generated_packets,generated_bits,delivered_packets,delivered_bits,dropped,queued,throughput_bps,mean_delay_us,p95_delay_us,collision_events,transmissions,collision_fraction,mean_fairness";

/// CSV text for a metrics table: one row per flow plus an `all` row per
/// variant carrying the totals and global counters.
pub fn to_csv(table: &[(String, Metrics)]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for (name, m) in table {
        for f in &m.flows {
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},,,,",
                f.flow,
                f.src,
                f.dst,
                f.generated_packets,
                f.generated_bits,
                f.delivered_packets,
                f.delivered_bits,
                f.dropped,
                f.queued,
                f.throughput_bps,
                f.mean_delay_us,
                f.p95_delay_us
            );
        }
        let sum = |g: fn(&FlowMetrics) -> u64| m.flows.iter().map(g).sum::<u64>();
        let delivered_packets = sum(|f| f.delivered_packets);
        let mean_delay = if delivered_packets == 0 {
            0.0
        } else {
            m.flows
                .iter()
                .map(|f| f.mean_delay_us * f.delivered_packets as f64)
                .sum::<f64>()
                / delivered_packets as f64
        };
        let max_p95 = m.flows.iter().map(|f| f.p95_delay_us).fold(0.0, f64::max);
        let _ = writeln!(
            s,
            "{name},all,,,{},{},{},{},{},{},{:.3},{:.3},{:.3},{},{},{:.6},{}",
            sum(|f| f.generated_packets),
            sum(|f| f.generated_bits),
            delivered_packets,
            sum(|f| f.delivered_bits),
            sum(|f| f.dropped),
            sum(|f| f.queued),
            m.aggregate_throughput_bps(),
            mean_delay,
            max_p95,
            m.collision_events,
            m.transmissions,
            m.collision_fraction,
            m.mean_fairness()
                .map_or(String::new(), |x| format!("{x:.6}")),
        );
    }
    s
}

pub fn write_csv(table: &[(String, Metrics)], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, to_csv(table))?;
    Ok(())
}
