//! Deterministic packet-level simulation of several video streams sharing
//! trace-driven access networks with background traffic.

pub mod background;
pub mod queue;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distortion::{decoder_distortion, StreamProfile};
use crate::error::ModelError;
use crate::net_model::Observation;
use crate::policy::{split_proportional, PolicyInput, RatePolicy};
use crate::traces::TraceSeries;

pub use background::{BackgroundModel, BackgroundSource};
pub use queue::{LinkQueue, Transit};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a stream's measurement agent estimates its available bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// Capacity minus the throughput of all other traffic seen in the window.
    #[default]
    Observed,
    /// Capacity minus the expected background rate and the other streams'
    /// current rates.
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated time (s).
    pub duration: f64,
    /// Measurement and reallocation period (s).
    pub epoch: f64,
    /// Packet size (bytes).
    pub packet_size: u32,
    pub gop_duration: f64,
    pub seed: u64,
    /// Probability of dropping a packet at network ingress.
    pub random_loss_rate: f64,
    pub background_model: BackgroundModel,
    /// Mean on and off period of the background source (s).
    pub background_period: f64,
    pub measurement: MeasurementMode,
    /// Relative standard deviation of multiplicative ABR noise.
    pub measurement_noise: f64,
    /// Spread the streams' measurement instants evenly over one epoch.
    pub stagger: bool,
    /// Averaging window of the measurement agent (s); a full epoch when absent.
    pub measure_window: Option<f64>,
    #[serde(skip)]
    pub record_packets: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 600.0,
            epoch: 2.0,
            packet_size: 1500,
            gop_duration: 0.5,
            seed: 1,
            random_loss_rate: 0.0,
            background_model: BackgroundModel::OnOff,
            background_period: 0.1,
            measurement: MeasurementMode::Observed,
            measurement_noise: 0.0,
            stagger: true,
            measure_window: None,
            record_packets: false,
        }
    }
}

impl SimConfig {
    pub fn packet_bits(&self) -> f64 {
        self.packet_size as f64 * 8.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.epoch > 0.0) {
            return bad(format!("sim.epoch must be positive, got {}", self.epoch));
        }
        if !(self.duration >= self.epoch) {
            return bad(format!(
                "sim.duration {} is shorter than one epoch {}",
                self.duration, self.epoch
            ));
        }
        if self.packet_size == 0 {
            return bad("sim.packet_size must be positive".into());
        }
        if !(self.gop_duration > 0.0) {
            return bad("sim.gop_duration must be positive".into());
        }
        if !(0.0..1.0).contains(&self.random_loss_rate) {
            return bad("sim.random_loss_rate must lie in [0, 1)".into());
        }
        if !(self.background_period > 0.0) {
            return bad("sim.background_period must be positive".into());
        }
        if !(self.measurement_noise >= 0.0) {
            return bad("sim.measurement_noise must be non-negative".into());
        }
        if let Some(w) = self.measure_window {
            if !(w > 0.0 && w <= self.epoch) {
                return bad(format!("sim.measure_window must lie in (0, epoch], got {w}"));
            }
        }
        Ok(())
    }
}

/// One access network.
#[derive(Debug, Clone)]
pub struct NetworkSetup {
    pub name: String,
    pub trace: TraceSeries,
    /// Background rate as a fraction of capacity.
    pub background_load: f64,
}

/// One video stream and the policy driving it.
pub struct StreamSetup {
    pub profile: StreamProfile,
    pub policy: Box<dyn RatePolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub index: usize,
    /// End of the epoch (s).
    pub time: f64,
    /// Transmitted rate per stream and network at the end of the epoch.
    pub rates: Vec<Vec<f64>>,
    /// Mean capacity per network over the epoch.
    pub capacity: Vec<f64>,
    /// Video utilization `sum_s r^s_n / c_n` per network.
    pub utilization: Vec<f64>,
    pub sent: Vec<u64>,
    pub lost: Vec<u64>,
    /// Packets that entered a network (sent minus ingress drops).
    pub delivered: Vec<u64>,
    /// Per-stream mean delivery delay of packets sent in the epoch.
    pub mean_delay: Vec<Option<f64>>,
    pub loss_ratio: Vec<f64>,
    pub distortion: Vec<Option<f64>>,
    pub psnr: Vec<Option<f64>>,
    /// Streams whose policy fell back to the previous allocation.
    pub flagged: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GopRecord {
    pub stream: usize,
    pub index: usize,
    pub start: f64,
    /// Encoding rate (bit/s).
    pub rate: f64,
    pub sent: u64,
    pub lost: u64,
    pub distortion: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketRecord {
    pub stream: usize,
    pub network: usize,
    pub send: f64,
    pub bits: f64,
    /// `None` when dropped at ingress.
    pub arrival: Option<f64>,
    pub deadline: f64,
    pub late: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub time: f64,
    pub stream: usize,
    pub network: usize,
    pub abr: f64,
    pub rtt: f64,
    /// Mean queueing delay behind the RTT (s).
    pub queueing: f64,
    /// Rate the stream was sending on this network during the window.
    pub rate: f64,
}

/// Packet accounting of one stream over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StreamTotals {
    pub sent: u64,
    /// Delivered by the end of the run (late packets included).
    pub arrived: u64,
    /// Still travelling at the end of the run.
    pub in_flight: u64,
    pub dropped: u64,
    pub late: u64,
    /// Sum of delivery delays over arrived and in-flight packets (s).
    pub delay_sum: f64,
}

impl StreamTotals {
    pub fn lost(&self) -> u64 {
        self.late + self.dropped
    }

    pub fn loss_ratio(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.lost() as f64 / self.sent as f64
        }
    }

    pub fn mean_delay(&self) -> Option<f64> {
        let n = self.arrived + self.in_flight;
        (n > 0).then(|| self.delay_sum / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub epochs: Vec<EpochReport>,
    pub gops: Vec<GopRecord>,
    pub totals: Vec<StreamTotals>,
    pub measurements: Vec<MeasurementRecord>,
    pub packets: Vec<PacketRecord>,
    /// Background bits offered per network.
    pub background_bits: Vec<f64>,
    pub stream_names: Vec<String>,
    pub network_names: Vec<String>,
    pub policy_names: Vec<String>,
}

// Event kinds, in processing order for equal timestamps.
const EV_EPOCH: u8 = 0;
const EV_MEASURE: u8 = 1;
const EV_GOP: u8 = 2;
const EV_VIDEO: u8 = 3;
const EV_BACKGROUND: u8 = 4;

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    kind: u8,
    network: u32,
    stream: u32,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.cmp(&other.kind))
            .then(self.network.cmp(&other.network))
            .then(self.stream.cmp(&other.stream))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Flow {
    next: f64,
    remaining: u64,
    spacing: f64,
    carry: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct EpochAcc {
    sent: u64,
    lost: u64,
    delivered: u64,
    delay_sum: f64,
}

#[derive(Debug, Clone, Copy)]
struct OpenGop {
    index: usize,
    start: f64,
    rate: f64,
    sent: u64,
    lost: u64,
}

struct StreamState {
    profile: StreamProfile,
    policy: Box<dyn RatePolicy>,
    alloc: Vec<f64>,
    tx: Vec<f64>,
    flows: Vec<Flow>,
    snap_bits: Vec<Vec<f64>>,
    snap_sojourn: Vec<(f64, u64)>,
    last_measure: f64,
    window_start: f64,
    pending_losses: Vec<VecDeque<f64>>,
    flagged: bool,
    gop: Option<OpenGop>,
    epochs: Vec<EpochAcc>,
    totals: StreamTotals,
}

struct NetState {
    queue: LinkQueue,
    background: BackgroundSource,
    load: f64,
    /// Cumulative offered bits per source; index `S` is background.
    bits: Vec<f64>,
    sojourn_sum: f64,
    sojourn_count: u64,
}

struct Snapshot {
    rates: Vec<Vec<f64>>,
    capacity: Vec<f64>,
    flagged: Vec<bool>,
}

fn check_inputs(config: &SimConfig, networks: &[NetworkSetup], streams: &[StreamSetup]) -> Result<(), SimError> {
    config.validate()?;
    if networks.is_empty() {
        return Err(SimError::Config("at least one network is required".into()));
    }
    for net in networks {
        if !(0.0..1.0).contains(&net.background_load) {
            return Err(SimError::Config(format!(
                "network {}: background load must lie in [0, 1)",
                net.name
            )));
        }
        let first = net.trace.samples()[0].t;
        if first > 0.0 {
            return Err(SimError::Config(format!(
                "network {}: trace starts at {first} s, after the run start",
                net.name
            )));
        }
        let covered = net.trace.end_time() + net.trace.sample_period();
        if net.trace.len() > 1 && covered < config.duration {
            return Err(SimError::Config(format!(
                "network {}: trace covers {covered} s but the run lasts {} s",
                net.name, config.duration
            )));
        }
    }
    for s in streams {
        s.profile.validate()?;
    }
    Ok(())
}

/// Runs one simulation to completion.
pub fn run(config: &SimConfig, networks: &[NetworkSetup], streams: Vec<StreamSetup>) -> Result<RunOutput, SimError> {
    check_inputs(config, networks, &streams)?;
    let n_nets = networks.len();
    let n_streams = streams.len();
    let bits_per_packet = config.packet_bits();
    let epoch_count = (config.duration / config.epoch).floor() as usize;

    let mut nets: Vec<NetState> = networks
        .iter()
        .enumerate()
        .map(|(n, setup)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + n as u64);
            NetState {
                queue: LinkQueue::new(setup.trace.clone()),
                background: BackgroundSource::new(
                    config.background_model,
                    setup.background_load,
                    bits_per_packet,
                    config.background_period,
                    rng,
                ),
                load: setup.background_load,
                bits: vec![0.0; n_streams + 1],
                sojourn_sum: 0.0,
                sojourn_count: 0,
            }
        })
        .collect();
    let mut loss_rng = ChaCha8Rng::seed_from_u64(config.seed);
    loss_rng.set_stream(10_001);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(10_002);

    let hint: Vec<f64> = networks.iter().map(|n| n.trace.at(0.0).abr).collect();
    let policy_names: Vec<String> = streams.iter().map(|s| s.policy.name().to_string()).collect();
    let stream_names: Vec<String> = streams.iter().map(|s| s.profile.name.clone()).collect();
    let mut st: Vec<StreamState> = streams
        .into_iter()
        .map(|mut s| {
            let alloc = sanitize(s.policy.initial_rates(&hint));
            StreamState {
                tx: alloc.clone(),
                alloc,
                profile: s.profile,
                policy: s.policy,
                flows: vec![Flow::default(); n_nets],
                snap_bits: vec![vec![0.0; n_streams + 1]; n_nets],
                snap_sojourn: vec![(0.0, 0); n_nets],
                last_measure: 0.0,
                window_start: 0.0,
                pending_losses: vec![VecDeque::new(); n_nets],
                flagged: false,
                gop: None,
                epochs: vec![EpochAcc::default(); epoch_count + 1],
                totals: StreamTotals::default(),
            }
        })
        .collect();

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Reverse<Event>>, t: f64, kind: u8, network: usize, stream: usize| {
        seq += 1;
        heap.push(Reverse(Event {
            t,
            kind,
            network: network as u32,
            stream: stream as u32,
            seq,
        }));
    };
    for k in 1..=epoch_count {
        push(&mut heap, k as f64 * config.epoch, EV_EPOCH, 0, 0);
    }
    for s in 0..n_streams {
        let phase = if config.stagger {
            s as f64 * config.epoch / n_streams as f64
        } else {
            0.0
        };
        let t = phase + config.epoch;
        if t < config.duration {
            push(&mut heap, t, EV_MEASURE, 0, s);
            if let Some(w) = config.measure_window {
                push(&mut heap, t - w, EV_MEASURE, 1, s);
            }
        }
    }
    push(&mut heap, 0.0, EV_GOP, 0, 0);
    for (n, net) in nets.iter_mut().enumerate() {
        if let Some(t) = net.background.next_packet(net.queue.trace()) {
            if t < config.duration {
                push(&mut heap, t, EV_BACKGROUND, n, 0);
            }
        }
    }

    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(epoch_count);
    let mut gops: Vec<GopRecord> = Vec::new();
    let mut measurements: Vec<MeasurementRecord> = Vec::new();
    let mut packets: Vec<PacketRecord> = Vec::new();

    while let Some(Reverse(ev)) = heap.pop() {
        let t = ev.t;
        if t > config.duration || (t == config.duration && ev.kind != EV_EPOCH) {
            break;
        }
        match ev.kind {
            EV_EPOCH => {
                let from = t - config.epoch;
                snapshots.push(Snapshot {
                    rates: st.iter().map(|s| s.tx.clone()).collect(),
                    capacity: networks.iter().map(|n| n.trace.mean_abr_over(from, t)).collect(),
                    flagged: st.iter().map(|s| s.flagged).collect(),
                });
            }
            EV_MEASURE if ev.network == 1 => {
                let stream = &mut st[ev.stream as usize];
                for n in 0..n_nets {
                    stream.snap_bits[n].copy_from_slice(&nets[n].bits);
                    stream.snap_sojourn[n] = (nets[n].sojourn_sum, nets[n].sojourn_count);
                }
                stream.window_start = t;
            }
            EV_MEASURE => {
                let s = ev.stream as usize;
                let window = t - st[s].window_start;
                let mut observations = Vec::with_capacity(n_nets);
                let mut loss_seen = Vec::with_capacity(n_nets);
                for n in 0..n_nets {
                    let sample = networks[n].trace.at(t);
                    let net = &nets[n];
                    let stream = &st[s];
                    let mut abr = match config.measurement {
                        MeasurementMode::Observed => {
                            let other: f64 = (0..=n_streams)
                                .filter(|&src| src != s)
                                .map(|src| net.bits[src] - stream.snap_bits[n][src])
                                .sum();
                            sample.abr - other / window
                        }
                        MeasurementMode::Ideal => {
                            let other: f64 = (0..n_streams).filter(|&o| o != s).map(|o| st[o].tx[n]).sum();
                            sample.abr * (1.0 - net.load) - other
                        }
                    };
                    if config.measurement_noise > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut noise_rng);
                        abr *= (1.0 + config.measurement_noise * z).max(0.0);
                    }
                    let (soj0, cnt0) = stream.snap_sojourn[n];
                    let count = net.sojourn_count - cnt0;
                    let queueing = if count > 0 {
                        (net.sojourn_sum - soj0) / count as f64
                    } else {
                        0.0
                    };
                    let rtt = sample.rtt + 2.0 * queueing;
                    observations.push(Observation {
                        network: n,
                        epoch_index: (t / config.epoch).floor() as usize,
                        abr,
                        rtt,
                    });
                    measurements.push(MeasurementRecord {
                        time: t,
                        stream: s,
                        network: n,
                        abr,
                        rtt,
                        queueing,
                        rate: stream.tx[n],
                    });
                    let pending = &mut st[s].pending_losses[n];
                    let mut seen = false;
                    while pending.front().is_some_and(|d| *d <= t) {
                        pending.pop_front();
                        seen = true;
                    }
                    loss_seen.push(seen);
                }
                let stream = &mut st[s];
                if config.measure_window.is_none() {
                    for n in 0..n_nets {
                        stream.snap_bits[n].copy_from_slice(&nets[n].bits);
                        stream.snap_sojourn[n] = (nets[n].sojourn_sum, nets[n].sojourn_count);
                    }
                    stream.window_start = t;
                }
                let dt = t - stream.last_measure;
                let gop_index = (t / config.gop_duration).floor() as usize;
                let dr = *stream.profile.params_at(gop_index);
                let input = PolicyInput {
                    now: t,
                    dt,
                    observations: &observations,
                    loss_seen: &loss_seen,
                    dr: &dr,
                };
                stream.alloc = sanitize(stream.policy.allocate(&input));
                stream.flagged = stream.policy.flagged();
                stream.last_measure = t;
                if t + config.epoch < config.duration {
                    push(&mut heap, t + config.epoch, EV_MEASURE, 0, s);
                    if let Some(w) = config.measure_window {
                        push(&mut heap, t + config.epoch - w, EV_MEASURE, 1, s);
                    }
                }
            }
            EV_GOP => {
                let g = (t / config.gop_duration).round() as usize;
                for (s, stream) in st.iter_mut().enumerate() {
                    if let Some(open) = stream.gop.take() {
                        gops.push(close_gop(s, &stream.profile, open)?);
                    }
                    let caps: Vec<f64> = networks.iter().map(|n| n.trace.at(t).abr).collect();
                    stream.tx = floor_rates(&stream.alloc, stream.profile.min_rate, &caps);
                    let rate: f64 = stream.tx.iter().sum();
                    stream.gop = Some(OpenGop {
                        index: g,
                        start: t,
                        rate,
                        sent: 0,
                        lost: 0,
                    });
                    for n in 0..n_nets {
                        let flow = &mut stream.flows[n];
                        let exact = stream.tx[n] * config.gop_duration / bits_per_packet + flow.carry;
                        let count = exact.floor();
                        flow.carry = exact - count;
                        flow.remaining = count as u64;
                        if flow.remaining > 0 {
                            flow.spacing = config.gop_duration / count;
                            flow.next = t;
                            push(&mut heap, t, EV_VIDEO, n, s);
                        }
                    }
                }
                let next = (g + 1) as f64 * config.gop_duration;
                if next < config.duration {
                    push(&mut heap, next, EV_GOP, 0, 0);
                }
            }
            EV_VIDEO => {
                let s = ev.stream as usize;
                let n = ev.network as usize;
                let deadline = st[s].profile.deadline;
                let k = ((t / config.epoch).floor() as usize).min(epoch_count);
                let prop = networks[n].trace.at(t).rtt / 2.0;
                let dropped = config.random_loss_rate > 0.0 && loss_rng.random_bool(config.random_loss_rate);
                let stream = &mut st[s];
                stream.totals.sent += 1;
                stream.epochs[k].sent += 1;
                if let Some(g) = stream.gop.as_mut() {
                    g.sent += 1;
                }
                let mut record = PacketRecord {
                    stream: s,
                    network: n,
                    send: t,
                    bits: bits_per_packet,
                    arrival: None,
                    deadline,
                    late: false,
                };
                let lost = if dropped {
                    stream.totals.dropped += 1;
                    true
                } else {
                    let net = &mut nets[n];
                    let transit = net.queue.admit(t, bits_per_packet);
                    net.bits[s] += bits_per_packet;
                    net.sojourn_sum += transit.departure - t;
                    net.sojourn_count += 1;
                    let delay = transit.arrival - t;
                    let late = delay > deadline;
                    if transit.arrival <= config.duration {
                        stream.totals.arrived += 1;
                    } else {
                        stream.totals.in_flight += 1;
                    }
                    stream.totals.delay_sum += delay;
                    stream.epochs[k].delivered += 1;
                    stream.epochs[k].delay_sum += delay;
                    if late {
                        stream.totals.late += 1;
                    }
                    record.arrival = Some(transit.arrival);
                    record.late = late;
                    late
                };
                if lost {
                    stream.epochs[k].lost += 1;
                    if let Some(g) = stream.gop.as_mut() {
                        g.lost += 1;
                    }
                    stream.pending_losses[n].push_back(t + deadline + prop);
                }
                if config.record_packets {
                    packets.push(record);
                }
                let flow = &mut stream.flows[n];
                flow.remaining -= 1;
                if flow.remaining > 0 {
                    flow.next += flow.spacing;
                    if flow.next < config.duration {
                        push(&mut heap, flow.next, EV_VIDEO, n, s);
                    }
                }
            }
            EV_BACKGROUND => {
                let n = ev.network as usize;
                let net = &mut nets[n];
                let dropped = config.random_loss_rate > 0.0 && loss_rng.random_bool(config.random_loss_rate);
                net.bits[n_streams] += bits_per_packet;
                if !dropped {
                    let transit = net.queue.admit(t, bits_per_packet);
                    net.sojourn_sum += transit.departure - t;
                    net.sojourn_count += 1;
                }
                if let Some(next) = net.background.next_packet(net.queue.trace()) {
                    if next < config.duration {
                        push(&mut heap, next, EV_BACKGROUND, n, 0);
                    }
                }
            }
            _ => unreachable!("unknown event kind"),
        }
    }

    for (s, stream) in st.iter_mut().enumerate() {
        if let Some(open) = stream.gop.take() {
            if open.start + config.gop_duration <= config.duration + 1e-9 {
                gops.push(close_gop(s, &stream.profile, open)?);
            }
        }
    }
    gops.sort_by(|a, b| a.stream.cmp(&b.stream).then(a.index.cmp(&b.index)));

    let epochs = snapshots
        .into_iter()
        .enumerate()
        .map(|(k, snap)| {
            let start = k as f64 * config.epoch;
            let end = start + config.epoch;
            let utilization = (0..n_nets)
                .map(|n| {
                    let total: f64 = snap.rates.iter().map(|r| r[n]).sum();
                    total / snap.capacity[n]
                })
                .collect();
            let mut report = EpochReport {
                index: k,
                time: end,
                rates: snap.rates,
                capacity: snap.capacity,
                utilization,
                sent: Vec::with_capacity(n_streams),
                lost: Vec::with_capacity(n_streams),
                delivered: Vec::with_capacity(n_streams),
                mean_delay: Vec::with_capacity(n_streams),
                loss_ratio: Vec::with_capacity(n_streams),
                distortion: Vec::with_capacity(n_streams),
                psnr: Vec::with_capacity(n_streams),
                flagged: snap.flagged,
            };
            for (s, stream) in st.iter().enumerate() {
                let acc = stream.epochs[k];
                report.sent.push(acc.sent);
                report.lost.push(acc.lost);
                report.delivered.push(acc.delivered);
                report
                    .mean_delay
                    .push((acc.delivered > 0).then(|| acc.delay_sum / acc.delivered as f64));
                report.loss_ratio.push(if acc.sent > 0 {
                    acc.lost as f64 / acc.sent as f64
                } else {
                    0.0
                });
                let in_epoch: Vec<&GopRecord> = gops
                    .iter()
                    .filter(|g| g.stream == s && g.start >= start - 1e-9 && g.start < end - 1e-9)
                    .collect();
                if in_epoch.is_empty() {
                    report.distortion.push(None);
                    report.psnr.push(None);
                } else {
                    let m = in_epoch.len() as f64;
                    report.distortion.push(Some(in_epoch.iter().map(|g| g.distortion).sum::<f64>() / m));
                    report.psnr.push(Some(in_epoch.iter().map(|g| g.psnr).sum::<f64>() / m));
                }
            }
            report
        })
        .collect();

    Ok(RunOutput {
        epochs,
        gops,
        totals: st.iter().map(|s| s.totals).collect(),
        measurements,
        packets,
        background_bits: nets.iter().map(|n| n.bits[n_streams]).collect(),
        stream_names,
        network_names: networks.iter().map(|n| n.name.clone()).collect(),
        policy_names,
    })
}

fn sanitize(rates: Vec<f64>) -> Vec<f64> {
    rates
        .into_iter()
        .map(|r| if r.is_finite() && r > 0.0 { r } else { 0.0 })
        .collect()
}

/// Raises an allocation below the encoder's minimum rate to that minimum,
/// keeping its split (or following capacity when nothing is allocated).
fn floor_rates(alloc: &[f64], min_rate: f64, capacity: &[f64]) -> Vec<f64> {
    let total: f64 = alloc.iter().sum();
    if total >= min_rate {
        alloc.to_vec()
    } else if total > 0.0 {
        alloc.iter().map(|r| r * min_rate / total).collect()
    } else {
        split_proportional(min_rate, capacity)
    }
}

fn close_gop(stream: usize, profile: &StreamProfile, open: OpenGop) -> Result<GopRecord, SimError> {
    let p = if open.sent > 0 {
        open.lost as f64 / open.sent as f64
    } else {
        0.0
    };
    let report = decoder_distortion(profile.params_at(open.index), open.rate, p)?;
    Ok(GopRecord {
        stream,
        index: open.index,
        start: open.start,
        rate: open.rate,
        sent: open.sent,
        lost: open.lost,
        distortion: report.d_dec,
        psnr: report.psnr,
    })
}
