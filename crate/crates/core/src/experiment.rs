//! Closed-loop driver: gateway → link → virtual board → link → gateway, all
//! advanced by one virtual clock.
//!
//! Within a tick the order is fixed:
//!
//! 1. scheduled rate changes, samples and PC bytes due at this tick;
//! 2. gateway TX;
//! 3. downlink (gateway → board), delivering completed packets to the board;
//! 4. a neural step when the tick is on the step grid, queueing live output
//!    on the uplink;
//! 5. uplink (board → gateway);
//! 6. gateway RX of completed packets.
//!
//! While both links are idle nothing can change between events, so the clock
//! jumps straight to the next step boundary, spike, schedule entry or PC
//! input.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aer::parse_packet;
use crate::config::{ConfigError, Drive, ExperimentConfig};
use crate::gateway::{
    decode_control_frame, encode_control_frame, ControlFrame, ErrorCounters, EventDirection,
    EventRecord, Gateway, GatewayError, MonitorRegisters,
};
use crate::link::{Direction, Link, StallInfo, WireTraceRow};
use crate::network::{Network, NetworkError, Recordings};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DriveAction {
    Frequency(u64),
    Sample(i64),
}

/// Contents of `summary.json`. Map keys are decimal routing keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub duration_ms: u64,
    pub tx_count: u64,
    pub rx_count: u64,
    pub counters: BTreeMap<String, u64>,
    /// mHz, for keys with enough arrivals to measure.
    pub measured_frequencies: BTreeMap<String, u64>,
    pub measured_values: BTreeMap<String, i64>,
    /// Raster rows per population.
    pub spikes: BTreeMap<String, u64>,
    pub errors: ErrorCounters,
    pub stalls: BTreeMap<String, StallInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Summary,
    pub recordings: Recordings,
    pub events: Vec<EventRecord>,
    pub wire_trace: Vec<WireTraceRow>,
    pub monitor: MonitorRegisters,
    pub pc_out: Vec<u8>,
}

pub const ARTIFACT_NAMES: [&str; 7] = [
    "raster.csv",
    "membrane.csv",
    "events.jsonl",
    "wire_trace.csv",
    "summary.json",
    "monitor.json",
    "pc_out.bin",
];

impl ExperimentOutput {
    pub fn tx_ticks(&self) -> Vec<u64> {
        self.events_in(EventDirection::Tx)
    }

    pub fn rx_ticks(&self) -> Vec<u64> {
        self.events_in(EventDirection::Rx)
    }

    fn events_in(&self, dir: EventDirection) -> Vec<u64> {
        self.events
            .iter()
            .filter(|e| e.dir == dir)
            .map(|e| e.tick)
            .collect()
    }

    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }

    pub fn wire_trace_csv(&self) -> String {
        let mut out = format!("{}\n", WireTraceRow::CSV_HEADER);
        for row in &self.wire_trace {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    /// Every artifact as `(file name, bytes)`, in [`ARTIFACT_NAMES`] order.
    pub fn artifacts(&self) -> Vec<(&'static str, Vec<u8>)> {
        let contents = [
            self.recordings.raster_csv().into_bytes(),
            self.recordings.membrane_csv().into_bytes(),
            self.events_jsonl().into_bytes(),
            self.wire_trace_csv().into_bytes(),
            self.summary_json().into_bytes(),
            (self.monitor.to_json() + "\n").into_bytes(),
            self.pc_out.clone(),
        ];
        ARTIFACT_NAMES.into_iter().zip(contents).collect()
    }

    pub fn write_artifacts(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.artifacts() {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// The gateway, both links and the board, wired together.
pub struct ClosedLoop {
    config: ExperimentConfig,
    gateway: Gateway,
    network: Network,
    downlink: Link,
    uplink: Link,
    actions: Vec<(u64, DriveAction)>,
    next_action: usize,
    pc_in: BTreeMap<u64, Vec<u8>>,
    pc_out: Vec<u8>,
    now: u64,
    end: u64,
}

impl ClosedLoop {
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let ticks_per_ms = config.ticks_per_ms();
        let actions = match &config.drive {
            Drive::Idle => Vec::new(),
            Drive::Schedule(entries) => entries
                .iter()
                .map(|e| {
                    (
                        e.start_ms * ticks_per_ms,
                        DriveAction::Frequency(e.frequency_mhz),
                    )
                })
                .collect(),
            Drive::Samples(entries) => entries
                .iter()
                .map(|e| (e.start_ms * ticks_per_ms, DriveAction::Sample(e.value)))
                .collect(),
        };
        let mut downlink = Link::new(Direction::Tx, config.link);
        let mut uplink = Link::new(Direction::Rx, config.link);
        if config.wire_trace {
            downlink = downlink.with_trace();
            uplink = uplink.with_trace();
        }
        Ok(Self {
            gateway: Gateway::new(config.gateway.clone())?,
            network: Network::new(config.network.clone())?,
            downlink,
            uplink,
            actions,
            next_action: 0,
            pc_in: BTreeMap::new(),
            pc_out: Vec::new(),
            now: 0,
            end: config.end_tick(),
            config,
        })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Queues bytes from the PC for delivery at `tick`.
    pub fn queue_pc_bytes(&mut self, tick: u64, bytes: &[u8]) {
        self.pc_in.entry(tick).or_default().extend_from_slice(bytes);
    }

    /// Runs one tick in the fixed order described at module level.
    fn step_tick(&mut self, now: u64) {
        while let Some(&(at, action)) = self.actions.get(self.next_action) {
            if at > now {
                break;
            }
            self.next_action += 1;
            // Validated up front, and failures land in the error counters.
            let _ = match action {
                DriveAction::Frequency(mhz) => self.gateway.set_frequency(mhz, at),
                DriveAction::Sample(value) => self.gateway.ingest_sample(value, at),
            };
        }
        if let Some(bytes) = self.pc_in.remove(&now) {
            self.gateway.handle_pc_bytes(&bytes, now);
        }

        if let Some(packet) = self.gateway.tick(now) {
            self.downlink.tx.enqueue_word(packet.to_word());
        }

        if let Some(word) = self.downlink.step(now) {
            match parse_packet(word) {
                Ok(packet) => {
                    if self.network.deliver_packet(&packet, now).is_err() {
                        self.gateway.errors.unknown_key += 1;
                    }
                }
                Err(_) => self.gateway.errors.parity += 1,
            }
        }

        if now == self.network.next_step_tick() {
            for out in self.network.step(now) {
                self.uplink.tx.enqueue_word(out.packet.to_word());
            }
        }

        if let Some(word) = self.uplink.step(now) {
            // Faults are counted by the gateway.
            let _ = self.gateway.handle_rx_word(word, now);
        }

        self.pc_out.extend(self.gateway.take_pc_out());
    }

    fn next_tick(&self, now: u64) -> u64 {
        if !(self.downlink.is_idle() && self.uplink.is_idle()) {
            return now + 1;
        }
        let candidates = [
            Some(self.network.next_step_tick()),
            self.gateway.next_spike_tick(),
            self.actions.get(self.next_action).map(|&(t, _)| t),
            self.pc_in.keys().next().copied(),
            Some(self.end),
        ];
        candidates
            .into_iter()
            .flatten()
            .filter(|&t| t > now)
            .min()
            .unwrap_or(now + 1)
    }

    /// Advances the clock to the end of the experiment.
    pub fn run(&mut self) {
        let pacing = self.config.realtime.then(|| {
            let seconds_per_tick =
                self.config.network.time_scale_factor / self.config.gateway.rate.tick_rate as f64;
            (Instant::now(), seconds_per_tick)
        });
        while self.now < self.end {
            let now = self.now;
            if let Some((start, seconds_per_tick)) = pacing {
                let due = start + Duration::from_secs_f64(now as f64 * seconds_per_tick);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            self.step_tick(now);
            self.now = self.next_tick(now);
        }
    }

    pub fn finish(mut self) -> ExperimentOutput {
        self.gateway.errors.framing =
            self.downlink.rx.framing_errors() + self.uplink.rx.framing_errors();
        let mut stalls = BTreeMap::new();
        for (name, link) in [("downlink", &self.downlink), ("uplink", &self.uplink)] {
            if let Some(stall) = link.tx.stall() {
                stalls.insert(name.to_string(), stall);
            }
        }
        self.gateway.errors.stalled = stalls.len() as u64;
        self.gateway.refresh_monitor();

        let mut wire_trace = self.downlink.take_trace();
        wire_trace.extend(self.uplink.take_trace());
        wire_trace.sort_by_key(|row| (row.tick, row.direction == Direction::Rx));

        let gw = &self.gateway;
        let recordings = self.network.into_recordings();
        let spikes = recordings
            .population_names
            .iter()
            .map(|name| (name.clone(), recordings.spike_count(name) as u64))
            .collect();
        let summary = Summary {
            duration_ms: self.config.duration_ms,
            tx_count: gw.tx_count(),
            rx_count: gw.rx_count(),
            counters: gw
                .counters()
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            measured_frequencies: gw
                .measured_frequencies()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            measured_values: gw
                .counters()
                .keys()
                .filter_map(|&k| Some((k.to_string(), gw.measured_value(k).ok()?)))
                .collect(),
            spikes,
            errors: gw.errors,
            stalls,
        };
        ExperimentOutput {
            summary,
            recordings,
            events: gw.events().to_vec(),
            wire_trace,
            monitor: *gw.monitor(),
            pc_out: self.pc_out,
        }
    }
}

pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let mut lp = ClosedLoop::new(config)?;
    lp.run();
    Ok(lp.finish())
}

/// Runs the loop driven by a PC byte stream instead of the configured drive.
///
/// Frames apply one after another starting at tick 0; each `SetValue` holds
/// for `hold_ms` before the next frame applies. The run lasts until the last
/// hold expires.
pub fn run_pc_session(
    mut config: ExperimentConfig,
    input: &[u8],
    hold_ms: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    let decoded = decode_control_frame(input);
    let ticks_per_ms = config.ticks_per_ms();
    let mut cursor_ms = 0;
    let mut timed = Vec::new();
    for frame in decoded.frames {
        timed.push((cursor_ms * ticks_per_ms, frame));
        if matches!(frame, ControlFrame::SetValue(_)) {
            cursor_ms += hold_ms;
        }
    }
    config.drive = Drive::Idle;
    config.duration_ms = cursor_ms;
    let mut lp = ClosedLoop::new(config)?;
    lp.gateway.errors.control += decoded.errors.len() as u64;
    for (tick, frame) in timed {
        lp.queue_pc_bytes(tick, &encode_control_frame(&frame));
    }
    lp.run();
    // Anything sent after the last hold still gets its answer.
    let leftover: Vec<(u64, Vec<u8>)> = std::mem::take(&mut lp.pc_in).into_iter().collect();
    for (tick, bytes) in leftover {
        lp.gateway.handle_pc_bytes(&bytes, tick);
    }
    let answers = lp.gateway.take_pc_out();
    lp.pc_out.extend(answers);
    Ok(lp.finish())
}
