//! Sensor-side gateway: rate generator feeding the TX link, RX decoding into
//! per-key counters and frequency detectors, the PC control channel and the
//! monitor registers.

pub mod control;
pub mod display;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aer::{
    build_mc_packet, map_event_to_key, map_key_to_event, parse_packet, AerError, AerEvent,
    PacketWord, RoutingTable, SpinnPacket,
};
use crate::rate::{
    frequency_to_period, period_to_value, value_to_period, FrequencyDetector, RateConfig, RateError,
};

pub use control::{
    decode_control_frame, encode_control_frame, ControlDecoder, ControlError, ControlFrame,
};
pub use display::{encode_digits, DisplayMode, MonitorRegisters};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Aer(#[from] AerError),
    #[error("InvalidDisplayMode: {0}")]
    InvalidDisplayMode(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub rate: RateConfig,
    pub routing: RoutingTable,
    /// Neuron address whose spikes the rate generator emits.
    pub tx_address: u32,
    /// Inter-spike intervals averaged by each RX frequency detector.
    pub detector_window: usize,
}

impl GatewayConfig {
    /// Address 0 leaves as key 0; answers with key 6 map back to address 6.
    pub fn loopback_experiment() -> Self {
        let mut routing = RoutingTable::new();
        routing.add_route(0, 0).expect("fresh table");
        routing.add_reverse(6, 6).expect("fresh table");
        Self {
            rate: RateConfig::default(),
            routing,
            tx_address: 0,
            detector_window: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounters {
    pub parity: u64,
    pub framing: u64,
    pub unroutable: u64,
    pub stalled: u64,
    pub value_range: u64,
    pub packet_type: u64,
    pub control: u64,
    /// Packets the virtual endpoint could not route.
    pub unknown_key: u64,
}

impl ErrorCounters {
    pub fn total(&self) -> u64 {
        self.parity
            + self.framing
            + self.unroutable
            + self.stalled
            + self.value_range
            + self.packet_type
            + self.control
            + self.unknown_key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventDirection {
    Tx,
    Rx,
}

/// One line of `events.jsonl`. `counter` is the running TX count for TX
/// records and the key's RX counter for RX records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub dir: EventDirection,
    pub key: u32,
    pub counter: u64,
}

/// The gateway's complete state.
#[derive(Debug, Clone)]
pub struct Gateway {
    config: GatewayConfig,
    period: Option<u64>,
    next_spike: Option<u64>,
    set_value: Option<i64>,
    counters: BTreeMap<u32, u64>,
    detectors: BTreeMap<u32, FrequencyDetector>,
    last_rx_key: Option<u32>,
    tx_count: u64,
    rx_count: u64,
    pub errors: ErrorCounters,
    monitor: MonitorRegisters,
    events: Vec<EventRecord>,
    pc_in: ControlDecoder,
    pc_out: Vec<u8>,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.rate.validate()?;
        FrequencyDetector::new(config.detector_window)?;
        Ok(Self {
            config,
            period: None,
            next_spike: None,
            set_value: None,
            counters: BTreeMap::new(),
            detectors: BTreeMap::new(),
            last_rx_key: None,
            tx_count: 0,
            rx_count: 0,
            errors: ErrorCounters::default(),
            monitor: MonitorRegisters::default(),
            events: Vec::new(),
            pc_in: ControlDecoder::new(),
            pc_out: Vec::new(),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Current inter-spike period, if the generator is running.
    pub fn period(&self) -> Option<u64> {
        self.period
    }

    pub fn next_spike_tick(&self) -> Option<u64> {
        self.next_spike
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    pub fn rx_count(&self) -> u64 {
        self.rx_count
    }

    pub fn counter(&self, key: u32) -> u64 {
        self.counters.get(&key).copied().unwrap_or(0)
    }

    pub fn counters(&self) -> &BTreeMap<u32, u64> {
        &self.counters
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn monitor(&self) -> &MonitorRegisters {
        &self.monitor
    }

    /// Switches the generator to a new period. A running countdown is kept:
    /// the pending spike fires on schedule and the new period applies after
    /// it. An idle generator starts with its first spike one period from now.
    pub fn set_period(&mut self, period: u64, now: u64) -> Result<(), GatewayError> {
        if period == 0 {
            return Err(RateError::ZeroPeriod.into());
        }
        self.period = Some(period);
        if self.next_spike.is_none() {
            self.next_spike = Some(now + period);
        }
        Ok(())
    }

    pub fn set_frequency(&mut self, mhz: u64, now: u64) -> Result<(), GatewayError> {
        match frequency_to_period(mhz, self.config.rate.tick_rate) {
            Ok(period) => self.set_period(period, now),
            Err(e) => {
                self.errors.value_range += 1;
                Err(e.into())
            }
        }
    }

    /// Maps a sensor value onto the generator period. Out-of-range values
    /// leave the generator untouched.
    pub fn ingest_sample(&mut self, value: i64, now: u64) -> Result<(), GatewayError> {
        match value_to_period(value, &self.config.rate) {
            Ok(period) => {
                self.set_value = Some(value);
                self.refresh_monitor();
                self.set_period(period, now)
            }
            Err(e) => {
                self.errors.value_range += 1;
                Err(e.into())
            }
        }
    }

    /// Stops the generator; nothing is sent until the next sample.
    pub fn pause(&mut self) {
        self.period = None;
        self.next_spike = None;
    }

    /// Advances the rate generator to `now`. Returns the packet to send when
    /// a spike is due. Callers must not step past `next_spike_tick()`.
    pub fn tick(&mut self, now: u64) -> Option<SpinnPacket> {
        let due = self.next_spike.filter(|&t| t <= now)?;
        let period = self.period.expect("a scheduled spike implies a period");
        self.next_spike = Some(due + period);
        let event = AerEvent::new(self.config.tx_address, due);
        match map_event_to_key(&event, &self.config.routing) {
            Ok(key) => {
                self.tx_count += 1;
                self.events.push(EventRecord {
                    tick: due,
                    dir: EventDirection::Tx,
                    key,
                    counter: self.tx_count,
                });
                Some(build_mc_packet(key, None))
            }
            Err(_) => {
                self.errors.unroutable += 1;
                None
            }
        }
    }

    /// Parses a word taken off the RX link. Faulty words are counted and
    /// never reach the key counters.
    pub fn handle_rx_word(&mut self, word: PacketWord, now: u64) -> Result<(), GatewayError> {
        match parse_packet(word) {
            Ok(packet) => self.handle_rx_packet(&packet, now),
            Err(e) => {
                match e {
                    AerError::UnsupportedPacketType(_) | AerError::PayloadFlagMismatch => {
                        self.errors.packet_type += 1
                    }
                    _ => self.errors.parity += 1,
                }
                Err(e.into())
            }
        }
    }

    /// Counts a parity-checked packet, feeds its frequency detector and
    /// reports it on the PC channel.
    pub fn handle_rx_packet(&mut self, packet: &SpinnPacket, now: u64) -> Result<(), GatewayError> {
        if let Err(e) = map_key_to_event(packet.key, &self.config.routing, now) {
            self.errors.unroutable += 1;
            return Err(e.into());
        }
        let key = packet.key;
        let count = self.counters.entry(key).or_insert(0);
        *count += 1;
        let count = *count;
        self.rx_count += 1;
        let window = self.config.detector_window;
        self.detectors
            .entry(key)
            .or_insert_with(|| FrequencyDetector::new(window).expect("window checked in new"))
            .observe(now);
        self.last_rx_key = Some(key);
        self.events.push(EventRecord {
            tick: now,
            dir: EventDirection::Rx,
            key,
            counter: count,
        });
        self.pc_out
            .extend(encode_control_frame(&ControlFrame::EventReport {
                key,
                tick: now,
            }));
        self.refresh_monitor();
        Ok(())
    }

    pub fn measured_period(&self, key: u32) -> Result<u64, RateError> {
        match self.detectors.get(&key) {
            Some(d) => d.period(),
            None => Err(RateError::NotEnoughSpikes {
                needed: self.config.detector_window + 1,
                have: 0,
            }),
        }
    }

    /// Frequency of the answers on `key`, in mHz.
    pub fn measured_frequency(&self, key: u32) -> Result<u64, RateError> {
        match self.detectors.get(&key) {
            Some(d) => d.frequency_mhz(self.config.rate.tick_rate),
            None => Err(RateError::NotEnoughSpikes {
                needed: self.config.detector_window + 1,
                have: 0,
            }),
        }
    }

    /// Measured frequency of every key with enough arrivals.
    pub fn measured_frequencies(&self) -> BTreeMap<u32, u64> {
        self.detectors
            .iter()
            .filter_map(|(&key, d)| Some((key, d.frequency_mhz(self.config.rate.tick_rate).ok()?)))
            .collect()
    }

    /// Sensor value recovered from the answer frequency on `key`.
    pub fn measured_value(&self, key: u32) -> Result<i64, RateError> {
        period_to_value(self.measured_period(key)?, &self.config.rate)
    }

    /// Feeds bytes from the PC. Frames take effect at `now`.
    pub fn handle_pc_bytes(&mut self, bytes: &[u8], now: u64) {
        let outcome = self.pc_in.push(bytes);
        self.errors.control += outcome.errors.len() as u64;
        for frame in outcome.frames {
            let _ = self.handle_control_frame(frame, now);
        }
    }

    pub fn handle_control_frame(
        &mut self,
        frame: ControlFrame,
        now: u64,
    ) -> Result<(), GatewayError> {
        match frame {
            ControlFrame::SetValue(value) => self.ingest_sample(i64::from(value), now),
            ControlFrame::QueryCounter(key) => {
                let count = self.counter(key);
                self.pc_out
                    .extend(encode_control_frame(&ControlFrame::CounterReport {
                        key,
                        count,
                    }));
                Ok(())
            }
            ControlFrame::SetDisplayMode(code) => match DisplayMode::from_code(code) {
                Some(mode) => {
                    self.set_display_mode(mode);
                    Ok(())
                }
                None => {
                    self.errors.control += 1;
                    Err(GatewayError::InvalidDisplayMode(code))
                }
            },
            // Reports only travel gateway → PC.
            ControlFrame::EventReport { .. } | ControlFrame::CounterReport { .. } => {
                self.errors.control += 1;
                Ok(())
            }
        }
    }

    pub fn set_display_mode(&mut self, mode: DisplayMode) {
        self.monitor.mode = mode;
        self.refresh_monitor();
    }

    /// Recomputes the displayed value for the current mode.
    pub fn refresh_monitor(&mut self) {
        let value = match self.monitor.mode {
            DisplayMode::SetValue => self.set_value.map_or(0, i64::unsigned_abs),
            DisplayMode::RxCount => self.rx_count,
            DisplayMode::MeasuredFreq => self
                .last_rx_key
                .and_then(|k| self.measured_frequency(k).ok())
                .unwrap_or(0),
            DisplayMode::Errors => self.errors.total(),
        };
        self.monitor.show(value);
    }

    /// Bytes queued for the PC since the last call.
    pub fn take_pc_out(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.pc_out)
    }

    pub fn pending_pc_out(&self) -> &[u8] {
        &self.pc_out
    }
}
