//! Link physical layer: 2-of-7 NRZ symbol coding, nibble framing and the
//! request/acknowledge handshake.
//!
//! Each symbol toggles exactly two of the seven data wires. The receiver
//! answers every accepted transition by toggling the ack wire; the sender
//! may not put the next symbol on the wires before it has seen that toggle.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aer::{PacketWord, SpinnPacket, LONG_PACKET_BITS, SHORT_PACKET_BITS};

/// Ack wait before a transmitter declares the link stalled.
pub const DEFAULT_ACK_TIMEOUT: u64 = 1000;

const DATA_WIRES: u8 = 0x7f;

/// Wire pairs toggled per symbol. Index 0..=15 are the data nibbles,
/// index 16 is end-of-packet. Pairs (3,5), (3,6), (4,5), (4,6) are unused.
const CODE_TABLE: [(u8, u8); 17] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (0, 5),
    (0, 6),
    (1, 2),
    (1, 3),
    (1, 4),
    (1, 5),
    (1, 6),
    (2, 3),
    (2, 4),
    (2, 5),
    (2, 6),
    (3, 4),
    (5, 6),
];

const EOP_INDEX: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("InvalidTransition: {prev:07b} -> {next:07b}")]
    InvalidTransition { prev: u8, next: u8 },
    #[error("FramingError: end-of-packet after {nibbles} nibbles")]
    FramingError { nibbles: usize },
    #[error("MissingEop: symbol stream ended without end-of-packet")]
    MissingEop,
    #[error("InvalidSymbol: {0}")]
    InvalidSymbol(String),
    #[error("transfer budget must be at least one tick")]
    ZeroBudget,
}

impl LinkError {
    pub fn name(&self) -> &'static str {
        match self {
            LinkError::InvalidTransition { .. } => "InvalidTransition",
            LinkError::FramingError { .. } => "FramingError",
            LinkError::MissingEop => "MissingEop",
            LinkError::InvalidSymbol(_) => "InvalidSymbol",
            LinkError::ZeroBudget => "ZeroBudget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkSymbol {
    Data(u8),
    EndOfPacket,
}

impl LinkSymbol {
    pub fn data(nibble: u8) -> Option<Self> {
        (nibble < 16).then_some(LinkSymbol::Data(nibble))
    }

    /// All 17 symbols, data nibbles first.
    pub fn all() -> impl Iterator<Item = LinkSymbol> {
        (0..16)
            .map(LinkSymbol::Data)
            .chain([LinkSymbol::EndOfPacket])
    }

    fn table_index(self) -> usize {
        match self {
            LinkSymbol::Data(n) => {
                assert!(n < 16, "data symbol {n} does not fit in a nibble");
                usize::from(n)
            }
            LinkSymbol::EndOfPacket => EOP_INDEX,
        }
    }

    /// Data wires this symbol toggles.
    pub fn toggle_mask(self) -> u8 {
        let (a, b) = CODE_TABLE[self.table_index()];
        (1 << a) | (1 << b)
    }
}

impl fmt::Display for LinkSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkSymbol::Data(n) => write!(f, "{n:x}"),
            LinkSymbol::EndOfPacket => f.write_str("EOP"),
        }
    }
}

impl FromStr for LinkSymbol {
    type Err = LinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("eop") {
            return Ok(LinkSymbol::EndOfPacket);
        }
        let digits = s.trim_start_matches("0x");
        u8::from_str_radix(digits, 16)
            .ok()
            .and_then(LinkSymbol::data)
            .ok_or_else(|| LinkError::InvalidSymbol(s.to_string()))
    }
}

/// One direction's wire bundle: seven data wires plus the returning ack wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WireState {
    pub data: u8,
    pub ack: bool,
}

pub fn encode_symbol(prev: u8, sym: LinkSymbol) -> u8 {
    (prev ^ sym.toggle_mask()) & DATA_WIRES
}

/// Decodes the symbol carried by a wire transition; `None` while idle.
pub fn decode_transition(prev: u8, next: u8) -> Result<Option<LinkSymbol>, LinkError> {
    let toggled = (prev ^ next) & DATA_WIRES;
    if toggled == 0 {
        return Ok(None);
    }
    let index = CODE_TABLE
        .iter()
        .position(|&(a, b)| toggled == (1 << a) | (1 << b))
        .ok_or(LinkError::InvalidTransition { prev, next })?;
    Ok(Some(if index == EOP_INDEX {
        LinkSymbol::EndOfPacket
    } else {
        LinkSymbol::Data(index as u8)
    }))
}

pub fn frame_packet(packet: &SpinnPacket) -> Vec<LinkSymbol> {
    frame_word(packet.to_word())
}

/// Splits a serialized packet into nibbles, least significant first, and
/// appends end-of-packet.
pub fn frame_word(word: PacketWord) -> Vec<LinkSymbol> {
    let bits = word.bits();
    (0..word.nibble_count())
        .map(|i| LinkSymbol::Data(((bits >> (4 * i)) & 0xf) as u8))
        .chain([LinkSymbol::EndOfPacket])
        .collect()
}

/// Reassembles one packet from a complete symbol sequence.
pub fn deframe_symbols(symbols: &[LinkSymbol]) -> Result<PacketWord, LinkError> {
    let Some((LinkSymbol::EndOfPacket, body)) = symbols.split_last() else {
        return Err(LinkError::MissingEop);
    };
    let mut bits = 0u128;
    for (i, sym) in body.iter().enumerate() {
        match sym {
            LinkSymbol::Data(n) => bits |= u128::from(*n) << (4 * i),
            LinkSymbol::EndOfPacket => return Err(LinkError::FramingError { nibbles: i }),
        }
    }
    word_from_nibbles(bits, body.len())
}

fn word_from_nibbles(bits: u128, nibbles: usize) -> Result<PacketWord, LinkError> {
    let len = match nibbles * 4 {
        l if l == SHORT_PACKET_BITS as usize => SHORT_PACKET_BITS,
        l if l == LONG_PACKET_BITS as usize => LONG_PACKET_BITS,
        _ => return Err(LinkError::FramingError { nibbles }),
    };
    Ok(PacketWord::new(bits, len).expect("nibble count matches length"))
}

/// Streaming reassembly used by the receiver. After a framing fault it drops
/// everything up to the next end-of-packet.
#[derive(Debug, Clone, Default)]
pub struct Deframer {
    bits: u128,
    nibbles: usize,
    resync: bool,
}

impl Deframer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_resyncing(&self) -> bool {
        self.resync
    }

    /// Enters re-sync after a line fault detected outside the deframer.
    pub fn enter_resync(&mut self) {
        self.resync = true;
        self.bits = 0;
        self.nibbles = 0;
    }

    pub fn push(&mut self, sym: LinkSymbol) -> Option<Result<PacketWord, LinkError>> {
        match sym {
            LinkSymbol::EndOfPacket => {
                let (bits, nibbles) = (self.bits, self.nibbles);
                let was_resyncing = self.resync;
                self.bits = 0;
                self.nibbles = 0;
                self.resync = false;
                if was_resyncing {
                    None
                } else {
                    Some(word_from_nibbles(bits, nibbles))
                }
            }
            LinkSymbol::Data(_) if self.resync => None,
            LinkSymbol::Data(n) => {
                if self.nibbles * 4 == LONG_PACKET_BITS as usize {
                    let nibbles = self.nibbles + 1;
                    self.enter_resync();
                    return Some(Err(LinkError::FramingError { nibbles }));
                }
                self.bits |= u128::from(n) << (4 * self.nibbles);
                self.nibbles += 1;
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AckPolicy {
    Normal,
    NeverAck,
    DelayTicks(u64),
}

impl FromStr for AckPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(AckPolicy::Normal),
            "never" | "never-ack" => Ok(AckPolicy::NeverAck),
            other => other
                .strip_prefix("delay:")
                .and_then(|n| n.parse().ok())
                .map(AckPolicy::DelayTicks)
                .ok_or_else(|| format!("unknown ack policy {other:?} (normal, never, delay:N)")),
        }
    }
}

impl fmt::Display for AckPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AckPolicy::Normal => f.write_str("normal"),
            AckPolicy::NeverAck => f.write_str("never"),
            AckPolicy::DelayTicks(n) => write!(f, "delay:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallInfo {
    /// Symbols emitted before the abort; 1 means the first attempt was never acked.
    pub symbol_index: u64,
    pub tick: u64,
}

/// Sending endpoint of one link direction.
#[derive(Debug, Clone)]
pub struct Transmitter {
    queue: VecDeque<LinkSymbol>,
    wires: u8,
    seen_ack: bool,
    in_flight_since: Option<u64>,
    ack_timeout: u64,
    stall: Option<StallInfo>,
    symbols_sent: u64,
    acks_received: u64,
}

impl Transmitter {
    pub fn new(ack_timeout: u64) -> Self {
        Self {
            queue: VecDeque::new(),
            wires: 0,
            seen_ack: false,
            in_flight_since: None,
            ack_timeout,
            stall: None,
            symbols_sent: 0,
            acks_received: 0,
        }
    }

    pub fn enqueue_word(&mut self, word: PacketWord) {
        self.queue.extend(frame_word(word));
    }

    pub fn enqueue_symbols(&mut self, symbols: impl IntoIterator<Item = LinkSymbol>) {
        self.queue.extend(symbols);
    }

    pub fn wires(&self) -> u8 {
        self.wires
    }

    pub fn stall(&self) -> Option<StallInfo> {
        self.stall
    }

    pub fn symbols_sent(&self) -> u64 {
        self.symbols_sent
    }

    pub fn acks_received(&self) -> u64 {
        self.acks_received
    }

    pub fn pending_symbols(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.stall.is_some() || (self.queue.is_empty() && self.in_flight_since.is_none())
    }

    /// Clears a stall and drops anything still queued.
    pub fn reset(&mut self) {
        self.queue.clear();
        self.in_flight_since = None;
        self.stall = None;
    }

    /// Samples the ack wire, then emits at most one symbol.
    pub fn step(&mut self, now: u64, ack_wire: bool) {
        if self.stall.is_some() {
            return;
        }
        if let Some(sent) = self.in_flight_since {
            if ack_wire != self.seen_ack {
                self.seen_ack = ack_wire;
                self.acks_received += 1;
                self.in_flight_since = None;
            } else if now.saturating_sub(sent) >= self.ack_timeout {
                self.stall = Some(StallInfo {
                    symbol_index: self.symbols_sent,
                    tick: now,
                });
                return;
            }
        }
        if self.in_flight_since.is_none() {
            if let Some(sym) = self.queue.pop_front() {
                self.wires = encode_symbol(self.wires, sym);
                self.symbols_sent += 1;
                self.in_flight_since = Some(now);
            }
        }
    }
}

/// Receiving endpoint of one link direction.
#[derive(Debug, Clone)]
pub struct Receiver {
    policy: AckPolicy,
    last_rx: u8,
    ack: bool,
    ack_due: Option<u64>,
    deframer: Deframer,
    framing_errors: u64,
    symbols_accepted: u64,
}

impl Receiver {
    pub fn new(policy: AckPolicy) -> Self {
        Self {
            policy,
            last_rx: 0,
            ack: false,
            ack_due: None,
            deframer: Deframer::new(),
            framing_errors: 0,
            symbols_accepted: 0,
        }
    }

    pub fn ack_wire(&self) -> bool {
        self.ack
    }

    pub fn framing_errors(&self) -> u64 {
        self.framing_errors
    }

    pub fn symbols_accepted(&self) -> u64 {
        self.symbols_accepted
    }

    pub fn is_resyncing(&self) -> bool {
        self.deframer.is_resyncing()
    }

    pub fn is_idle(&self) -> bool {
        self.ack_due.is_none()
    }

    /// Samples the data wires; returns a packet word when end-of-packet
    /// completes a well-formed frame.
    pub fn step(&mut self, now: u64, data_wires: u8) -> Option<PacketWord> {
        let mut delivered = None;
        if data_wires != self.last_rx {
            let prev = std::mem::replace(&mut self.last_rx, data_wires);
            self.symbols_accepted += 1;
            match decode_transition(prev, data_wires) {
                Ok(Some(sym)) => match self.deframer.push(sym) {
                    Some(Ok(word)) => delivered = Some(word),
                    Some(Err(_)) => self.framing_errors += 1,
                    None => {}
                },
                Ok(None) => unreachable!("wires changed"),
                Err(_) => {
                    if !self.deframer.is_resyncing() {
                        self.framing_errors += 1;
                    }
                    self.deframer.enter_resync();
                }
            }
            self.ack_due = match self.policy {
                AckPolicy::Normal => Some(now),
                AckPolicy::DelayTicks(n) => Some(now + n),
                AckPolicy::NeverAck => None,
            };
        }
        if self.ack_due.is_some_and(|due| due <= now) {
            self.ack = !self.ack;
            self.ack_due = None;
        }
        delivered
    }
}

/// Which way a link carries traffic, seen from the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Tx,
    Rx,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Tx => "tx",
            Direction::Rx => "rx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTraceRow {
    pub tick: u64,
    pub direction: Direction,
    pub wires: WireState,
}

impl WireTraceRow {
    pub const CSV_HEADER: &'static str = "tick,direction,data,ack";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:07b},{}",
            self.tick,
            self.direction.label(),
            self.wires.data,
            u8::from(self.wires.ack)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub ack_policy: AckPolicy,
    pub ack_timeout: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            ack_policy: AckPolicy::Normal,
            ack_timeout: DEFAULT_ACK_TIMEOUT,
        }
    }
}

/// One direction: a transmitter and receiver advanced together.
#[derive(Debug, Clone)]
pub struct Link {
    direction: Direction,
    pub tx: Transmitter,
    pub rx: Receiver,
    trace: Option<Vec<WireTraceRow>>,
    last_traced: WireState,
    max_in_flight: u64,
}

impl Link {
    pub fn new(direction: Direction, config: LinkConfig) -> Self {
        Self {
            direction,
            tx: Transmitter::new(config.ack_timeout),
            rx: Receiver::new(config.ack_policy),
            trace: None,
            last_traced: WireState::default(),
            max_in_flight: 0,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn wire_state(&self) -> WireState {
        WireState {
            data: self.tx.wires(),
            ack: self.rx.ack_wire(),
        }
    }

    pub fn trace(&self) -> &[WireTraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<WireTraceRow> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn is_idle(&self) -> bool {
        self.tx.is_idle() && self.rx.is_idle()
    }

    pub fn in_flight(&self) -> u64 {
        self.tx.symbols_sent() - self.tx.acks_received()
    }

    /// Largest `symbols_sent - acks_received` observed after any step.
    pub fn max_in_flight(&self) -> u64 {
        self.max_in_flight
    }

    /// Transmitter then receiver for one tick.
    pub fn step(&mut self, now: u64) -> Option<PacketWord> {
        self.tx.step(now, self.rx.ack_wire());
        let delivered = self.rx.step(now, self.tx.wires());
        self.max_in_flight = self.max_in_flight.max(self.in_flight());
        let state = self.wire_state();
        if let Some(trace) = self.trace.as_mut() {
            if state != self.last_traced {
                trace.push(WireTraceRow {
                    tick: now,
                    direction: self.direction,
                    wires: state,
                });
            }
        }
        self.last_traced = state;
        delivered
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    pub delivered: Vec<PacketWord>,
    pub symbols_sent: u64,
    pub acks_received: u64,
    pub ticks_elapsed: u64,
    pub stall: Option<StallInfo>,
    pub framing_errors: u64,
    pub max_in_flight: u64,
}

impl TransferReport {
    /// One-line summary, as printed by the loopback command.
    pub fn summary(&self) -> String {
        match self.stall {
            Some(stall) => format!(
                "delivered {}, stalled at symbol {}",
                self.delivered.len(),
                stall.symbol_index
            ),
            None => format!(
                "delivered {}, symbols {}",
                self.delivered.len(),
                self.symbols_sent
            ),
        }
    }
}

/// Pushes `packets` across a fresh link until they are all delivered, the
/// transmitter stalls, or `budget` ticks have passed.
pub fn link_transfer(
    packets: &[SpinnPacket],
    config: LinkConfig,
    budget: u64,
) -> Result<TransferReport, LinkError> {
    if budget == 0 {
        return Err(LinkError::ZeroBudget);
    }
    let mut link = Link::new(Direction::Tx, config);
    for packet in packets {
        link.tx.enqueue_word(packet.to_word());
    }
    let mut delivered = Vec::with_capacity(packets.len());
    let mut ticks = 0;
    while ticks < budget {
        if let Some(word) = link.step(ticks) {
            delivered.push(word);
        }
        ticks += 1;
        if link.tx.stall().is_some() || link.is_idle() {
            break;
        }
    }
    Ok(TransferReport {
        delivered,
        symbols_sent: link.tx.symbols_sent(),
        acks_received: link.tx.acks_received(),
        ticks_elapsed: ticks,
        stall: link.tx.stall(),
        framing_errors: link.rx.framing_errors(),
        max_in_flight: link.max_in_flight(),
    })
}

/// Tick budget that lets `packets` finish under `config`, plus room for the
/// ack timeout to expire.
pub fn transfer_budget(packets: &[SpinnPacket], config: LinkConfig) -> u64 {
    let symbols: u64 = packets
        .iter()
        .map(|p| p.to_word().nibble_count() as u64 + 1)
        .sum();
    let per_symbol = match config.ack_policy {
        AckPolicy::DelayTicks(n) => n + 1,
        _ => 1,
    };
    symbols * per_symbol + config.ack_timeout + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aer::build_mc_packet;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_symbol(0b0000000, LinkSymbol::Data(0)), 0b0000011);
        assert_eq!(encode_symbol(0b0000011, LinkSymbol::Data(0)), 0b0000000);
        assert_eq!(encode_symbol(0b0000000, LinkSymbol::EndOfPacket), 0b1100000);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_transition(0b0000000, 0b0000011),
            Ok(Some(LinkSymbol::Data(0)))
        );
        for w in 0..128 {
            assert_eq!(decode_transition(w, w), Ok(None));
        }
        assert!(matches!(
            decode_transition(0, 0b0000111),
            Err(LinkError::InvalidTransition { .. })
        ));
        assert!(decode_transition(0, 0b0000001).is_err());
    }

    #[test]
    fn reserved_pairs_are_invalid() {
        for (a, b) in [(3, 5), (3, 6), (4, 5), (4, 6)] {
            let next = (1 << a) | (1 << b);
            assert!(decode_transition(0, next).is_err(), "pair ({a},{b})");
        }
    }

    #[test]
    fn table_uses_distinct_pairs() {
        let masks: std::collections::BTreeSet<u8> =
            LinkSymbol::all().map(LinkSymbol::toggle_mask).collect();
        assert_eq!(masks.len(), 17);
        assert!(masks.iter().all(|m| m.count_ones() == 2 && m & 0x80 == 0));
    }

    #[test]
    fn frame_examples() {
        use LinkSymbol::{Data, EndOfPacket as Eop};
        assert_eq!(
            frame_packet(&build_mc_packet(0, None)),
            vec![
                Data(1),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Data(0),
                Eop
            ]
        );
        let key6 = frame_packet(&build_mc_packet(6, None));
        assert_eq!(&key6[..4], &[Data(1), Data(0), Data(6), Data(0)]);
        assert_eq!(key6.len(), 11);
        assert_eq!(frame_packet(&build_mc_packet(6, Some(1))).len(), 19);
    }

    #[test]
    fn deframe_errors() {
        let mut nine = vec![LinkSymbol::Data(0); 9];
        nine.push(LinkSymbol::EndOfPacket);
        assert_eq!(
            deframe_symbols(&nine),
            Err(LinkError::FramingError { nibbles: 9 })
        );
        assert_eq!(
            deframe_symbols(&[LinkSymbol::Data(1)]),
            Err(LinkError::MissingEop)
        );
        assert_eq!(deframe_symbols(&[]), Err(LinkError::MissingEop));
        let mut ok = vec![LinkSymbol::Data(1)];
        ok.extend([LinkSymbol::Data(0); 9]);
        ok.push(LinkSymbol::EndOfPacket);
        assert_eq!(deframe_symbols(&ok).unwrap().to_hex(), "0000000001");
        let mut long = vec![LinkSymbol::Data(0); 18];
        long.push(LinkSymbol::EndOfPacket);
        assert_eq!(deframe_symbols(&long).unwrap().bit_len(), 72);
    }

    #[test]
    fn symbol_parse_and_display() {
        assert_eq!("EOP".parse::<LinkSymbol>(), Ok(LinkSymbol::EndOfPacket));
        assert_eq!("f".parse::<LinkSymbol>(), Ok(LinkSymbol::Data(15)));
        assert!("10".parse::<LinkSymbol>().is_err());
        assert_eq!(LinkSymbol::Data(10).to_string(), "a");
    }

    #[test]
    fn transfer_examples() {
        let one = [build_mc_packet(0, None)];
        let cfg = LinkConfig::default();
        let r = link_transfer(&one, cfg, 10_000).unwrap();
        assert_eq!((r.delivered.len(), r.symbols_sent, r.stall), (1, 11, None));
        assert_eq!(r.delivered[0], one[0].to_word());

        let never = LinkConfig {
            ack_policy: AckPolicy::NeverAck,
            ..cfg
        };
        let r = link_transfer(&one, never, 10_000).unwrap();
        assert_eq!(r.delivered.len(), 0);
        assert_eq!(r.symbols_sent, 1);
        assert_eq!(r.stall.map(|s| s.symbol_index), Some(1));
        assert_eq!(r.summary(), "delivered 0, stalled at symbol 1");

        let r = link_transfer(&[], cfg, 10).unwrap();
        assert_eq!(r.summary(), "delivered 0, symbols 0");
        assert_eq!(link_transfer(&one, cfg, 0), Err(LinkError::ZeroBudget));
    }

    #[test]
    fn delayed_acks_slow_but_do_not_stall() {
        let packets = [build_mc_packet(3, None), build_mc_packet(4, Some(9))];
        let cfg = LinkConfig {
            ack_policy: AckPolicy::DelayTicks(5),
            ack_timeout: 100,
        };
        let r = link_transfer(&packets, cfg, transfer_budget(&packets, cfg)).unwrap();
        assert_eq!(r.stall, None);
        assert_eq!(r.delivered.len(), 2);
        assert_eq!(r.symbols_sent, 30);
        assert!(r.ticks_elapsed >= 30 * 6 - 6);
    }

    #[test]
    fn delay_past_timeout_stalls() {
        let cfg = LinkConfig {
            ack_policy: AckPolicy::DelayTicks(50),
            ack_timeout: 20,
        };
        let r = link_transfer(&[build_mc_packet(1, None)], cfg, 1000).unwrap();
        assert_eq!(r.stall.map(|s| s.symbol_index), Some(1));
        assert_eq!(r.stall.map(|s| s.tick), Some(20));
    }

    #[test]
    fn receiver_resyncs_at_end_of_packet() {
        let mut rx = Receiver::new(AckPolicy::Normal);
        let mut wires = 0u8;
        let mut t = 0;
        let mut feed = |rx: &mut Receiver, w: u8| {
            t += 1;
            rx.step(t, w)
        };
        // Glitch: a single wire flips.
        wires ^= 0b0000100;
        assert_eq!(feed(&mut rx, wires), None);
        assert!(rx.is_resyncing());
        assert_eq!(rx.framing_errors(), 1);
        // Garbage data is ignored; a second invalid transition is not recounted.
        wires = encode_symbol(wires, LinkSymbol::Data(3));
        feed(&mut rx, wires);
        wires ^= 0b0111000;
        feed(&mut rx, wires);
        assert_eq!(rx.framing_errors(), 1);
        wires = encode_symbol(wires, LinkSymbol::EndOfPacket);
        assert_eq!(feed(&mut rx, wires), None);
        assert!(!rx.is_resyncing());
        // Next good frame is delivered.
        let word = build_mc_packet(6, None).to_word();
        let mut out = None;
        for sym in frame_word(word) {
            wires = encode_symbol(wires, sym);
            out = feed(&mut rx, wires).or(out);
        }
        assert_eq!(out, Some(word));
    }

    #[test]
    fn overlong_frame_is_a_framing_error() {
        let mut d = Deframer::new();
        for _ in 0..18 {
            assert_eq!(d.push(LinkSymbol::Data(1)), None);
        }
        assert_eq!(
            d.push(LinkSymbol::Data(1)),
            Some(Err(LinkError::FramingError { nibbles: 19 }))
        );
        assert!(d.is_resyncing());
        assert_eq!(d.push(LinkSymbol::EndOfPacket), None);
        assert!(!d.is_resyncing());
    }

    #[test]
    fn ack_policy_parsing() {
        assert_eq!("normal".parse(), Ok(AckPolicy::Normal));
        assert_eq!("never".parse(), Ok(AckPolicy::NeverAck));
        assert_eq!("delay:7".parse(), Ok(AckPolicy::DelayTicks(7)));
        assert!("delay:x".parse::<AckPolicy>().is_err());
        assert_eq!(AckPolicy::DelayTicks(7).to_string(), "delay:7");
    }
}
