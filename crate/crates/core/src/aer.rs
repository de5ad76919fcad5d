//! Address-event packets: multicast packet layout, odd parity, and the
//! mapper functions between neuron addresses and routing keys.
//!
//! Serialized layout, bit 0 transmitted first:
//!
//! | bits   | field                          |
//! |--------|--------------------------------|
//! | 0      | parity (odd over all bits)     |
//! | 1      | payload present                |
//! | 2..=3  | timestamp (always 0 on emit)   |
//! | 4..=5  | emergency routing (always 0)   |
//! | 6..=7  | packet type (0 = multicast)    |
//! | 8..=39 | routing key, LSB first         |
//! | 40..=71| payload, LSB first (optional)  |
//!
//! All field positions live in the constants below.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PARITY_BIT: u32 = 0;
const PAYLOAD_FLAG_BIT: u32 = 1;
const TIMESTAMP_SHIFT: u32 = 2;
const EMERGENCY_SHIFT: u32 = 4;
const TYPE_SHIFT: u32 = 6;
const KEY_SHIFT: u32 = 8;
const PAYLOAD_SHIFT: u32 = 40;

/// Bit length of a key-only packet.
pub const SHORT_PACKET_BITS: u32 = 40;
/// Bit length of a packet carrying a payload word.
pub const LONG_PACKET_BITS: u32 = 72;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AerError {
    #[error("IllegalLength: packet must be 40 or 72 bits, got {0}")]
    IllegalLength(u32),
    #[error("ParityError")]
    ParityError,
    #[error("UnsupportedPacketType: type bits {0:#04b}")]
    UnsupportedPacketType(u8),
    #[error("PayloadFlagMismatch: payload flag disagrees with packet length")]
    PayloadFlagMismatch,
    #[error("UnroutableEvent: no routing key for neuron address {0}")]
    UnroutableEvent(u32),
    #[error("UnroutableKey: no neuron address for routing key {0:#x}")]
    UnroutableKey(u32),
    #[error("DuplicateRoute: {0}")]
    DuplicateRoute(String),
    #[error("InvalidHex: {0}")]
    InvalidHex(String),
}

impl AerError {
    /// Short variant name, as printed by the codec CLI.
    pub fn name(&self) -> &'static str {
        match self {
            AerError::IllegalLength(_) => "IllegalLength",
            AerError::ParityError => "ParityError",
            AerError::UnsupportedPacketType(_) => "UnsupportedPacketType",
            AerError::PayloadFlagMismatch => "PayloadFlagMismatch",
            AerError::UnroutableEvent(_) => "UnroutableEvent",
            AerError::UnroutableKey(_) => "UnroutableKey",
            AerError::DuplicateRoute(_) => "DuplicateRoute",
            AerError::InvalidHex(_) => "InvalidHex",
        }
    }
}

/// A spike: the address of the firing neuron and the virtual tick it was seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AerEvent {
    pub address: u32,
    pub timestamp: u64,
}

impl AerEvent {
    pub fn new(address: u32, timestamp: u64) -> Self {
        Self { address, timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketType {
    Multicast,
}

impl PacketType {
    fn bits(self) -> u8 {
        match self {
            PacketType::Multicast => 0b00,
        }
    }
}

/// A decoded multicast packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinnPacket {
    pub packet_type: PacketType,
    pub key: u32,
    pub payload: Option<u32>,
    pub timestamp_bits: u8,
    pub emergency_bits: u8,
}

impl SpinnPacket {
    pub fn bit_len(&self) -> u32 {
        if self.payload.is_some() {
            LONG_PACKET_BITS
        } else {
            SHORT_PACKET_BITS
        }
    }

    /// Serializes the packet with a freshly computed parity bit.
    pub fn to_word(&self) -> PacketWord {
        let len = self.bit_len();
        let mut bits = (u128::from(self.packet_type.bits() & 0b11) << TYPE_SHIFT)
            | (u128::from(self.timestamp_bits & 0b11) << TIMESTAMP_SHIFT)
            | (u128::from(self.emergency_bits & 0b11) << EMERGENCY_SHIFT)
            | (u128::from(self.key) << KEY_SHIFT);
        if let Some(payload) = self.payload {
            bits |= 1 << PAYLOAD_FLAG_BIT;
            bits |= u128::from(payload) << PAYLOAD_SHIFT;
        }
        // Length is always legal here.
        let parity = parity_for(bits, len);
        PacketWord {
            bits: bits | u128::from(parity) << PARITY_BIT,
            len,
        }
    }
}

/// A serialized packet: `len` bits (40 or 72) held in the low bits of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PacketWord {
    bits: u128,
    len: u32,
}

impl PacketWord {
    pub fn new(bits: u128, len: u32) -> Result<Self, AerError> {
        check_len(len)?;
        if bits >> len != 0 {
            return Err(AerError::IllegalLength(128 - bits.leading_zeros()));
        }
        Ok(Self { bits, len })
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn bit_len(&self) -> u32 {
        self.len
    }

    /// Number of 4-bit nibbles on the wire.
    pub fn nibble_count(&self) -> usize {
        (self.len / 4) as usize
    }

    pub fn with_bit_flipped(&self, position: u32) -> Self {
        assert!(position < self.len, "bit position out of range");
        Self {
            bits: self.bits ^ (1 << position),
            len: self.len,
        }
    }

    /// Hex text, most-significant nibble first: 10 digits for 40-bit words,
    /// 18 for 72-bit words.
    pub fn to_hex(&self) -> String {
        format!("{:0width$x}", self.bits, width = self.nibble_count())
    }

    pub fn from_hex(text: &str) -> Result<Self, AerError> {
        let digits = text.trim();
        let digits = digits
            .strip_prefix("0x")
            .or_else(|| digits.strip_prefix("0X"))
            .unwrap_or(digits);
        let len = match digits.len() {
            10 => SHORT_PACKET_BITS,
            18 => LONG_PACKET_BITS,
            n => {
                return Err(AerError::InvalidHex(format!(
                    "expected 10 or 18 hex digits, got {n}"
                )))
            }
        };
        let bits = u128::from_str_radix(digits, 16)
            .map_err(|e| AerError::InvalidHex(format!("{digits:?}: {e}")))?;
        Self::new(bits, len)
    }
}

impl fmt::Display for PacketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for PacketWord {
    type Err = AerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

fn check_len(len: u32) -> Result<(), AerError> {
    match len {
        SHORT_PACKET_BITS | LONG_PACKET_BITS => Ok(()),
        other => Err(AerError::IllegalLength(other)),
    }
}

fn parity_for(content: u128, len: u32) -> u8 {
    let mask = (1u128 << len) - 1;
    let ones = (content & mask & !(1 << PARITY_BIT)).count_ones();
    // Odd parity: the parity bit makes the total count of ones odd.
    u8::from(ones.is_multiple_of(2))
}

/// Parity bit for `len` bits of packet content. The parity position (bit 0)
/// is ignored, so callers may pass a word with a stale parity bit.
pub fn compute_parity(content: u128, len: u32) -> Result<u8, AerError> {
    check_len(len)?;
    Ok(parity_for(content, len))
}

/// Builds a multicast packet for `key`, optionally carrying a payload word.
pub fn build_mc_packet(key: u32, payload: Option<u32>) -> SpinnPacket {
    SpinnPacket {
        packet_type: PacketType::Multicast,
        key,
        payload,
        timestamp_bits: 0,
        emergency_bits: 0,
    }
}

/// Validates and decodes a serialized packet.
///
/// Checks run in order: parity, packet type, payload flag. A corrupted word
/// therefore always reports `ParityError` first.
pub fn parse_packet(word: PacketWord) -> Result<SpinnPacket, AerError> {
    let PacketWord { bits, len } = word;
    check_len(len)?;
    if bits.count_ones() % 2 == 0 {
        return Err(AerError::ParityError);
    }
    let type_bits = ((bits >> TYPE_SHIFT) & 0b11) as u8;
    if type_bits != PacketType::Multicast.bits() {
        return Err(AerError::UnsupportedPacketType(type_bits));
    }
    let has_payload = (bits >> PAYLOAD_FLAG_BIT) & 1 == 1;
    if has_payload != (len == LONG_PACKET_BITS) {
        return Err(AerError::PayloadFlagMismatch);
    }
    Ok(SpinnPacket {
        packet_type: PacketType::Multicast,
        key: (bits >> KEY_SHIFT) as u32,
        payload: has_payload.then_some((bits >> PAYLOAD_SHIFT) as u32),
        timestamp_bits: ((bits >> TIMESTAMP_SHIFT) & 0b11) as u8,
        emergency_bits: ((bits >> EMERGENCY_SHIFT) & 0b11) as u8,
    })
}

/// Forward (neuron address → key) and reverse (key → neuron address) routes.
///
/// Every forward entry has its inverse in the reverse table. The reverse
/// table may also hold keys of remote populations that answer the gateway.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTable {
    forward: BTreeMap<u32, u32>,
    reverse: BTreeMap<u32, u32>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Address `i` maps to key `i` for every address in `addresses`.
    pub fn identity(addresses: impl IntoIterator<Item = u32>) -> Self {
        let mut table = Self::new();
        for address in addresses {
            table
                .add_route(address, address)
                .expect("identity routes are injective");
        }
        table
    }

    /// Adds a forward route and its inverse.
    pub fn add_route(&mut self, address: u32, key: u32) -> Result<(), AerError> {
        if let Some(existing) = self.forward.get(&address) {
            return Err(AerError::DuplicateRoute(format!(
                "address {address} already routed to key {existing:#x}"
            )));
        }
        if let Some(owner) = self.reverse.get(&key) {
            return Err(AerError::DuplicateRoute(format!(
                "key {key:#x} already resolves to address {owner}"
            )));
        }
        self.forward.insert(address, key);
        self.reverse.insert(key, address);
        Ok(())
    }

    /// Adds a receive-only route for a key the gateway never sends.
    pub fn add_reverse(&mut self, key: u32, address: u32) -> Result<(), AerError> {
        if let Some(owner) = self.reverse.get(&key) {
            if *owner == address {
                return Ok(());
            }
            return Err(AerError::DuplicateRoute(format!(
                "key {key:#x} already resolves to address {owner}"
            )));
        }
        self.reverse.insert(key, address);
        Ok(())
    }

    pub fn key_for(&self, address: u32) -> Option<u32> {
        self.forward.get(&address).copied()
    }

    pub fn address_for(&self, key: u32) -> Option<u32> {
        self.reverse.get(&key).copied()
    }

    pub fn forward(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.forward.iter().map(|(a, k)| (*a, *k))
    }

    pub fn reverse(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.reverse.iter().map(|(k, a)| (*k, *a))
    }
}

pub fn map_event_to_key(event: &AerEvent, table: &RoutingTable) -> Result<u32, AerError> {
    table
        .key_for(event.address)
        .ok_or(AerError::UnroutableEvent(event.address))
}

pub fn map_key_to_event(key: u32, table: &RoutingTable, now: u64) -> Result<AerEvent, AerError> {
    table
        .address_for(key)
        .map(|address| AerEvent::new(address, now))
        .ok_or(AerError::UnroutableKey(key))
}

/// Serializes a batch of packets. Runs on the rayon pool when the `parallel`
/// feature is enabled.
pub fn encode_batch(packets: &[SpinnPacket]) -> Vec<PacketWord> {
    crate::par::map_slice(packets, SpinnPacket::to_word)
}

/// Parses a batch of serialized packets, preserving order.
pub fn decode_batch(words: &[PacketWord]) -> Vec<Result<SpinnPacket, AerError>> {
    crate::par::map_slice(words, |w| parse_packet(*w))
}
