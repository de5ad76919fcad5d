//! Monitor registers behind the eight-digit seven-segment display.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DIGITS: usize = 8;

/// Segment patterns for 0–9, bit 0 = segment a … bit 6 = segment g, active high.
pub const SEGMENT_CODES: [u8; 10] = [0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07, 0x7F, 0x6F];

/// A digit with every segment off.
pub const BLANK: u8 = 0x00;

const MODULUS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    /// Last sensor value accepted by the gateway.
    #[default]
    SetValue,
    /// Packets received across all keys.
    RxCount,
    /// Measured frequency of the most recently received key, in mHz.
    MeasuredFreq,
    /// Sum of all error counters.
    Errors,
}

impl DisplayMode {
    pub fn code(self) -> u8 {
        match self {
            DisplayMode::SetValue => 0,
            DisplayMode::RxCount => 1,
            DisplayMode::MeasuredFreq => 2,
            DisplayMode::Errors => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DisplayMode::SetValue,
            1 => DisplayMode::RxCount,
            2 => DisplayMode::MeasuredFreq,
            3 => DisplayMode::Errors,
            _ => return None,
        })
    }
}

impl fmt::Display for DisplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisplayMode::SetValue => "set_value",
            DisplayMode::RxCount => "rx_count",
            DisplayMode::MeasuredFreq => "measured_freq",
            DisplayMode::Errors => "errors",
        })
    }
}

impl FromStr for DisplayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "set_value" => Ok(DisplayMode::SetValue),
            "rx_count" => Ok(DisplayMode::RxCount),
            "measured_freq" => Ok(DisplayMode::MeasuredFreq),
            "errors" => Ok(DisplayMode::Errors),
            other => Err(format!(
                "unknown display mode {other:?} (expected set_value, rx_count, measured_freq or errors)"
            )),
        }
    }
}

/// Segment codes for `value mod 10^8`, most significant digit first,
/// leading zeros blanked. Zero shows a single `0` in the last digit.
pub fn encode_digits(value: u64) -> [u8; DIGITS] {
    let mut value = value % MODULUS;
    let mut digits = [BLANK; DIGITS];
    for slot in digits.iter_mut().rev() {
        *slot = SEGMENT_CODES[(value % 10) as usize];
        value /= 10;
        if value == 0 {
            break;
        }
    }
    digits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorRegisters {
    pub displayed_value: u64,
    pub mode: DisplayMode,
    pub digits: [u8; DIGITS],
}

impl Default for MonitorRegisters {
    fn default() -> Self {
        Self::new(DisplayMode::default(), 0)
    }
}

impl MonitorRegisters {
    pub fn new(mode: DisplayMode, displayed_value: u64) -> Self {
        Self {
            displayed_value,
            mode,
            digits: encode_digits(displayed_value),
        }
    }

    pub fn show(&mut self, value: u64) {
        self.displayed_value = value;
        self.digits = encode_digits(value);
    }

    pub fn is_consistent(&self) -> bool {
        self.digits == encode_digits(self.displayed_value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("registers serialize")
    }
}
