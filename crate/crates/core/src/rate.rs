//! Integer-only rate coding.
//!
//! Sensor values map linearly onto a frequency band in millihertz, and
//! frequencies map onto spike periods in virtual ticks. Every division rounds
//! half up; no floating point is used anywhere in this module.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest frequency any spike train may carry: 1 kHz in millihertz.
pub const MAX_FREQUENCY_MHZ: u64 = 1_000_000;

pub const DEFAULT_TICK_RATE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("ValueOutOfRange: {value} outside [{min}, {max}]")]
    ValueOutOfRange { value: i64, min: i64, max: i64 },
    #[error("FrequencyCapExceeded: {mhz} mHz is above the 1 kHz cap ({MAX_FREQUENCY_MHZ} mHz)")]
    FrequencyCapExceeded { mhz: u64 },
    #[error("ZeroFrequency: frequency must be positive")]
    ZeroFrequency,
    #[error("ZeroPeriod: period must be at least one tick")]
    ZeroPeriod,
    #[error("ZeroWindow: estimation window must span at least one interval")]
    ZeroWindow,
    #[error("NotEnoughSpikes: need {needed}, have {have}")]
    NotEnoughSpikes { needed: usize, have: usize },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(&'static str),
    #[error("NotIncreasing: spike ticks must be strictly increasing (index {0})")]
    NotIncreasing(usize),
}

/// `round_half_up(num / den)` for `den > 0`.
#[inline]
pub fn div_round_half_up(num: u128, den: u128) -> u128 {
    debug_assert!(den > 0);
    (2 * num + den) / (2 * den)
}

/// `round_half_up(num / den)` for signed `num` and `den > 0`: ties go toward
/// positive infinity.
#[inline]
fn div_round_half_up_signed(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    (2 * num + den).div_euclid(2 * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Virtual ticks per second.
    pub tick_rate: u64,
    pub f_min_mhz: u64,
    pub f_max_mhz: u64,
    pub v_min: i64,
    pub v_max: i64,
}

impl Default for RateConfig {
    /// 1 Hz to 10 Hz over sensor values 0..=9, on a 1 MHz tick.
    fn default() -> Self {
        Self {
            tick_rate: DEFAULT_TICK_RATE,
            f_min_mhz: 1_000,
            f_max_mhz: 10_000,
            v_min: 0,
            v_max: 9,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), RateError> {
        if self.tick_rate == 0 {
            return Err(RateError::InvalidConfig("tick_rate must be positive"));
        }
        if self.f_min_mhz == 0 {
            return Err(RateError::InvalidConfig("f_min must be positive"));
        }
        if self.f_min_mhz > self.f_max_mhz {
            return Err(RateError::InvalidConfig("f_min must not exceed f_max"));
        }
        if self.f_max_mhz > MAX_FREQUENCY_MHZ {
            return Err(RateError::FrequencyCapExceeded {
                mhz: self.f_max_mhz,
            });
        }
        if self.v_min >= self.v_max {
            return Err(RateError::InvalidConfig("v_min must be below v_max"));
        }
        Ok(())
    }

    fn span(&self) -> u128 {
        (i128::from(self.v_max) - i128::from(self.v_min)) as u128
    }

    fn check_value(&self, value: i64) -> Result<(), RateError> {
        if value < self.v_min || value > self.v_max {
            return Err(RateError::ValueOutOfRange {
                value,
                min: self.v_min,
                max: self.v_max,
            });
        }
        Ok(())
    }

    /// Frequency of `value` as an exact fraction `(numerator, span)` in mHz.
    fn frequency_fraction(&self, value: i64) -> (u128, u128) {
        let span = self.span();
        let offset = (i128::from(value) - i128::from(self.v_min)) as u128;
        let numerator = u128::from(self.f_min_mhz) * span
            + offset * u128::from(self.f_max_mhz - self.f_min_mhz);
        (numerator, span)
    }
}

/// Frequency assigned to `value`, rounded half up to whole millihertz.
pub fn value_to_frequency(value: i64, cfg: &RateConfig) -> Result<u64, RateError> {
    cfg.check_value(value)?;
    let (num, span) = cfg.frequency_fraction(value);
    Ok(div_round_half_up(num, span) as u64)
}

/// Spike period in ticks for a sensor value. The period is computed from the
/// exact rational frequency, so only the final division rounds.
pub fn value_to_period(value: i64, cfg: &RateConfig) -> Result<u64, RateError> {
    cfg.check_value(value)?;
    let (freq_num, span) = cfg.frequency_fraction(value);
    if freq_num > u128::from(MAX_FREQUENCY_MHZ) * span {
        return Err(RateError::FrequencyCapExceeded {
            mhz: div_round_half_up(freq_num, span) as u64,
        });
    }
    // period = 1000 * tick_rate / (freq_num / span)
    let num = 1000 * u128::from(cfg.tick_rate) * span;
    Ok(div_round_half_up(num, freq_num) as u64)
}

pub fn frequency_to_period(mhz: u64, tick_rate: u64) -> Result<u64, RateError> {
    if mhz == 0 {
        return Err(RateError::ZeroFrequency);
    }
    if mhz > MAX_FREQUENCY_MHZ {
        return Err(RateError::FrequencyCapExceeded { mhz });
    }
    Ok(div_round_half_up(1000 * u128::from(tick_rate), u128::from(mhz)) as u64)
}

pub fn period_to_frequency(period: u64, tick_rate: u64) -> Result<u64, RateError> {
    if period == 0 {
        return Err(RateError::ZeroPeriod);
    }
    Ok(div_round_half_up(1000 * u128::from(tick_rate), u128::from(period)) as u64)
}

/// Inverse of [`value_to_period`], clamped to the configured value range.
pub fn period_to_value(period: u64, cfg: &RateConfig) -> Result<i64, RateError> {
    if period == 0 {
        return Err(RateError::ZeroPeriod);
    }
    let df = i128::from(cfg.f_max_mhz) - i128::from(cfg.f_min_mhz);
    if df == 0 {
        return Ok(cfg.v_min);
    }
    // value - v_min = (1000 * tick_rate / period - f_min) * span / df
    let span = cfg.span() as i128;
    let period = i128::from(period);
    let num = (1000 * i128::from(cfg.tick_rate) - i128::from(cfg.f_min_mhz) * period) * span;
    let offset = div_round_half_up_signed(num, period * df);
    let value =
        (i128::from(cfg.v_min) + offset).clamp(i128::from(cfg.v_min), i128::from(cfg.v_max));
    Ok(value as i64)
}

/// Strictly increasing spike ticks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    ticks: Vec<u64>,
}

impl SpikeTrain {
    pub fn new(ticks: Vec<u64>) -> Result<Self, RateError> {
        if let Some(i) = ticks.windows(2).position(|w| w[0] >= w[1]) {
            return Err(RateError::NotIncreasing(i + 1));
        }
        Ok(Self { ticks })
    }

    pub fn ticks(&self) -> &[u64] {
        &self.ticks
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn into_ticks(self) -> Vec<u64> {
        self.ticks
    }

    /// One tick per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick\n");
        for t in &self.ticks {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }
}

/// Spikes at `start + k * period` for `k >= 1`, inside `[start, start + duration)`.
pub fn generate_spike_train(
    period: u64,
    start: u64,
    duration: u64,
) -> Result<SpikeTrain, RateError> {
    if period == 0 {
        return Err(RateError::ZeroPeriod);
    }
    let end = start + duration;
    let ticks = (1..)
        .map(|k| start + k * period)
        .take_while(|&t| t < end)
        .collect();
    Ok(SpikeTrain { ticks })
}

/// One stretch of a piecewise-constant rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateSegment {
    pub start: u64,
    pub period: u64,
}

/// Spike ticks produced by a generator whose period changes over time.
///
/// A period change never restarts the running countdown: the spike already
/// scheduled fires on the old period, and the new period applies from that
/// spike on. The first segment starts the generator, with its first spike
/// one full period after the segment start.
pub fn schedule_train(segments: &[RateSegment], end: u64) -> Result<SpikeTrain, RateError> {
    let Some(first) = segments.first() else {
        return Ok(SpikeTrain::default());
    };
    if segments.iter().any(|s| s.period == 0) {
        return Err(RateError::ZeroPeriod);
    }
    let mut ticks = Vec::new();
    let mut period = first.period;
    let mut next = first.start + period;
    let mut pending = segments[1..].iter().peekable();
    while next < end {
        while let Some(seg) = pending.next_if(|s| s.start <= next) {
            period = seg.period;
        }
        ticks.push(next);
        next += period;
    }
    Ok(SpikeTrain { ticks })
}

/// Rounded mean of the last `k` inter-spike intervals.
pub fn estimate_period(ticks: &[u64], k: usize) -> Result<u64, RateError> {
    if k == 0 {
        return Err(RateError::ZeroWindow);
    }
    if ticks.len() < k + 1 {
        return Err(RateError::NotEnoughSpikes {
            needed: k + 1,
            have: ticks.len(),
        });
    }
    let last = ticks[ticks.len() - 1];
    let first = ticks[ticks.len() - 1 - k];
    Ok(div_round_half_up(u128::from(last - first), k as u128) as u64)
}

/// Running frequency detector: keeps the last `window + 1` arrival ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyDetector {
    window: usize,
    recent: VecDeque<u64>,
}

impl FrequencyDetector {
    pub fn new(window: usize) -> Result<Self, RateError> {
        if window == 0 {
            return Err(RateError::ZeroWindow);
        }
        Ok(Self {
            window,
            recent: VecDeque::with_capacity(window + 1),
        })
    }

    pub fn observe(&mut self, tick: u64) {
        if self.recent.len() == self.window + 1 {
            self.recent.pop_front();
        }
        self.recent.push_back(tick);
    }

    pub fn period(&self) -> Result<u64, RateError> {
        let ticks: Vec<u64> = self.recent.iter().copied().collect();
        estimate_period(&ticks, self.window)
    }

    pub fn frequency_mhz(&self, tick_rate: u64) -> Result<u64, RateError> {
        period_to_frequency(self.period()?, tick_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eight_bit() -> RateConfig {
        RateConfig {
            tick_rate: 1_000_000,
            f_min_mhz: 1_000,
            f_max_mhz: 1_000_000,
            v_min: 0,
            v_max: 255,
        }
    }

    #[test]
    fn period_examples() {
        let cfg = RateConfig::default();
        assert_eq!(value_to_period(0, &cfg), Ok(1_000_000));
        assert_eq!(value_to_period(9, &cfg), Ok(100_000));
        assert_eq!(frequency_to_period(10_000, 1_000_000), Ok(100_000));
        assert_eq!(frequency_to_period(1_000, 1_000), Ok(1_000));
    }

    #[test]
    fn out_of_range_and_cap() {
        let cfg = RateConfig::default();
        assert!(matches!(
            value_to_period(10, &cfg),
            Err(RateError::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            value_to_period(-1, &cfg),
            Err(RateError::ValueOutOfRange { .. })
        ));
        assert_eq!(
            frequency_to_period(1_500_000, 1_000_000),
            Err(RateError::FrequencyCapExceeded { mhz: 1_500_000 })
        );
        // A config that slipped past validation is still caught per value.
        let bad = RateConfig {
            f_max_mhz: 2_000_000,
            ..eight_bit()
        };
        assert!(bad.validate().is_err());
        assert!(matches!(
            value_to_period(255, &bad),
            Err(RateError::FrequencyCapExceeded { .. })
        ));
        assert!(value_to_period(0, &bad).is_ok());
    }

    #[test]
    fn endpoints_invert() {
        let cfg = eight_bit();
        let p_min = value_to_period(cfg.v_min, &cfg).unwrap();
        let p_max = value_to_period(cfg.v_max, &cfg).unwrap();
        assert_eq!(period_to_value(p_min, &cfg), Ok(cfg.v_min));
        assert_eq!(period_to_value(p_max, &cfg), Ok(cfg.v_max));
        assert_eq!(period_to_value(0, &cfg), Err(RateError::ZeroPeriod));
        // Out-of-band periods clamp.
        assert_eq!(period_to_value(u64::MAX / 4, &cfg), Ok(cfg.v_min));
        assert_eq!(period_to_value(1, &cfg), Ok(cfg.v_max));
    }

    #[test]
    fn negative_value_ranges() {
        let cfg = RateConfig {
            tick_rate: 1_000_000,
            f_min_mhz: 2_000,
            f_max_mhz: 500_000,
            v_min: -1000,
            v_max: 1000,
        };
        for v in (-1000..=1000).step_by(7) {
            let p = value_to_period(v, &cfg).unwrap();
            let back = period_to_value(p, &cfg).unwrap();
            assert!((back - v).abs() <= 1, "{v} -> {p} -> {back}");
        }
    }

    #[test]
    fn spike_train_examples() {
        assert_eq!(
            generate_spike_train(10, 0, 35).unwrap().ticks(),
            &[10, 20, 30]
        );
        assert_eq!(generate_spike_train(1000, 0, 5000).unwrap().len(), 4);
        assert_eq!(generate_spike_train(1000, 0, 5001).unwrap().len(), 5);
        assert_eq!(generate_spike_train(0, 0, 10), Err(RateError::ZeroPeriod));
        assert!(generate_spike_train(7, 3, 0).unwrap().is_empty());
    }

    #[test]
    fn experiment_schedule_enumerates_54() {
        let segments = [
            RateSegment {
                start: 0,
                period: 1_000_000,
            },
            RateSegment {
                start: 5_000_000,
                period: 100_000,
            },
        ];
        let train = schedule_train(&segments, 10_000_000).unwrap();
        let mut expected: Vec<u64> = (1..=5).map(|s| s * 1_000_000).collect();
        expected.extend((1..=49).map(|k| 5_000_000 + k * 100_000));
        assert_eq!(train.ticks(), expected.as_slice());
        assert_eq!(train.len(), 54);
    }

    #[test]
    fn mid_countdown_change_keeps_pending_spike() {
        let segments = [
            RateSegment {
                start: 0,
                period: 1000,
            },
            RateSegment {
                start: 1500,
                period: 100,
            },
        ];
        let train = schedule_train(&segments, 2350).unwrap();
        assert_eq!(train.ticks(), &[1000, 2000, 2100, 2200, 2300]);
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_period(&[10, 20, 30], 1), Ok(10));
        assert_eq!(
            estimate_period(&[10], 1),
            Err(RateError::NotEnoughSpikes { needed: 2, have: 1 })
        );
        // ISIs 99, 101, 100, 100.
        assert_eq!(estimate_period(&[0, 99, 200, 300, 400], 4), Ok(100));
        assert_eq!(estimate_period(&[0, 1, 3], 2), Ok(2)); // 1.5 rounds up
        assert_eq!(estimate_period(&[0, 1], 0), Err(RateError::ZeroWindow));
    }

    #[test]
    fn detector_tracks_latest_window() {
        let mut d = FrequencyDetector::new(1).unwrap();
        d.observe(0);
        assert!(matches!(d.period(), Err(RateError::NotEnoughSpikes { .. })));
        d.observe(100_000);
        assert_eq!(d.frequency_mhz(1_000_000), Ok(10_000));
        d.observe(1_100_000);
        assert_eq!(d.frequency_mhz(1_000_000), Ok(1_000));
    }

    #[test]
    fn spike_train_must_increase() {
        assert_eq!(
            SpikeTrain::new(vec![1, 1]),
            Err(RateError::NotIncreasing(1))
        );
        assert_eq!(
            SpikeTrain::new(vec![1, 2]).unwrap().to_csv(),
            "tick\n1\n2\n"
        );
    }

    #[test]
    fn signed_rounding_ties_go_up() {
        assert_eq!(div_round_half_up_signed(-3, 2), -1);
        assert_eq!(div_round_half_up_signed(3, 2), 2);
        assert_eq!(div_round_half_up_signed(-5, 2), -2);
        assert_eq!(div_round_half_up_signed(-7, 3), -2);
    }
}
