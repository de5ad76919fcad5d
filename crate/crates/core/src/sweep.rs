//! Batch runs: input/output frequency sweeps at network and closed-loop
//! level, and value fidelity over the whole sensor range.
//!
//! Each point is an independent simulation, so batches go through
//! [`crate::par::map_slice`]; the `_sequential` variants run the same points
//! one after another.

use serde::{Deserialize, Serialize};

use crate::config::{Drive, ExperimentConfig, SampleEntry, ScheduleEntry};
use crate::experiment::{run_experiment, ExperimentError};
use crate::network::{run_network, NetworkConfig, NetworkError, Stimulus};
use crate::par;
use crate::rate::{frequency_to_period, generate_spike_train, value_to_period, RateConfig};

/// Pairs every output spike with the oldest unanswered input at or before
/// it. Returns the per-output latencies and the number of outputs that had
/// no input to pair with.
pub fn match_latencies(inputs: &[u64], outputs: &[u64]) -> (Vec<u64>, usize) {
    let mut latencies = Vec::with_capacity(outputs.len());
    let mut unmatched = 0;
    let mut next_input = 0;
    for &out in outputs {
        if next_input < inputs.len() && inputs[next_input] <= out {
            latencies.push(out - inputs[next_input]);
            next_input += 1;
        } else {
            unmatched += 1;
        }
    }
    (latencies, unmatched)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub frequency_mhz: u64,
    pub input_spikes: usize,
    pub output_spikes: usize,
    /// Largest input → output delay in ticks, if any output occurred.
    pub max_latency: Option<u64>,
    pub unmatched_outputs: usize,
}

impl FrequencyPoint {
    fn new(frequency_mhz: u64, inputs: &[u64], outputs: &[u64]) -> Self {
        let (latencies, unmatched_outputs) = match_latencies(inputs, outputs);
        Self {
            frequency_mhz,
            input_spikes: inputs.len(),
            output_spikes: outputs.len(),
            max_latency: latencies.into_iter().max(),
            unmatched_outputs,
        }
    }

    pub fn count_difference(&self) -> u64 {
        self.input_spikes.abs_diff(self.output_spikes) as u64
    }
}

/// Constant-rate stimulus fed straight into the loopback network.
pub fn network_point(frequency_mhz: u64, duration_ms: u64) -> Result<FrequencyPoint, NetworkError> {
    let config = NetworkConfig::loopback_experiment();
    let period = frequency_to_period(frequency_mhz, config.tick_rate)
        .map_err(|e| NetworkError::Invalid(e.to_string()))?;
    let ticks_per_ms = config.tick_rate / 1000;
    let train = generate_spike_train(period, 0, duration_ms * ticks_per_ms)
        .map_err(|e| NetworkError::Invalid(e.to_string()))?;
    let inputs = train.ticks().to_vec();
    let rec = run_network(config, &[Stimulus { key: 0, train }], duration_ms)?;
    Ok(FrequencyPoint::new(
        frequency_mhz,
        &inputs,
        &rec.spike_ticks("set_value"),
    ))
}

pub fn network_sweep(
    frequencies_mhz: &[u64],
    duration_ms: u64,
) -> Vec<Result<FrequencyPoint, NetworkError>> {
    par::map_slice(frequencies_mhz, |&f| network_point(f, duration_ms))
}

pub fn network_sweep_sequential(
    frequencies_mhz: &[u64],
    duration_ms: u64,
) -> Vec<Result<FrequencyPoint, NetworkError>> {
    par::map_slice_sequential(frequencies_mhz, |&f| network_point(f, duration_ms))
}

/// Constant-rate run of the full loop: gateway TX ticks are the inputs,
/// set-value spikes the outputs. `rx_count` is the gateway's answer count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopPoint {
    pub spikes: FrequencyPoint,
    pub rx_count: u64,
}

fn loop_config(drive: Drive, duration_ms: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        duration_ms,
        drive,
        wire_trace: false,
        ..ExperimentConfig::default()
    };
    cfg.network.record_membrane = false;
    cfg
}

pub fn closed_loop_point(
    frequency_mhz: u64,
    duration_ms: u64,
) -> Result<LoopPoint, ExperimentError> {
    let drive = Drive::Schedule(vec![ScheduleEntry {
        start_ms: 0,
        frequency_mhz,
    }]);
    let out = run_experiment(loop_config(drive, duration_ms))?;
    Ok(LoopPoint {
        spikes: FrequencyPoint::new(
            frequency_mhz,
            &out.tx_ticks(),
            &out.recordings.spike_ticks("set_value"),
        ),
        rx_count: out.summary.rx_count,
    })
}

pub fn closed_loop_sweep(
    frequencies_mhz: &[u64],
    duration_ms: u64,
) -> Vec<Result<LoopPoint, ExperimentError>> {
    par::map_slice(frequencies_mhz, |&f| closed_loop_point(f, duration_ms))
}

pub fn closed_loop_sweep_sequential(
    frequencies_mhz: &[u64],
    duration_ms: u64,
) -> Vec<Result<LoopPoint, ExperimentError>> {
    par::map_slice_sequential(frequencies_mhz, |&f| closed_loop_point(f, duration_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub value: i64,
    pub period: u64,
    pub held_ms: u64,
    pub answers: u64,
    /// Value recovered from the measured answer frequency.
    pub recovered: Option<i64>,
}

impl FidelityPoint {
    pub fn error(&self) -> Option<u64> {
        self.recovered.map(|r| r.abs_diff(self.value))
    }
}

/// Holds `value` for `periods` spike periods plus the loop latency, then
/// reads the value back from the gateway's answer-rate detector.
pub fn fidelity_point(
    value: i64,
    rate: RateConfig,
    periods: u64,
) -> Result<FidelityPoint, ExperimentError> {
    let period = value_to_period(value, &rate).map_err(crate::gateway::GatewayError::from)?;
    let ticks_per_ms = rate.tick_rate / 1000;
    // One extra period covers the link and two neural steps of latency.
    let held_ms = ((periods + 1) * period).div_ceil(ticks_per_ms);
    let mut cfg = loop_config(
        Drive::Samples(vec![SampleEntry { start_ms: 0, value }]),
        held_ms,
    );
    cfg.gateway.rate = rate;
    cfg.network.tick_rate = rate.tick_rate;
    let out = run_experiment(cfg)?;
    let key = out.summary.counters.keys().next().cloned();
    Ok(FidelityPoint {
        value,
        period,
        held_ms,
        answers: out.summary.rx_count,
        recovered: key.and_then(|k| out.summary.measured_values.get(&k).copied()),
    })
}

pub fn fidelity_sweep(
    rate: RateConfig,
    periods: u64,
) -> Vec<Result<FidelityPoint, ExperimentError>> {
    let values: Vec<i64> = (rate.v_min..=rate.v_max).collect();
    par::map_slice(&values, |&v| fidelity_point(v, rate, periods))
}

pub fn fidelity_sweep_sequential(
    rate: RateConfig,
    periods: u64,
) -> Vec<Result<FidelityPoint, ExperimentError>> {
    let values: Vec<i64> = (rate.v_min..=rate.v_max).collect();
    par::map_slice_sequential(&values, |&v| fidelity_point(v, rate, periods))
}
