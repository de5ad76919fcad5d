//! Virtual SpiNN-3 endpoint: populations of `IF_curr_exp` neurons fed by
//! external-device populations, static projections, and live output that
//! turns spikes back into multicast packets.
//!
//! Neural step `n` runs at tick `n * ticks_per_step`. A packet that arrives
//! at tick `t` is applied from step `ceil(t / ticks_per_step) + max(delay, 1)`,
//! so input never acts within the step it arrives in.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aer::{build_mc_packet, SpinnPacket};
use crate::neuron::{LifKernel, LifParams, LifState, NeuronError, SynapticInput};
use crate::rate::{SpikeTrain, DEFAULT_TICK_RATE};

pub const DEFAULT_DT_US: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error("UnknownKey: no input route for key {0:#x}")]
    UnknownKey(u32),
    #[error("duration {duration_ms} ms is not a whole number of {dt_us} us steps")]
    RaggedDuration { duration_ms: u64, dt_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PopulationKind {
    /// Spike source driven by incoming packets; no dynamics of its own.
    External,
    IfCurrExp(LifParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    pub size: u32,
    pub kind: PopulationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connector {
    OneToOne,
    AllToAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Receptor {
    Excitatory,
    Inhibitory,
}

/// Static (non-plastic) projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub source: String,
    pub target: String,
    /// nA
    pub weight: f64,
    pub delay_ms: f64,
    pub connector: Connector,
    pub receptor: Receptor,
}

/// Incoming key → neuron of an external population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRoute {
    pub key: u32,
    pub population: String,
    pub neuron: u32,
}

/// Streams a population's spikes out as packets, one key per neuron.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveOutput {
    pub population: String,
    pub keys: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub populations: Vec<PopulationSpec>,
    pub projections: Vec<ProjectionSpec>,
    pub inputs: Vec<InputRoute>,
    pub live_output: Vec<LiveOutput>,
    pub dt_us: u64,
    /// Wall-clock pacing only; never affects the dynamics.
    pub time_scale_factor: f64,
    pub tick_rate: u64,
    pub record_membrane: bool,
}

impl NetworkConfig {
    /// External device (key 0) projecting one-to-one onto a single
    /// set-value neuron whose spikes leave with key 6.
    pub fn loopback_experiment() -> Self {
        Self {
            populations: vec![
                PopulationSpec {
                    name: "external_device".into(),
                    size: 1,
                    kind: PopulationKind::External,
                },
                PopulationSpec {
                    name: "set_value".into(),
                    size: 1,
                    kind: PopulationKind::IfCurrExp(LifParams::default()),
                },
            ],
            projections: vec![ProjectionSpec {
                source: "external_device".into(),
                target: "set_value".into(),
                weight: 40.9,
                delay_ms: 0.0,
                connector: Connector::OneToOne,
                receptor: Receptor::Excitatory,
            }],
            inputs: vec![InputRoute {
                key: 0,
                population: "external_device".into(),
                neuron: 0,
            }],
            live_output: vec![LiveOutput {
                population: "set_value".into(),
                keys: BTreeMap::from([(0, 6)]),
            }],
            dt_us: DEFAULT_DT_US,
            time_scale_factor: 1.0,
            tick_rate: DEFAULT_TICK_RATE,
            record_membrane: true,
        }
    }

    pub fn ticks_per_step(&self) -> Result<u64, NetworkError> {
        let scaled = u128::from(self.dt_us) * u128::from(self.tick_rate);
        if self.dt_us == 0 || scaled % 1_000_000 != 0 || scaled == 0 {
            return Err(NetworkError::Invalid(format!(
                "time step {} us is not a whole number of ticks at {} ticks/s",
                self.dt_us, self.tick_rate
            )));
        }
        Ok((scaled / 1_000_000) as u64)
    }

    fn population_index(&self, name: &str) -> Result<usize, NetworkError> {
        self.populations
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| NetworkError::Invalid(format!("unknown population {name:?}")))
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        self.ticks_per_step()?;
        if !(self.time_scale_factor.is_finite() && self.time_scale_factor > 0.0) {
            return Err(NetworkError::Invalid(
                "time_scale_factor must be positive".into(),
            ));
        }
        let mut names = BTreeSet::new();
        for pop in &self.populations {
            if !names.insert(pop.name.as_str()) {
                return Err(NetworkError::Invalid(format!(
                    "duplicate population {:?}",
                    pop.name
                )));
            }
            if pop.size == 0 {
                return Err(NetworkError::Invalid(format!(
                    "population {:?} is empty",
                    pop.name
                )));
            }
            if let PopulationKind::IfCurrExp(params) = pop.kind {
                params.validate()?;
            }
        }
        for proj in &self.projections {
            let source = &self.populations[self.population_index(&proj.source)?];
            let target = &self.populations[self.population_index(&proj.target)?];
            if matches!(target.kind, PopulationKind::External) {
                return Err(NetworkError::Invalid(format!(
                    "projection target {:?} is an external population",
                    target.name
                )));
            }
            if proj.connector == Connector::OneToOne && source.size != target.size {
                return Err(NetworkError::Invalid(format!(
                    "one-to-one projection {:?} -> {:?} joins populations of different size",
                    source.name, target.name
                )));
            }
            if !proj.weight.is_finite() || !(proj.delay_ms.is_finite() && proj.delay_ms >= 0.0) {
                return Err(NetworkError::Invalid(format!(
                    "projection {:?} -> {:?} needs a finite weight and non-negative delay",
                    source.name, target.name
                )));
            }
        }
        let mut input_keys = BTreeSet::new();
        for route in &self.inputs {
            let pop = &self.populations[self.population_index(&route.population)?];
            if !matches!(pop.kind, PopulationKind::External) {
                return Err(NetworkError::Invalid(format!(
                    "input key {:#x} must target an external population, not {:?}",
                    route.key, pop.name
                )));
            }
            if route.neuron >= pop.size {
                return Err(NetworkError::Invalid(format!(
                    "input key {:#x} targets neuron {} of {}-neuron population {:?}",
                    route.key, route.neuron, pop.size, pop.name
                )));
            }
            if !input_keys.insert(route.key) {
                return Err(NetworkError::Invalid(format!(
                    "input key {:#x} routed twice",
                    route.key
                )));
            }
        }
        let mut output_keys = BTreeSet::new();
        for out in &self.live_output {
            let pop = &self.populations[self.population_index(&out.population)?];
            if matches!(pop.kind, PopulationKind::External) {
                return Err(NetworkError::Invalid(format!(
                    "live output from external population {:?}",
                    pop.name
                )));
            }
            for (&neuron, &key) in &out.keys {
                if neuron >= pop.size {
                    return Err(NetworkError::Invalid(format!(
                        "live output neuron {neuron} outside population {:?}",
                        pop.name
                    )));
                }
                if !output_keys.insert(key) {
                    return Err(NetworkError::Invalid(format!(
                        "live output key {key:#x} is not unique"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterRow {
    pub tick: u64,
    pub population: usize,
    pub neuron: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembraneRow {
    pub tick: u64,
    /// Index over all `IF_curr_exp` neurons, in population declaration order.
    pub neuron: u32,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPacket {
    pub tick: u64,
    pub packet: SpinnPacket,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Recordings {
    pub population_names: Vec<String>,
    pub raster: Vec<RasterRow>,
    pub membrane: Vec<MembraneRow>,
    pub output: Vec<OutputPacket>,
}

impl Recordings {
    pub fn spike_count(&self, population: &str) -> usize {
        match self.population_names.iter().position(|n| n == population) {
            Some(idx) => self.raster.iter().filter(|r| r.population == idx).count(),
            None => 0,
        }
    }

    pub fn spike_ticks(&self, population: &str) -> Vec<u64> {
        match self.population_names.iter().position(|n| n == population) {
            Some(idx) => self
                .raster
                .iter()
                .filter(|r| r.population == idx)
                .map(|r| r.tick)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn raster_csv(&self) -> String {
        let mut out = String::from("tick,population,neuron\n");
        for row in &self.raster {
            out.push_str(&format!(
                "{},{},{}\n",
                row.tick, self.population_names[row.population], row.neuron
            ));
        }
        out
    }

    pub fn membrane_csv(&self) -> String {
        let mut out = String::from("tick,neuron,v\n");
        for row in &self.membrane {
            out.push_str(&format!("{},{},{:.6}\n", row.tick, row.neuron, row.v));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Target {
    neuron: usize,
    receptor: Receptor,
    weight: f64,
    delay_steps: u64,
}

#[derive(Debug, Clone)]
struct LifPopulation {
    index: usize,
    kernel: LifKernel,
    first_neuron: usize,
    size: usize,
}

/// A running network instance.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    ticks_per_step: u64,
    lif: Vec<LifPopulation>,
    states: Vec<LifState>,
    /// Outgoing synapses per (population, neuron), keyed by population index.
    fanout: Vec<Vec<Vec<Target>>>,
    inputs: BTreeMap<u32, (usize, u32)>,
    live_keys: BTreeMap<usize, u32>,
    /// Weights by the step in which they first act.
    pending: BTreeMap<u64, Vec<(usize, SynapticInput)>>,
    next_step: u64,
    unknown_keys: u64,
    recordings: Recordings,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, NetworkError> {
        config.validate()?;
        let ticks_per_step = config.ticks_per_step()?;
        let dt_ms = config.dt_us as f64 / 1000.0;

        let mut lif = Vec::new();
        let mut first_of = vec![usize::MAX; config.populations.len()];
        let mut total = 0usize;
        for (index, pop) in config.populations.iter().enumerate() {
            if let PopulationKind::IfCurrExp(params) = pop.kind {
                first_of[index] = total;
                lif.push(LifPopulation {
                    index,
                    kernel: LifKernel::new(params, config.dt_us)?,
                    first_neuron: total,
                    size: pop.size as usize,
                });
                total += pop.size as usize;
            }
        }
        let states = lif
            .iter()
            .flat_map(|p| std::iter::repeat_n(LifState::at_rest(&p.kernel.params), p.size))
            .collect();

        let mut fanout: Vec<Vec<Vec<Target>>> = config
            .populations
            .iter()
            .map(|p| vec![Vec::new(); p.size as usize])
            .collect();
        for proj in &config.projections {
            let src = config.population_index(&proj.source)?;
            let dst = config.population_index(&proj.target)?;
            let delay_steps = ((proj.delay_ms / dt_ms) + 0.5).floor().max(1.0) as u64;
            let dst_size = config.populations[dst].size as usize;
            for (i, targets) in fanout[src].iter_mut().enumerate() {
                let mut push = |j: usize| {
                    targets.push(Target {
                        neuron: first_of[dst] + j,
                        receptor: proj.receptor,
                        weight: proj.weight,
                        delay_steps,
                    })
                };
                match proj.connector {
                    Connector::OneToOne => push(i),
                    Connector::AllToAll => (0..dst_size).for_each(push),
                }
            }
        }

        let mut inputs = BTreeMap::new();
        for route in &config.inputs {
            inputs.insert(
                route.key,
                (config.population_index(&route.population)?, route.neuron),
            );
        }
        let mut live_keys = BTreeMap::new();
        for out in &config.live_output {
            let first = first_of[config.population_index(&out.population)?];
            for (&neuron, &key) in &out.keys {
                live_keys.insert(first + neuron as usize, key);
            }
        }

        let recordings = Recordings {
            population_names: config.populations.iter().map(|p| p.name.clone()).collect(),
            ..Recordings::default()
        };
        Ok(Self {
            config,
            ticks_per_step,
            lif,
            states,
            fanout,
            inputs,
            live_keys,
            pending: BTreeMap::new(),
            next_step: 0,
            unknown_keys: 0,
            recordings,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn ticks_per_step(&self) -> u64 {
        self.ticks_per_step
    }

    /// Tick at which the next neural step runs.
    pub fn next_step_tick(&self) -> u64 {
        self.next_step * self.ticks_per_step
    }

    pub fn unknown_keys(&self) -> u64 {
        self.unknown_keys
    }

    pub fn neuron_state(&self, neuron: usize) -> Option<&LifState> {
        self.states.get(neuron)
    }

    pub fn recordings(&self) -> &Recordings {
        &self.recordings
    }

    pub fn into_recordings(self) -> Recordings {
        self.recordings
    }

    /// Routes a received packet to its external neuron and schedules the
    /// resulting synaptic events. Unknown keys are counted and dropped.
    pub fn deliver_packet(&mut self, packet: &SpinnPacket, at: u64) -> Result<(), NetworkError> {
        let Some(&(population, neuron)) = self.inputs.get(&packet.key) else {
            self.unknown_keys += 1;
            return Err(NetworkError::UnknownKey(packet.key));
        };
        self.recordings.raster.push(RasterRow {
            tick: at,
            population,
            neuron,
        });
        // First step boundary at or after arrival; never one already run.
        let boundary = at.div_ceil(self.ticks_per_step).max(self.next_step);
        self.schedule_fanout(population, neuron as usize, boundary);
        Ok(())
    }

    fn schedule_fanout(&mut self, population: usize, neuron: usize, boundary: u64) {
        for target in &self.fanout[population][neuron] {
            let input = match target.receptor {
                Receptor::Excitatory => SynapticInput::excitatory(target.weight),
                Receptor::Inhibitory => SynapticInput {
                    excitatory: 0.0,
                    inhibitory: target.weight,
                },
            };
            self.pending
                .entry(boundary + target.delay_steps)
                .or_default()
                .push((target.neuron, input));
        }
    }

    /// Runs the next neural step. `now` must be its tick.
    pub fn step(&mut self, now: u64) -> Vec<OutputPacket> {
        assert_eq!(now, self.next_step_tick(), "network stepped off its grid");
        let step = self.next_step;
        let mut fired = Vec::new();
        for pop in &self.lif {
            for local in 0..pop.size {
                let neuron = pop.first_neuron + local;
                let state = &mut self.states[neuron];
                if state.advance(&pop.kernel) {
                    fired.push((pop.index, local, neuron));
                }
                if self.config.record_membrane {
                    self.recordings.membrane.push(MembraneRow {
                        tick: now,
                        neuron: neuron as u32,
                        v: state.v,
                    });
                }
            }
        }
        let mut out = Vec::new();
        for &(population, local, neuron) in &fired {
            self.recordings.raster.push(RasterRow {
                tick: now,
                population,
                neuron: local as u32,
            });
            self.schedule_fanout(population, local, step);
            if let Some(&key) = self.live_keys.get(&neuron) {
                let packet = OutputPacket {
                    tick: now,
                    packet: build_mc_packet(key, None),
                };
                self.recordings.output.push(packet);
                out.push(packet);
            }
        }
        if let Some(inputs) = self.pending.remove(&(step + 1)) {
            for (neuron, input) in inputs {
                self.states[neuron].inject(input);
            }
        }
        // Anything scheduled for a step that has already run is stale.
        while self
            .pending
            .first_key_value()
            .is_some_and(|(&s, _)| s <= step + 1)
        {
            self.pending.pop_first();
        }
        self.next_step += 1;
        out
    }

    /// Live-output packets emitted at or after `since`, in spike order.
    pub fn collect_live_output(&self, since: u64) -> Vec<SpinnPacket> {
        let start = self.recordings.output.partition_point(|p| p.tick < since);
        self.recordings.output[start..]
            .iter()
            .map(|p| p.packet)
            .collect()
    }

    /// Drives the network from tick `next_step_tick()` for `duration_ms`,
    /// delivering each stimulus before the step that shares its tick.
    pub fn run(&mut self, stimulus: &[Stimulus], duration_ms: u64) -> Result<(), NetworkError> {
        let dt_us = self.config.dt_us;
        if !(duration_ms * 1000).is_multiple_of(dt_us) {
            return Err(NetworkError::RaggedDuration { duration_ms, dt_us });
        }
        let steps = duration_ms * 1000 / dt_us;
        let start = self.next_step_tick();
        let end = start + steps * self.ticks_per_step;
        let mut events: Vec<(u64, u32)> = stimulus
            .iter()
            .flat_map(|s| s.train.ticks().iter().map(move |&t| (t, s.key)))
            .filter(|&(t, _)| t >= start && t < end)
            .collect();
        events.sort_unstable();
        let mut events = events.into_iter().peekable();
        for _ in 0..steps {
            let now = self.next_step_tick();
            while let Some((t, key)) = events.next_if(|&(t, _)| t <= now) {
                // Unknown keys are counted inside deliver_packet.
                let _ = self.deliver_packet(&build_mc_packet(key, None), t);
            }
            self.step(now);
        }
        Ok(())
    }
}

/// A spike train arriving on one input key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub key: u32,
    pub train: SpikeTrain,
}

/// Builds a fresh network, runs it, and returns what it recorded.
pub fn run_network(
    config: NetworkConfig,
    stimulus: &[Stimulus],
    duration_ms: u64,
) -> Result<Recordings, NetworkError> {
    let mut net = Network::new(config)?;
    net.run(stimulus, duration_ms)?;
    Ok(net.into_recordings())
}
