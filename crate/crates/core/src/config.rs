//! Experiment configuration: an INI-style text file with `[section]` headers
//! and `key = value` lines. `#` and `;` start comments.
//!
//! Every diagnostic names the line and the `section.key` it concerns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aer::RoutingTable;
use crate::gateway::GatewayConfig;
use crate::link::{AckPolicy, LinkConfig};
use crate::network::{
    Connector, InputRoute, LiveOutput, NetworkConfig, PopulationKind, PopulationSpec,
    ProjectionSpec, Receptor,
};
use crate::neuron::LifParams;
use crate::rate::{RateConfig, MAX_FREQUENCY_MHZ};

/// The shipped experiment: 1 Hz from 0 s, 10 Hz from 5 s, 10 s long.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/experiment.ini");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}, field {}: {}", self.field, self.message),
            None => write!(f, "field {}: {}", self.field, self.message),
        }
    }
}

impl ConfigError {
    fn at(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<IniEntry>,
}

impl IniSection {
    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    pub fn get(&self, key: &str) -> Option<&IniEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(entry) = self.get(key) else {
            return Ok(None);
        };
        parse_value(&entry.value)
            .map(Some)
            .map_err(|e| ConfigError::at(entry.line, self.field(key), e))
    }

    fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| ConfigError::at(self.line, self.field(key), "required key is missing"))
    }

    fn only_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for entry in &self.entries {
            if !allowed.contains(&entry.key.as_str()) {
                return Err(ConfigError::at(
                    entry.line,
                    self.field(&entry.key),
                    format!("unknown key (expected one of: {})", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(text: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    text.parse::<T>()
        .map_err(|e| format!("cannot parse {text:?}: {e}"))
}

/// Unsigned integer written in decimal or with a `0x` prefix.
fn parse_u32(text: &str) -> Result<u32, String> {
    let parsed = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => text.parse(),
    };
    parsed.map_err(|e| format!("cannot parse {text:?}: {e}"))
}

/// Sections in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ini {
    pub sections: Vec<IniSection>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw
                .split_once(['#', ';'])
                .map_or(raw, |(before, _)| before)
                .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ConfigError::at(line, content, "section header lacks ']'"));
                };
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(ConfigError::at(line, "[]", "empty section name"));
                }
                if !seen.insert(name.clone()) {
                    return Err(ConfigError::at(line, name, "section appears twice"));
                }
                ini.sections.push(IniSection {
                    name,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(line, content, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(section) = ini.sections.last_mut() else {
                return Err(ConfigError::at(line, key, "key outside any section"));
            };
            if key.is_empty() {
                return Err(ConfigError::at(line, section.field(""), "empty key"));
            }
            if section.get(key).is_some() {
                return Err(ConfigError::at(
                    line,
                    section.field(key),
                    "key appears twice",
                ));
            }
            section.entries.push(IniEntry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&IniSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a IniSection)> {
        self.sections
            .iter()
            .filter_map(move |s| Some((s.name.strip_prefix(prefix)?, s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_ms: u64,
    pub frequency_mhz: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub start_ms: u64,
    pub value: i64,
}

/// What drives the gateway's rate generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Drive {
    /// No input; the generator stays idle.
    Idle,
    /// Frequencies set directly, in mHz.
    Schedule(Vec<ScheduleEntry>),
    /// Sensor values converted through the rate config.
    Samples(Vec<SampleEntry>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub duration_ms: u64,
    pub realtime: bool,
    pub wire_trace: bool,
    pub drive: Drive,
    pub gateway: GatewayConfig,
    pub network: NetworkConfig,
    pub link: LinkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse(DEFAULT_CONFIG).expect("shipped config is valid")
    }
}

const SECTIONS: &[&str] = &[
    "experiment",
    "schedule",
    "samples",
    "rate",
    "network",
    "input",
    "routing.forward",
    "routing.reverse",
    "gateway",
    "link",
];
const SECTION_PREFIXES: &[&str] = &["population.", "projection.", "live_output."];

impl ExperimentConfig {
    /// Schedule-driven loopback experiment with the given rate steps.
    pub fn with_schedule(schedule: Vec<ScheduleEntry>, duration_ms: u64) -> Self {
        Self {
            duration_ms,
            drive: Drive::Schedule(schedule),
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::parse(text)?;
        for section in &ini.sections {
            let known = SECTIONS.contains(&section.name.as_str())
                || SECTION_PREFIXES.iter().any(|p| {
                    section
                        .name
                        .strip_prefix(p)
                        .is_some_and(|rest| !rest.is_empty())
                });
            if !known {
                return Err(ConfigError::at(
                    section.line,
                    &section.name,
                    "unknown section",
                ));
            }
        }
        let empty = IniSection {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        };
        let section = |name: &str| ini.section(name).unwrap_or(&empty);

        let exp = section("experiment");
        exp.only_keys(&["duration_ms", "realtime", "time_scale_factor", "wire_trace"])?;
        let duration_ms = exp.parse_or("duration_ms", 10_000u64)?;
        let realtime = exp.parse_or("realtime", false)?;
        let wire_trace = exp.parse_or("wire_trace", true)?;
        let time_scale_factor = exp.parse_or("time_scale_factor", 1.0f64)?;

        let drive = parse_drive(&ini)?;
        let rate = parse_rate(section("rate"))?;

        let mut network = parse_network(&ini)?;
        network.time_scale_factor = time_scale_factor;
        network.tick_rate = rate.tick_rate;

        let gw = section("gateway");
        gw.only_keys(&["tx_address", "detector_window"])?;
        let routing = parse_routing(&ini)?;
        let gateway = GatewayConfig {
            rate,
            routing,
            tx_address: match gw.get("tx_address") {
                Some(e) => parse_u32(&e.value)
                    .map_err(|m| ConfigError::at(e.line, gw.field("tx_address"), m))?,
                None => 0,
            },
            detector_window: gw.parse_or("detector_window", 1usize)?,
        };

        let link_section = section("link");
        link_section.only_keys(&["ack_policy", "ack_timeout"])?;
        let link = LinkConfig {
            ack_policy: link_section.parse_or("ack_policy", AckPolicy::Normal)?,
            ack_timeout: link_section.parse_or("ack_timeout", LinkConfig::default().ack_timeout)?,
        };

        let cfg = Self {
            duration_ms,
            realtime,
            wire_trace,
            drive,
            gateway,
            network,
            link,
        };
        cfg.validate_with(&ini)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with(&Ini::default())
    }

    fn validate_with(&self, ini: &Ini) -> Result<(), ConfigError> {
        let line_of = |section: &str, key: &str| {
            ini.section(section)
                .and_then(|s| s.get(key).map(|e| e.line).or(Some(s.line)))
        };
        let err = |section: &str, key: &str, message: String| ConfigError {
            line: line_of(section, key),
            field: if key.is_empty() {
                section.to_string()
            } else {
                format!("{section}.{key}")
            },
            message,
        };

        self.gateway
            .rate
            .validate()
            .map_err(|e| err("rate", "", e.to_string()))?;
        self.network
            .validate()
            .map_err(|e| err("network", "", e.to_string()))?;
        if self.gateway.detector_window == 0 {
            return Err(err(
                "gateway",
                "detector_window",
                "must be at least 1".into(),
            ));
        }
        if self.link.ack_timeout == 0 {
            return Err(err("link", "ack_timeout", "must be at least 1 tick".into()));
        }
        if !(self.duration_ms * 1000).is_multiple_of(self.network.dt_us) {
            return Err(err(
                "experiment",
                "duration_ms",
                format!(
                    "{} ms is not a whole number of {} us steps",
                    self.duration_ms, self.network.dt_us
                ),
            ));
        }

        let starts: Vec<(u64, String)> = match &self.drive {
            Drive::Idle => Vec::new(),
            Drive::Schedule(entries) => {
                for e in entries {
                    let key = e.start_ms.to_string();
                    if e.frequency_mhz == 0 {
                        return Err(err("schedule", &key, "frequency must be positive".into()));
                    }
                    if e.frequency_mhz > MAX_FREQUENCY_MHZ {
                        return Err(err(
                            "schedule",
                            &key,
                            format!(
                                "{} mHz exceeds the 1 kHz cap ({MAX_FREQUENCY_MHZ} mHz)",
                                e.frequency_mhz
                            ),
                        ));
                    }
                }
                entries
                    .iter()
                    .map(|e| (e.start_ms, "schedule".into()))
                    .collect()
            }
            Drive::Samples(entries) => {
                let rate = &self.gateway.rate;
                for e in entries {
                    if e.value < rate.v_min || e.value > rate.v_max {
                        return Err(err(
                            "samples",
                            &e.start_ms.to_string(),
                            format!(
                                "value {} outside the rate range [{}, {}]",
                                e.value, rate.v_min, rate.v_max
                            ),
                        ));
                    }
                }
                entries
                    .iter()
                    .map(|e| (e.start_ms, "samples".into()))
                    .collect()
            }
        };
        if let Some((first, section)) = starts.first() {
            if *first != 0 {
                return Err(err(
                    section,
                    &first.to_string(),
                    "first entry must start at 0 ms".into(),
                ));
            }
        }
        for pair in starts.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(err(
                    &pair[1].1,
                    &pair[1].0.to_string(),
                    format!("start {} ms is not after {} ms", pair[1].0, pair[0].0),
                ));
            }
        }
        Ok(())
    }

    /// Ticks per millisecond of the virtual clock.
    pub fn ticks_per_ms(&self) -> u64 {
        self.gateway.rate.tick_rate / 1000
    }

    pub fn end_tick(&self) -> u64 {
        self.duration_ms * self.ticks_per_ms()
    }
}

fn parse_drive(ini: &Ini) -> Result<Drive, ConfigError> {
    let schedule = ini.section("schedule");
    let samples = ini.section("samples");
    if let (Some(_), Some(s)) = (schedule, samples) {
        return Err(ConfigError::at(
            s.line,
            "samples",
            "[schedule] and [samples] are mutually exclusive",
        ));
    }
    let start_of = |s: &IniSection, e: &IniEntry| -> Result<u64, ConfigError> {
        parse_value(&e.key)
            .map_err(|m| ConfigError::at(e.line, s.field(&e.key), format!("start time: {m}")))
    };
    if let Some(s) = schedule {
        let mut entries = Vec::new();
        for e in &s.entries {
            entries.push(ScheduleEntry {
                start_ms: start_of(s, e)?,
                frequency_mhz: parse_value(&e.value)
                    .map_err(|m| ConfigError::at(e.line, s.field(&e.key), m))?,
            });
        }
        return Ok(Drive::Schedule(entries));
    }
    if let Some(s) = samples {
        let mut entries = Vec::new();
        for e in &s.entries {
            entries.push(SampleEntry {
                start_ms: start_of(s, e)?,
                value: parse_value(&e.value)
                    .map_err(|m| ConfigError::at(e.line, s.field(&e.key), m))?,
            });
        }
        return Ok(Drive::Samples(entries));
    }
    Ok(Drive::Idle)
}

fn parse_rate(s: &IniSection) -> Result<RateConfig, ConfigError> {
    s.only_keys(&["tick_rate", "f_min_mhz", "f_max_mhz", "v_min", "v_max"])?;
    let d = RateConfig::default();
    let cfg = RateConfig {
        tick_rate: s.parse_or("tick_rate", d.tick_rate)?,
        f_min_mhz: s.parse_or("f_min_mhz", d.f_min_mhz)?,
        f_max_mhz: s.parse_or("f_max_mhz", d.f_max_mhz)?,
        v_min: s.parse_or("v_min", d.v_min)?,
        v_max: s.parse_or("v_max", d.v_max)?,
    };
    if !cfg.tick_rate.is_multiple_of(1000) {
        return Err(ConfigError::at(
            s.get("tick_rate").map_or(s.line, |e| e.line),
            s.field("tick_rate"),
            "must be a whole number of ticks per millisecond",
        ));
    }
    if cfg.f_max_mhz > MAX_FREQUENCY_MHZ {
        return Err(ConfigError::at(
            s.get("f_max_mhz").map_or(s.line, |e| e.line),
            s.field("f_max_mhz"),
            format!(
                "{} mHz exceeds the 1 kHz cap ({MAX_FREQUENCY_MHZ} mHz)",
                cfg.f_max_mhz
            ),
        ));
    }
    Ok(cfg)
}

const LIF_KEYS: &[&str] = &[
    "tau_m",
    "tau_syn_e",
    "tau_syn_i",
    "tau_refrac",
    "v_rest",
    "v_reset",
    "v_thresh",
    "cm",
    "i_offset",
];

fn parse_lif(s: &IniSection) -> Result<LifParams, ConfigError> {
    let d = LifParams::default();
    Ok(LifParams {
        tau_m: s.parse_or("tau_m", d.tau_m)?,
        tau_syn_e: s.parse_or("tau_syn_e", d.tau_syn_e)?,
        tau_syn_i: s.parse_or("tau_syn_i", d.tau_syn_i)?,
        tau_refrac: s.parse_or("tau_refrac", d.tau_refrac)?,
        v_rest: s.parse_or("v_rest", d.v_rest)?,
        v_reset: s.parse_or("v_reset", d.v_reset)?,
        v_thresh: s.parse_or("v_thresh", d.v_thresh)?,
        c_m: s.parse_or("cm", d.c_m)?,
        i_offset: s.parse_or("i_offset", d.i_offset)?,
    })
}

fn parse_network(ini: &Ini) -> Result<NetworkConfig, ConfigError> {
    let mut cfg = NetworkConfig::loopback_experiment();
    if let Some(s) = ini.section("network") {
        s.only_keys(&["dt_us", "record_membrane"])?;
        cfg.dt_us = s.parse_or("dt_us", cfg.dt_us)?;
        cfg.record_membrane = s.parse_or("record_membrane", cfg.record_membrane)?;
    }

    let populations: Vec<_> = ini.with_prefix("population.").collect();
    let projections: Vec<_> = ini.with_prefix("projection.").collect();
    let outputs: Vec<_> = ini.with_prefix("live_output.").collect();
    let input = ini.section("input");
    let custom = !populations.is_empty()
        || !projections.is_empty()
        || !outputs.is_empty()
        || input.is_some();
    if !custom {
        return Ok(cfg);
    }

    cfg.populations.clear();
    for (name, s) in populations {
        let kind = match s.require::<String>("kind")?.as_str() {
            "external" => {
                s.only_keys(&["kind", "size"])?;
                PopulationKind::External
            }
            "if_curr_exp" => {
                let mut allowed = vec!["kind", "size"];
                allowed.extend_from_slice(LIF_KEYS);
                s.only_keys(&allowed)?;
                PopulationKind::IfCurrExp(parse_lif(s)?)
            }
            other => {
                return Err(ConfigError::at(
                    s.get("kind").map_or(s.line, |e| e.line),
                    s.field("kind"),
                    format!("unknown population kind {other:?} (expected external or if_curr_exp)"),
                ))
            }
        };
        cfg.populations.push(PopulationSpec {
            name: name.to_string(),
            size: s.parse_or("size", 1u32)?,
            kind,
        });
    }

    cfg.projections.clear();
    for (_, s) in projections {
        s.only_keys(&[
            "source",
            "target",
            "weight",
            "delay_ms",
            "connector",
            "receptor",
        ])?;
        let connector = match s.parse_or("connector", "one_to_one".to_string())?.as_str() {
            "one_to_one" => Connector::OneToOne,
            "all_to_all" => Connector::AllToAll,
            other => {
                return Err(ConfigError::at(
                    s.get("connector").map_or(s.line, |e| e.line),
                    s.field("connector"),
                    format!("unknown connector {other:?} (expected one_to_one or all_to_all)"),
                ))
            }
        };
        let receptor = match s.parse_or("receptor", "excitatory".to_string())?.as_str() {
            "excitatory" => Receptor::Excitatory,
            "inhibitory" => Receptor::Inhibitory,
            other => {
                return Err(ConfigError::at(
                    s.get("receptor").map_or(s.line, |e| e.line),
                    s.field("receptor"),
                    format!("unknown receptor {other:?} (expected excitatory or inhibitory)"),
                ))
            }
        };
        cfg.projections.push(ProjectionSpec {
            source: s.require("source")?,
            target: s.require("target")?,
            weight: s.require("weight")?,
            delay_ms: s.parse_or("delay_ms", 0.0)?,
            connector,
            receptor,
        });
    }

    cfg.inputs.clear();
    if let Some(s) = input {
        for e in &s.entries {
            let field = s.field(&e.key);
            let key = parse_u32(&e.key).map_err(|m| ConfigError::at(e.line, &field, m))?;
            let Some((population, neuron)) = e.value.split_once(':') else {
                return Err(ConfigError::at(
                    e.line,
                    field,
                    "expected `population:neuron`",
                ));
            };
            cfg.inputs.push(InputRoute {
                key,
                population: population.trim().to_string(),
                neuron: parse_u32(neuron.trim()).map_err(|m| ConfigError::at(e.line, &field, m))?,
            });
        }
    }

    cfg.live_output.clear();
    for (population, s) in outputs {
        let mut keys = BTreeMap::new();
        for e in &s.entries {
            let field = s.field(&e.key);
            let neuron = parse_u32(&e.key).map_err(|m| ConfigError::at(e.line, &field, m))?;
            let key = parse_u32(&e.value).map_err(|m| ConfigError::at(e.line, &field, m))?;
            keys.insert(neuron, key);
        }
        cfg.live_output.push(LiveOutput {
            population: population.to_string(),
            keys,
        });
    }
    Ok(cfg)
}

fn parse_routing(ini: &Ini) -> Result<RoutingTable, ConfigError> {
    let forward = ini.section("routing.forward");
    let reverse = ini.section("routing.reverse");
    if forward.is_none() && reverse.is_none() {
        return Ok(GatewayConfig::loopback_experiment().routing);
    }
    let mut table = RoutingTable::new();
    for (s, is_forward) in [(forward, true), (reverse, false)] {
        let Some(s) = s else { continue };
        for e in &s.entries {
            let field = s.field(&e.key);
            let a = parse_u32(&e.key).map_err(|m| ConfigError::at(e.line, &field, m))?;
            let b = parse_u32(&e.value).map_err(|m| ConfigError::at(e.line, &field, m))?;
            let added = if is_forward {
                table.add_route(a, b)
            } else {
                table.add_reverse(a, b)
            };
            added.map_err(|err| ConfigError::at(e.line, &field, err.to_string()))?;
        }
    }
    Ok(table)
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
