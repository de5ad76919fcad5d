//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinn_gateway::aer::{build_mc_packet, parse_packet, AerError};
use spinn_gateway::config::{ExperimentConfig, ScheduleEntry};
use spinn_gateway::experiment::run_experiment;
use spinn_gateway::link::{
    deframe_symbols, frame_packet, link_transfer, transfer_budget, AckPolicy, LinkConfig,
};
use spinn_gateway::network::{run_network, NetworkConfig, Stimulus};
use spinn_gateway::rate::{
    frequency_to_period, generate_spike_train, period_to_frequency, period_to_value,
    value_to_frequency, value_to_period, RateConfig, MAX_FREQUENCY_MHZ,
};
use spinn_gateway::sweep::{closed_loop_sweep, fidelity_sweep, network_sweep};

const SWEEP_MHZ: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
const SWEEP_MS: u64 = 10_000;
/// 2 ms at the 1 MHz tick.
const MAX_LATENCY_TICKS: u64 = 2_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let out = run_experiment(ExperimentConfig::default()).expect("default experiment runs");
    let elapsed = started.elapsed().as_secs_f64();
    let spikes = out.recordings.spike_count("set_value");
    let counter = out.summary.counters.get("6").copied().unwrap_or(0);
    outcome(
        spikes == 54 && counter == 54 && elapsed < 5.0,
        format!("set_value spikes {spikes}, counter[6] {counter} (want 54, 54); {elapsed:.3} s wall (< 5 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for point in network_sweep(&SWEEP_MHZ, SWEEP_MS) {
        let p = point.expect("sweep point runs");
        pass &= p.count_difference() <= 1;
        parts.push(format!(
            "{} Hz {}->{}",
            p.frequency_mhz / 1000,
            p.input_spikes,
            p.output_spikes
        ));
    }
    let over_cap = ExperimentConfig::parse("[schedule]\n0 = 1500000\n");
    let rejected = over_cap
        .as_ref()
        .is_err_and(|e| e.to_string().contains("1 kHz"));
    pass &= rejected;
    outcome(
        pass,
        format!(
            "in->out over 10 s: {} (each +-1); 1.5 kHz rejected at validation: {rejected}",
            parts.join(", ")
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut worst_network = 0;
    for point in network_sweep(&SWEEP_MHZ, SWEEP_MS) {
        let p = point.expect("sweep point runs");
        pass &= p.unmatched_outputs == 0;
        worst_network = worst_network.max(p.max_latency.unwrap_or(0));
    }
    let mut worst_loop = 0;
    for point in closed_loop_sweep(&SWEEP_MHZ, SWEEP_MS) {
        let p = point.expect("closed-loop point runs");
        pass &= p.spikes.unmatched_outputs == 0;
        worst_loop = worst_loop.max(p.spikes.max_latency.unwrap_or(0));
    }
    pass &= worst_network <= MAX_LATENCY_TICKS && worst_loop <= MAX_LATENCY_TICKS;
    outcome(
        pass,
        format!(
            "max input->output latency: network {} ms, closed loop (gateway TX -> spike) {} ms (<= 2 ms)",
            worst_network as f64 / 1000.0,
            worst_loop as f64 / 1000.0
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut max_v = f64::MIN;
    let default = run_experiment(ExperimentConfig::default()).expect("default experiment runs");
    for m in &default.recordings.membrane {
        max_v = max_v.max(m.v);
    }
    for &f in &SWEEP_MHZ {
        let period = frequency_to_period(f, 1_000_000).unwrap();
        let train = generate_spike_train(period, 0, SWEEP_MS * 1000).unwrap();
        let rec = run_network(
            NetworkConfig::loopback_experiment(),
            &[Stimulus { key: 0, train }],
            SWEEP_MS,
        )
        .unwrap();
        for m in &rec.membrane {
            max_v = max_v.max(m.v);
        }
    }
    let silent = run_network(NetworkConfig::loopback_experiment(), &[], SWEEP_MS).unwrap();
    let flat = !silent.membrane.is_empty() && silent.membrane.iter().all(|m| m.v == -65.0);
    outcome(
        max_v < -50.0 && flat,
        format!("highest recorded v {max_v:.6} mV (< -50); silent run flat at -65 mV: {flat}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round_trips = 0;
    for _ in 0..10_000 {
        let payload = rng.random_bool(0.5).then(|| rng.random());
        let packet = build_mc_packet(rng.random(), payload);
        if parse_packet(packet.to_word()) == Ok(packet) {
            round_trips += 1;
        }
    }
    let mut flips = 0;
    let mut caught = 0;
    for i in 0..200 {
        let payload = (i % 2 == 0).then(|| rng.random());
        let word = build_mc_packet(rng.random(), payload).to_word();
        for pos in 0..word.bit_len() {
            flips += 1;
            if parse_packet(word.with_bit_flipped(pos)) == Err(AerError::ParityError) {
                caught += 1;
            }
        }
    }
    outcome(
        round_trips == 10_000 && caught == flips,
        format!("round trips {round_trips}/10000; single-bit flips flagged {caught}/{flips} (200 packets, every position)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = 0;
    let mut lengths_ok = true;
    for _ in 0..10_000 {
        let payload = rng.random_bool(0.5).then(|| rng.random());
        let packet = build_mc_packet(rng.random(), payload);
        let symbols = frame_packet(&packet);
        lengths_ok &= symbols.len() == if payload.is_some() { 19 } else { 11 };
        if deframe_symbols(&symbols) == Ok(packet.to_word()) {
            ok += 1;
        }
    }
    let normal = LinkConfig::default();
    let short = [build_mc_packet(6, None)];
    let long = [build_mc_packet(6, Some(0xDEAD_BEEF))];
    let s_short = link_transfer(&short, normal, transfer_budget(&short, normal)).unwrap();
    let s_long = link_transfer(&long, normal, transfer_budget(&long, normal)).unwrap();
    let never = LinkConfig {
        ack_policy: AckPolicy::NeverAck,
        ..normal
    };
    let stalled = link_transfer(&short, never, transfer_budget(&short, never)).unwrap();
    let stall_index = stalled.stall.map(|s| s.symbol_index);
    let pass = ok == 10_000
        && lengths_ok
        && s_short.symbols_sent == 11
        && s_long.symbols_sent == 19
        && s_short.delivered.len() == 1
        && s_long.delivered.len() == 1
        && stalled.delivered.is_empty()
        && stall_index == Some(1);
    outcome(
        pass,
        format!(
            "frame round trips {ok}/10000; symbols per packet 40-bit {} / 72-bit {}; never-ack: {}",
            s_short.symbols_sent,
            s_long.symbols_sent,
            stalled.summary()
        ),
    )
}

fn rational(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn criterion_7() -> Outcome {
    let cfg = RateConfig {
        tick_rate: 1_000_000,
        f_min_mhz: 1_000,
        f_max_mhz: 1_000_000,
        v_min: 0,
        v_max: 255,
    };
    let half = BigRational::new(1.into(), 2.into());
    let mut oracle_matches = 0;
    let mut worst_round_trip = 0;
    let mut max_freq = 0;
    for v in 0..=255u64 {
        let f = rational(cfg.f_min_mhz)
            + rational(v) * rational(cfg.f_max_mhz - cfg.f_min_mhz) / rational(255);
        let expected = ((rational(1000 * cfg.tick_rate) / f) + &half)
            .floor()
            .to_integer()
            .to_u64()
            .unwrap();
        let period = value_to_period(v as i64, &cfg).unwrap();
        if period == expected {
            oracle_matches += 1;
        }
        let back = period_to_value(period, &cfg).unwrap();
        worst_round_trip = worst_round_trip.max((back - v as i64).unsigned_abs());
        max_freq = max_freq
            .max(value_to_frequency(v as i64, &cfg).unwrap())
            .max(period_to_frequency(period, cfg.tick_rate).unwrap());
    }
    outcome(
        oracle_matches == 256 && worst_round_trip <= 1 && max_freq <= MAX_FREQUENCY_MHZ,
        format!(
            "8-bit sweep: oracle matches {oracle_matches}/256; worst value->period->value error {worst_round_trip} LSB (<= 1); top frequency {max_freq} mHz (<= {MAX_FREQUENCY_MHZ})"
        ),
    )
}

fn criterion_8() -> Outcome {
    let rate = RateConfig::default();
    let mut worst = 0;
    let mut all_recovered = true;
    let mut held_enough = true;
    for point in fidelity_sweep(rate, 3) {
        let p = point.expect("fidelity point runs");
        held_enough &= p.held_ms * 1000 >= 3 * p.period;
        match p.error() {
            Some(e) => worst = worst.max(e),
            None => all_recovered = false,
        }
    }
    outcome(
        all_recovered && held_enough && worst <= 1,
        format!(
            "values {}..={} over {}-{} mHz, each held >= 3 periods: worst recovery error {worst} LSB (<= 1), all recovered: {all_recovered}",
            rate.v_min, rate.v_max, rate.f_min_mhz, rate.f_max_mhz
        ),
    )
}

fn criterion_9() -> Outcome {
    let configs = [
        ExperimentConfig::default(),
        ExperimentConfig::with_schedule(
            vec![
                ScheduleEntry {
                    start_ms: 0,
                    frequency_mhz: 1_000_000,
                },
                ScheduleEntry {
                    start_ms: 400,
                    frequency_mhz: 37_000,
                },
            ],
            1_000,
        ),
    ];
    let mut identical = 0;
    let mut compared = 0;
    for cfg in configs {
        let a = run_experiment(cfg.clone()).unwrap().artifacts();
        let b = run_experiment(cfg).unwrap().artifacts();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            compared += 1;
            if x == y {
                identical += 1;
            }
        }
    }
    outcome(
        identical == compared,
        format!("{identical}/{compared} artifact files byte-identical across repeated runs"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("experiment reproduction", criterion_1),
        ("1:1 relation sweep", criterion_2),
        ("spike latency", criterion_3),
        ("membrane sanity", criterion_4),
        ("packet codec", criterion_5),
        ("link layer", criterion_6),
        ("rate codec", criterion_7),
        ("end-to-end fidelity", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {} {} {name}: {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
