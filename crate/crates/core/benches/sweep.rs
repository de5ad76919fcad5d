use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinn_gateway::aer::{build_mc_packet, decode_batch, encode_batch, parse_packet, SpinnPacket};
use spinn_gateway::par;
use spinn_gateway::rate::RateConfig;
use spinn_gateway::sweep::{
    closed_loop_sweep, closed_loop_sweep_sequential, fidelity_sweep, fidelity_sweep_sequential,
    network_sweep, network_sweep_sequential,
};

const FREQUENCIES_MHZ: [u64; 8] = [
    1_000, 5_000, 10_000, 50_000, 100_000, 250_000, 500_000, 1_000_000,
];

fn packets(n: usize) -> Vec<SpinnPacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let payload = rng.random_bool(0.5).then(|| rng.random());
            build_mc_packet(rng.random(), payload)
        })
        .collect()
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("network_sweep_2s");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| network_sweep(black_box(&FREQUENCIES_MHZ), 2_000))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| network_sweep_sequential(black_box(&FREQUENCIES_MHZ), 2_000))
    });
    group.finish();

    let mut group = c.benchmark_group("closed_loop_sweep_2s");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| closed_loop_sweep(black_box(&FREQUENCIES_MHZ), 2_000))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| closed_loop_sweep_sequential(black_box(&FREQUENCIES_MHZ), 2_000))
    });
    group.finish();

    let mut group = c.benchmark_group("fidelity_sweep");
    group.sample_size(10);
    let rate = RateConfig::default();
    group.bench_function("parallel", |b| {
        b.iter(|| fidelity_sweep(black_box(rate), 3))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| fidelity_sweep_sequential(black_box(rate), 3))
    });
    group.finish();
}

fn codec(c: &mut Criterion) {
    let mut group = c.benchmark_group("packet_codec");
    for n in [1_000usize, 100_000] {
        let input = packets(n);
        let words = encode_batch(&input);
        group.bench_with_input(BenchmarkId::new("encode_parallel", n), &input, |b, p| {
            b.iter(|| encode_batch(black_box(p)))
        });
        group.bench_with_input(BenchmarkId::new("encode_sequential", n), &input, |b, p| {
            b.iter(|| par::map_slice_sequential(black_box(p), SpinnPacket::to_word))
        });
        group.bench_with_input(BenchmarkId::new("decode_parallel", n), &words, |b, w| {
            b.iter(|| decode_batch(black_box(w)))
        });
        group.bench_with_input(BenchmarkId::new("decode_sequential", n), &words, |b, w| {
            b.iter(|| par::map_slice_sequential(black_box(w), |w| parse_packet(*w)))
        });
    }
    group.finish();
}

criterion_group!(benches, sweeps, codec);
criterion_main!(benches);
