//! Per-tensor squeezing of a synthetic checkpoint: a plain sequential loop
//! against the order-preserving parallel driver, for each backend.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lora_squeeze::checkpoint::{squeeze_checkpoint, tensor_seed, AdapterCheckpoint};
use lora_squeeze::{gaussian_matrix, squeeze, CoreSvd, LoraFactorPair, RsvdConfig, SqueezeMethod};

fn checkpoint(layers: usize, dim: usize, rank: usize) -> AdapterCheckpoint {
    let tensors = (0..layers)
        .map(|i| {
            let seed = 2 * i as u64;
            LoraFactorPair::new(
                format!("layers.{i}.q_proj"),
                gaussian_matrix(dim, rank, seed).unwrap(),
                gaussian_matrix(rank, dim, seed + 1).unwrap(),
            )
            .unwrap()
        })
        .collect();
    AdapterCheckpoint::new(tensors).unwrap()
}

fn sequential(ckpt: &AdapterCheckpoint, target: usize, method: &SqueezeMethod, seed: u64) {
    for pair in &ckpt.tensors {
        let m = method.with_seed(tensor_seed(seed, &pair.name));
        black_box(squeeze(pair, target, &m).unwrap());
    }
}

fn bench_checkpoint(c: &mut Criterion) {
    let ckpt = checkpoint(8, 256, 32);
    let methods = [
        ("efficient", SqueezeMethod::Efficient(CoreSvd::Full)),
        ("rsvd", SqueezeMethod::Rsvd(RsvdConfig::default())),
        ("full", SqueezeMethod::FullSvd),
    ];
    let mut group = c.benchmark_group("squeeze_checkpoint_8x256_r32_to_8");
    group.sample_size(10);
    for (label, method) in &methods {
        group.bench_with_input(BenchmarkId::new("sequential", label), method, |b, m| {
            b.iter(|| sequential(&ckpt, 8, m, 42))
        });
        group.bench_with_input(BenchmarkId::new("parallel", label), method, |b, m| {
            b.iter(|| black_box(squeeze_checkpoint(&ckpt, 8, m, 42).unwrap()))
        });
    }
    group.finish();
}

fn bench_efficient_large(c: &mut Criterion) {
    let pair = LoraFactorPair::new(
        "wide",
        gaussian_matrix(2048, 64, 1).unwrap(),
        gaussian_matrix(64, 2048, 2).unwrap(),
    )
    .unwrap();
    let mut group = c.benchmark_group("single_tensor_2048_r64_to_8");
    group.sample_size(10);
    group.bench_function("efficient", |b| {
        b.iter(|| black_box(squeeze(&pair, 8, &SqueezeMethod::Efficient(CoreSvd::Full)).unwrap()))
    });
    group.bench_function("rsvd", |b| {
        b.iter(|| {
            black_box(squeeze(&pair, 8, &SqueezeMethod::Rsvd(RsvdConfig::default())).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, bench_checkpoint, bench_efficient_large);
criterion_main!(benches);
