use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use tafs_core::affordseg::segment;
use tafs_core::bench::fixture::synthetic_cloud;
use tafs_core::bench::metrics::{evaluate, MetricParams};
use tafs_core::cloudstore::{icp_register, kabsch, nearest_brute_force, nearest_neighbors, IcpParams};
use tafs_core::geometry::apply_transform;
use tafs_core::model::{default_bundle, ModelDims};
use tafs_core::vlm::{encode_tokens, Tokenizer};
use tafs_core::RigidTransform;

fn points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut r = Xoshiro256StarStar::seed_from_u64(seed);
    (0..n)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect()
}

fn knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn");
    for n in [256, 2048, 16384] {
        let reference = points(n, 1);
        let queries = points(n, 2);
        g.bench_with_input(BenchmarkId::new("dispatch", n), &n, |b, _| {
            b.iter(|| nearest_neighbors(black_box(&queries), black_box(&reference)))
        });
        if n <= 2048 {
            g.bench_with_input(BenchmarkId::new("brute_force", n), &n, |b, _| {
                b.iter(|| nearest_brute_force(black_box(&queries), black_box(&reference)))
            });
        }
    }
    g.finish();
}

fn registration(c: &mut Criterion) {
    let src = points(1000, 3);
    let truth = RigidTransform::from_axis_angle([0.2, 1.0, 0.1], 0.3).with_translation([0.1, -0.2, 0.05]);
    let dst: Vec<[f64; 3]> = src.iter().map(|p| truth.apply_point(p)).collect();
    c.bench_function("kabsch/1000", |b| b.iter(|| kabsch(black_box(&src), black_box(&dst)).unwrap()));

    let mut g = c.benchmark_group("icp");
    for n in [512, 2048] {
        let target = synthetic_cloud("chair", n, 4);
        let source = apply_transform(&target, &truth.inverse());
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| icp_register(black_box(&source), black_box(&target), &IcpParams::default()).unwrap())
        });
    }
    g.finish();
}

fn segmentation(c: &mut Criterion) {
    let tok = Tokenizer::from_phrases(["sit on the sofa"]);
    let w = default_bundle(
        &ModelDims {
            vocab_size: tok.len(),
            ..ModelDims::default()
        },
        7,
    )
    .unwrap();
    let text = encode_tokens(&["sit".into(), "sofa".into()], &tok, &w).unwrap();
    let mut g = c.benchmark_group("segment");
    g.sample_size(20);
    for n in [256, 2048] {
        let cloud = synthetic_cloud("sofa", n, 5);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| segment(black_box(&cloud), &text, "sit", &w).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let mut r = Xoshiro256StarStar::seed_from_u64(6);
    let n = 10_000;
    let pred: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let gt: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let params = MetricParams::default();
    c.bench_function("metrics/evaluate_10000", |b| {
        b.iter(|| evaluate(black_box(&pred), black_box(&gt), &params).unwrap())
    });
}

criterion_group!(benches, knn, registration, segmentation, metrics);
criterion_main!(benches);
