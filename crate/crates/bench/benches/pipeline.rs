use std::hint::black_box;
use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use entimpute::classify::{train_lr, train_nb, LrParams};
use entimpute::gazetteer;
use entimpute::geocode::{geocode_batch, shard, MockProvider, BatchConfig, GeocodeRequest};
use entimpute::locimpute::{impute_locations, Stages};
use entimpute::segmenter::segment;
use entimpute::spatial::{ripley_k_with, PairCounter, PointSet, Rect};
use entimpute::synth::{labeled_points, synth, SynthConfig};
use entimpute::vectorizer::{hash_vector, to_labeled, DEFAULT_DIM};
use entimpute::ApiKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(records: usize) -> entimpute::synth::Synthetic {
    synth(&SynthConfig {
        records,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus")
}

fn text(c: &mut Criterion) {
    let s = corpus(2000);
    let names: Vec<&str> = s.records.iter().filter_map(|r| r.name.as_deref()).collect();
    let mut g = c.benchmark_group("text");
    g.throughput(Throughput::Elements(names.len() as u64));
    g.bench_function("segment_names", |b| {
        b.iter(|| names.iter().map(|n| segment(n, &s.world.lexicon).len()).sum::<usize>())
    });
    let words: Vec<Vec<String>> = names
        .iter()
        .map(|n| segment(n, &s.world.lexicon).into_iter().map(|t| t.surface).collect())
        .collect();
    g.bench_function("hash_vectors", |b| {
        b.iter(|| words.iter().map(|w| hash_vector(w, DEFAULT_DIM).nnz()).sum::<usize>())
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let points = labeled_points(200_000, DEFAULT_DIM, 40, 3);
    let mut g = c.benchmark_group("train_nb");
    g.sample_size(10);
    g.throughput(Throughput::Elements(points.len() as u64));
    for workers in [1, 2, 4] {
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| train_nb(black_box(&points), 1.0, w).unwrap())
        });
    }
    g.finish();

    let s = corpus(3000);
    let labeled: Vec<_> = s
        .records
        .iter()
        .filter_map(|r| to_labeled(r, &s.world.lexicon, DEFAULT_DIM))
        .collect();
    let mut g = c.benchmark_group("train_lr");
    g.sample_size(10);
    g.bench_function("synthetic_3000", |b| {
        b.iter(|| train_lr(&labeled, LrParams::default(), 1).unwrap())
    });
    g.finish();
}

fn location(c: &mut Criterion) {
    let s = corpus(5000);
    let tree = gazetteer::build(s.world.entries.clone());
    let mut g = c.benchmark_group("impute_locations");
    g.sample_size(10);
    g.throughput(Throughput::Elements(s.records.len() as u64));
    g.bench_function("synthetic_5000", |b| {
        b.iter_batched(
            || s.records.clone(),
            |mut records| impute_locations(&mut records, &tree, &s.world.lexicon, Stages::ALL, 1),
            criterion::BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn spatial(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut g = c.benchmark_group("ripley_k");
    g.sample_size(10);
    for n in [2_000usize, 20_000] {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let set = PointSet::new(pts, Rect::unit()).unwrap();
        let radii = [0.01, 0.02, 0.05];
        g.bench_with_input(BenchmarkId::new("grid", n), &set, |b, set| {
            b.iter(|| ripley_k_with(set, &radii, PairCounter::Grid).unwrap())
        });
        if n <= 2_000 {
            g.bench_with_input(BenchmarkId::new("brute_force", n), &set, |b, set| {
                b.iter(|| ripley_k_with(set, &radii, PairCounter::BruteForce).unwrap())
            });
        }
    }
    g.finish();
}

fn geocoding(c: &mut Criterion) {
    let s = corpus(4000);
    let requests: Vec<GeocodeRequest> = s
        .records
        .iter()
        .filter_map(|r| {
            r.address.clone().map(|address| GeocodeRequest {
                id: r.id.clone(),
                address,
            })
        })
        .collect();
    let provider = MockProvider::new();
    let config = BatchConfig {
        rate: None,
        retries: 0,
        backoff: Duration::ZERO,
        ..BatchConfig::default()
    };
    let mut g = c.benchmark_group("geocode_mock");
    g.throughput(Throughput::Elements(requests.len() as u64));
    for n_keys in [1, 4] {
        g.bench_with_input(BenchmarkId::from_parameter(n_keys), &n_keys, |b, &k| {
            b.iter(|| {
                let keys: Vec<Arc<ApiKey>> = (0..k).map(|i| Arc::new(ApiKey::new(format!("k{i}"), u32::MAX))).collect();
                let shards = shard(&requests, &keys).unwrap();
                geocode_batch(&shards, &provider, &config).len()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, text, training, location, spatial, geocoding);
criterion_main!(benches);
