//! Hot-path benchmarks: percentile encoding, table construction,
//! window assembly, the forward pass, and a training epoch.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use popseq::encoders::{encode_percentile, SinusoidTable};
use popseq::eval::{synth_generate, GenSpec};
use popseq::ingest::to_fixed_sequence;
use popseq::model::{build_inputs, forward, ModelConfig, ModelParams};
use popseq::numcore::{Adam, AdamConfig};
use popseq::popdyn::{FeatureCache, PopConfig, PopularityTable, TimeBucketing, WindowParams};
use popseq::rng::substream;
use popseq::train::{train_epoch, TrainConfig};

fn bench_dataset() -> popseq::ingest::InteractionDataset {
    synth_generate(
        &GenSpec {
            users: 300,
            items: 120,
            horizon: 24,
            events_per_user: (10, 30),
            ..GenSpec::default()
        },
        42,
    )
    .unwrap()
}

fn model_config() -> ModelConfig {
    ModelConfig {
        d: 50,
        heads: 2,
        layers: 2,
        max_len: 32,
        windows: WindowParams::new(11, 12, 4, 1).unwrap(),
        dropout: 0.3,
    }
}

fn encoding(c: &mut Criterion) {
    c.bench_function("encode_percentile", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..1000 {
                let v = encode_percentile(black_box(i as f64 * 0.1));
                acc += v[5];
            }
            acc
        })
    });
}

fn table_build(c: &mut Criterion) {
    let ds = bench_dataset();
    let tb = TimeBucketing::fixed_default(ds.min_timestamp());
    c.bench_function("popularity_table_build", |b| {
        b.iter(|| PopularityTable::build(black_box(&ds), tb, PopConfig::default()).unwrap())
    });
}

fn window_lookup(c: &mut Criterion) {
    let ds = bench_dataset();
    let tb = TimeBucketing::fixed_default(ds.min_timestamp());
    let table = PopularityTable::build(&ds, tb, PopConfig::default()).unwrap();
    let wp = WindowParams::default();
    let t_query = ds.max_timestamp();
    c.bench_function("dynamics_window", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for item in 0..ds.n_items() as u32 {
                let w = table.dynamics_at(Some(black_box(item)), t_query, &wp);
                acc += w.fine[0][0];
            }
            acc
        })
    });
}

fn forward_pass(c: &mut Criterion) {
    let ds = bench_dataset();
    let tb = TimeBucketing::fixed_default(ds.min_timestamp());
    let table = PopularityTable::build(&ds, tb, PopConfig::default()).unwrap();
    let cfg = model_config();
    let params: ModelParams<f32> = ModelParams::init(cfg, 1).unwrap();
    let graph = params.tensors(false);
    let sin = SinusoidTable::new(cfg.max_len, cfg.d).unwrap();
    let user = (0..ds.n_users())
        .max_by_key(|&u| ds.sequences[u].len())
        .unwrap();
    let seq = to_fixed_sequence(ds.pre_test_slice(user), cfg.max_len).unwrap();
    let w = cfg.feature_width();
    let rows: Vec<Vec<f32>> = (0..seq.len())
        .map(|p| {
            if seq.is_valid_pos(p) {
                table
                    .dynamics_at(Some(seq.items[p]), seq.timestamps[p], &cfg.windows)
                    .features()
            } else {
                vec![0.0; w]
            }
        })
        .collect();
    let inputs = build_inputs(&seq, &rows, &sin, &cfg).unwrap();
    c.bench_function("forward_pass", |b| {
        b.iter(|| {
            let mut rng = substream(0, "bench-dropout", 0);
            forward(black_box(&graph), &cfg, &inputs, false, &mut rng).unwrap()
        })
    });
}

fn training_epoch(c: &mut Criterion) {
    let ds = bench_dataset();
    let tb = TimeBucketing::fixed_default(ds.min_timestamp());
    let table = PopularityTable::build(&ds, tb, PopConfig::default()).unwrap();
    let cfg = model_config();
    let train_cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let sin = SinusoidTable::new(cfg.max_len, cfg.d).unwrap();
    c.bench_function("train_epoch_300_users", |b| {
        b.iter(|| {
            let mut params: ModelParams<f32> = ModelParams::init(cfg, 7).unwrap();
            let mut adam = Adam::new(AdamConfig::default(), &params.param_lens());
            let features = FeatureCache::new(&table, cfg.windows);
            train_epoch(
                black_box(&ds),
                &features,
                &mut params,
                &mut adam,
                &train_cfg,
                &sin,
                0,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    encoding,
    table_build,
    window_lookup,
    forward_pass,
    training_epoch
);
criterion_main!(benches);
