//! Sequential versus data-parallel execution of the hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mmrec_core::corpus::{build_sequences, generate_synthetic, leave_one_out_split, SplitDataset, SynthSpec};
use mmrec_core::encoder::{prepare_catalog, ItemFeatures, Model, ModelConfig};
use mmrec_core::eval::{evaluate_model, Stage};
use mmrec_core::finetune::{apply_masking, mip_objective, MaskedSequence};
use mmrec_core::numerics::rng::stream;
use mmrec_core::pretrain::{pretrain_objective, LossWeights};
use mmrec_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn setup() -> (Model, Vec<ItemFeatures>, SplitDataset<usize>) {
    let spec = SynthSpec {
        n_items: 256,
        n_users: 128,
        d_raw: 32,
        successors: 3,
        ..SynthSpec::default()
    };
    let (catalog, log) = generate_synthetic(&spec, 1).unwrap();
    let split = leave_one_out_split(&build_sequences(&log)).index(&catalog).unwrap();
    let config = ModelConfig {
        d_raw: 32,
        d: 32,
        n_layers: 2,
        n_heads: 4,
        d_ff: 64,
        n_max: 12,
        ..ModelConfig::default()
    };
    let features = prepare_catalog(&catalog, config.max_frames).unwrap();
    (Model::new(config, 1).unwrap(), features, split)
}

fn benches(c: &mut Criterion) {
    let (model, features, split) = setup();

    let mut g = c.benchmark_group("encode_catalog");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.encode_catalog(&features, exec).unwrap())
        });
    }
    g.finish();

    let batch: Vec<&ItemFeatures> = features.iter().take(64).collect();
    let weights = LossWeights::default();
    let mut g = c.benchmark_group("composite_loss_and_grad");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let rngs = |i: usize, v: mmrec_core::pretrain::View| Some(stream(1, &[3, 0, i as u64, v.index() as u64]));
                pretrain_objective(&model, &batch, &weights, rngs, exec, true).unwrap()
            })
        });
    }
    g.finish();

    let masked: Vec<MaskedSequence> = split
        .users
        .iter()
        .take(32)
        .enumerate()
        .map(|(i, u)| apply_masking(&u.train, 0.2, features.len(), &mut stream(1, &[4, i as u64])).unwrap())
        .collect();
    let candidates: Vec<usize> = (0..features.len()).collect();
    let mut g = c.benchmark_group("mip_loss_and_grad");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let rngs = |i: usize| Some(stream(1, &[5, i as u64]));
                mip_objective(&model, &masked, &features, &candidates, rngs, exec, true).unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("evaluate_full_catalog");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_model(&model, &split, &features, Stage::Test, &[10, 50], exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = parallel;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(parallel);
