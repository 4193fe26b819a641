use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;

use parboost::adversary::{
    draw_training_sample, scan_weak_learner, HardInstance, InstanceParams, PreparedQuery, Query,
};
use parboost::adversary::instance::DEFAULT_MAX_MATRIX_BYTES;
use parboost::approx::draw_subsample;
use parboost::engine::boost_step_predictions;
use parboost::rng;
use parboost::weak::{plant_vote_instance, ErmLearner};
use parboost::{run, EngineConfig, Subsample, WeightDistribution};

fn step(c: &mut Criterion) {
    let m = 10_000;
    let mut g = rng::stream(1, &[0]);
    let d = WeightDistribution::normalized((0..m).map(|_| g.gen::<f64>() + 1e-3).collect()).unwrap();
    let preds: Vec<i8> = (0..m).map(|_| if g.gen::<bool>() { 1 } else { -1 }).collect();
    let labels: Vec<i8> = (0..m).map(|_| if g.gen::<bool>() { 1 } else { -1 }).collect();
    let alpha = 0.1f64.atanh();
    c.bench_function("boost_step m=10000", |b| {
        b.iter(|| boost_step_predictions(black_box(&d), &preds, &labels, alpha).unwrap())
    });
}

fn subsample(c: &mut Criterion) {
    let mut g = rng::stream(2, &[0]);
    let d = WeightDistribution::normalized((0..10_000).map(|_| g.gen::<f64>()).collect()).unwrap();
    c.bench_function("draw_subsample n=1000", |b| {
        b.iter_batched(
            || rng::stream(3, &[0]),
            |mut r| draw_subsample(&d, 1000, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn scan(c: &mut Criterion) {
    let params = InstanceParams::new(500, 2.0, 4, 2, 0.1);
    let inst = HardInstance::generate(params, 4, DEFAULT_MAX_MATRIX_BYTES).unwrap();
    let sample = draw_training_sample(500, &mut rng::stream(4, &[1]));
    let labels = inst.labels_of(&sample);
    let query = PreparedQuery::new(&Query::uniform(sample, labels).unwrap(), inst.domain()).unwrap();
    let rows = inst.hypothesis_rows();
    c.bench_function("scan_weak_learner", |b| {
        b.iter(|| scan_weak_learner(black_box(rows), &query, 0.1))
    });
}

fn engine_round(c: &mut Criterion) {
    let inst = plant_vote_instance(1000, 64, 5, 0.3, 5).unwrap();
    let learner = ErmLearner::new(inst.class, &inst.sample).unwrap();
    let cfg = EngineConfig::new(0.1, 1, 4, 8, 6).with_subsample(Subsample::Fixed(1000));
    c.bench_function("engine round R=4 t=8 m=1000", |b| {
        b.iter(|| run(black_box(&cfg), &inst.sample, &learner).unwrap())
    });
}

criterion_group!(benches, step, subsample, scan, engine_round);
criterion_main!(benches);
