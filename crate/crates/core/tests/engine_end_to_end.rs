use parboost::diagnostics::kl_report;
use parboost::engine::{certify_margins, rounds_for_margin};
use parboost::weak::{plant_vote_instance, ErmLearner, StumpLearner};
use parboost::{run, EngineConfig, LabeledSample, SnapshotMode, Subsample};
use proptest::prelude::*;

fn planted(m: usize, seed: u64) -> (LabeledSample, ErmLearner) {
    let inst = plant_vote_instance(m, 16, 3, 0.3, seed).unwrap();
    let learner = ErmLearner::new(inst.class, &inst.sample).unwrap();
    (inst.sample, learner)
}

#[test]
fn planted_instance_reaches_margin() {
    let (sample, learner) = planted(120, 5);
    let gamma = 0.1;
    let r = 2;
    let p = rounds_for_margin(sample.len(), gamma, r);
    let cfg = EngineConfig::new(gamma, p, r, 2 * r, 17);
    let out = run(&cfg, &sample, &learner).unwrap();
    let rep = certify_margins(&out.classifier, &out.trace, &sample).unwrap();
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.min_margin.unwrap() > gamma / 8.0);
    assert_eq!(out.trace.weak_calls, (p * 2 * r) as u64);
}

#[test]
fn thread_count_does_not_change_the_trace() {
    let (sample, learner) = planted(80, 9);
    let base = EngineConfig::new(0.1, 6, 3, 6, 2).with_subsample(Subsample::Fixed(100));
    let one = run(&base.clone().with_parallelism(1), &sample, &learner).unwrap();
    let four = run(&base.with_parallelism(4), &sample, &learner).unwrap();
    assert_eq!(format!("{:?}", one.classifier), format!("{:?}", four.classifier));
    assert_eq!(one.trace.log_z_product().to_bits(), four.trace.log_z_product().to_bits());
}

#[test]
fn stumps_on_features() {
    let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
    let labels = (0..50).map(|i| if i % 10 < 5 { 1 } else { -1 }).collect();
    let sample = LabeledSample::from_features(rows, labels).unwrap();
    let learner = StumpLearner::for_sample(&sample).unwrap();
    let cfg = EngineConfig::new(0.05, 10, 2, 4, 1)
        .with_subsample(Subsample::FullSample)
        .with_snapshots(SnapshotMode::RoundStarts);
    let out = run(&cfg, &sample, &learner).unwrap();
    let rep = certify_margins(&out.classifier, &out.trace, &sample).unwrap();
    assert!(rep.exp_loss_ok && rep.z_bound_ok);
    assert!(kl_report(&out.trace).unwrap().residuals_ok);
}

#[test]
fn zero_rounds_is_rejected() {
    let (sample, learner) = planted(20, 1);
    assert!(run(&EngineConfig::new(0.1, 0, 1, 1, 0), &sample, &learner).is_err());
    assert!(run(&EngineConfig::new(0.0, 1, 1, 1, 0), &sample, &learner).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identities_hold(seed in any::<u64>(), m in 10usize..60, r in 1usize..4, k in 1usize..3, p in 1usize..6) {
        let (sample, learner) = planted(m, seed);
        let t = k * r;
        let cfg = EngineConfig::new(0.1, p, r, t, seed ^ 0x55).with_subsample(Subsample::Fixed(2 * m));
        let out = run(&cfg, &sample, &learner).unwrap();
        prop_assert_eq!(out.trace.weak_calls, (p * t) as u64);
        prop_assert_eq!(out.trace.len(), p * r);
        let rep = certify_margins(&out.classifier, &out.trace, &sample).unwrap();
        prop_assert!(rep.exp_loss_ok, "relative error {}", rep.exp_loss_rel_err);
        prop_assert!(rep.z_bound_ok, "excess {}", rep.max_accepted_z_excess);
        let kl = kl_report(&out.trace).unwrap();
        prop_assert!(kl.residuals_ok, "residual {}", kl.max_abs_residual);
    }
}
