//! Identity checks on small seeded instances.

use rand::Rng;

use super::baseline::compare_with_adaboost;
use super::records::{metric_rows, metrics_csv, Verdict};
use crate::adversary::coin_oracle;
use crate::diagnostics::{duality_certificate, kl_divergence, kl_report, DUALITY_TOLERANCE};
use crate::engine::{self, certify_margins, EngineConfig, SnapshotMode, Subsample};
use crate::error::Result;
use crate::rng;
use crate::types::{LabeledSample, WeightDistribution};
use crate::weak::{plant_vote_instance, ErmLearner, StumpLearner, WeakLearner};

struct Micro {
    name: &'static str,
    sample: LabeledSample,
    learner: Box<dyn WeakLearner>,
    config: EngineConfig,
}

fn micro_instances(seed: u64, parallelism: usize) -> Result<Vec<Micro>> {
    let mut out = Vec::new();
    for (i, &(m, k, r, t, p)) in [(30usize, 8usize, 1usize, 1usize, 10usize), (50, 12, 2, 4, 6), (80, 16, 3, 6, 5)]
        .iter()
        .enumerate()
    {
        let inst = plant_vote_instance(m, k, 3, 0.3, rng::derive_seed(seed, &[i as u64]))?;
        let learner = ErmLearner::new(inst.class, &inst.sample)?;
        out.push(Micro {
            name: "planted",
            config: EngineConfig::new(0.1, p, r, t, rng::derive_seed(seed, &[i as u64, 1]))
                .with_subsample(Subsample::Fixed(2 * m))
                .with_parallelism(parallelism),
            sample: inst.sample,
            learner: Box::new(learner),
        });
    }
    let mut g = rng::stream(seed, &[99]);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![g.gen(), g.gen()]).collect();
    let labels = rows.iter().map(|x| if x[0] + 0.3 * x[1] > 0.6 { 1 } else { -1 }).collect();
    let sample = LabeledSample::from_features(rows, labels)?;
    let learner = StumpLearner::for_sample(&sample)?;
    out.push(Micro {
        name: "stumps",
        config: EngineConfig::new(0.05, 8, 2, 4, seed)
            .with_subsample(Subsample::Fixed(40))
            .with_parallelism(parallelism)
            .with_snapshots(SnapshotMode::RoundStarts),
        sample,
        learner: Box::new(learner),
    });
    Ok(out)
}

fn check(out: &mut Vec<Verdict>, name: &str, ok: bool, detail: String) {
    out.push(Verdict::new(name, ok, detail));
}

/// Runs the suite and returns one verdict per check.
pub fn run_suite(seed: u64, parallelism: usize) -> Result<Vec<Verdict>> {
    let mut v = Vec::new();

    let mut worst_loss = 0.0f64;
    let mut worst_z = f64::NEG_INFINITY;
    let mut worst_residual = 0.0f64;
    let mut residuals_ok = true;
    let mut calls_ok = true;
    let mut deterministic = true;
    let alt = if parallelism == 1 { 4 } else { 1 };
    for micro in micro_instances(seed, parallelism)? {
        let out = engine::run(&micro.config, &micro.sample, micro.learner.as_ref())?;
        let rep = certify_margins(&out.classifier, &out.trace, &micro.sample)?;
        worst_loss = worst_loss.max(rep.exp_loss_rel_err);
        worst_z = worst_z.max(rep.max_accepted_z_excess);
        let kl = kl_report(&out.trace)?;
        worst_residual = worst_residual.max(kl.max_abs_residual);
        residuals_ok &= kl.residuals_ok;
        calls_ok &= out.trace.weak_calls == (micro.config.rounds * micro.config.pool_size) as u64;

        let other = micro.config.clone().with_parallelism(alt);
        let again = engine::run(&other, &micro.sample, micro.learner.as_ref())?;
        let kl_again = kl_report(&again.trace)?;
        deterministic &= metrics_csv(&metric_rows(&out.trace, &kl))? == metrics_csv(&metric_rows(&again.trace, &kl_again))?;
        log::debug!("verify: {} instance done", micro.name);
    }
    check(&mut v, "exp_loss_identity", worst_loss <= engine::EXP_LOSS_TOLERANCE, format!("max relative error {worst_loss:e}"));
    check(&mut v, "z_bound", worst_z <= engine::Z_BOUND_TOLERANCE, format!("max accepted excess {worst_z:e}"));
    check(&mut v, "telescoping", residuals_ok, format!("max |residual| {worst_residual:e}"));
    check(&mut v, "weak_call_accounting", calls_ok, "p·t calls per run".into());
    check(&mut v, "deterministic_across_threads", deterministic, format!("parallelism {parallelism} vs {alt}"));

    // closed-form step: D = (0.6, 0.4), h right on the first point, γ = 0.2
    let d = WeightDistribution::from_weights(vec![0.6, 0.4])?;
    let alpha = 0.2f64.atanh();
    let (_, z) = engine::boost_step_predictions(&d, &[1, -1], &[1, 1], alpha)?;
    let want = 0.96f64.sqrt();
    check(&mut v, "two_point_z", (z - want).abs() <= 1e-12, format!("Z = {z}, expected {want}"));

    let mut g = rng::stream(seed, &[7]);
    let mut min_slack = f64::INFINITY;
    let mut kl_nonneg = true;
    for _ in 0..10_000 {
        let n = g.gen_range(2..8);
        let p = WeightDistribution::normalized((0..n).map(|_| g.gen::<f64>() + 1e-3).collect())?;
        let q = WeightDistribution::normalized((0..n).map(|_| g.gen::<f64>() + 1e-3).collect())?;
        let x: Vec<f64> = (0..n).map(|_| g.gen_range(-3.0..3.0)).collect();
        min_slack = min_slack.min(duality_certificate(&p, &q, &x)?.slack);
        kl_nonneg &= kl_divergence(&p, &q)? >= 0.0;
    }
    check(&mut v, "duality", min_slack >= -DUALITY_TOLERANCE, format!("min slack {min_slack:e}"));
    check(&mut v, "kl_nonnegative", kl_nonneg, "10000 random pairs".into());

    let inst = plant_vote_instance(10, 6, 3, 0.3, seed)?;
    let learner = ErmLearner::new(inst.class, &inst.sample)?;
    let (base, _) = compare_with_adaboost(&inst.sample, &learner, 0.1, 15, seed)?;
    check(&mut v, "adaboost_equivalence", base.passed, format!("max |ΔD| {:e}", base.max_abs_diff));

    let c = coin_oracle(3, 0.1)?;
    check(&mut v, "coin_oracle", (c - 0.352).abs() <= 1e-15, format!("P(n=3, β=0.1) = {c}"));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let v = run_suite(11, 2).unwrap();
        assert!(v.iter().all(|x| x.passed), "{v:#?}");
        assert!(v.len() >= 10);
    }
}
