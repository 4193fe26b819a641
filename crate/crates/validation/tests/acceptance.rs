//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use parboost::adversary::{
    adversary_grid, coin_oracle, measure_expected_loss, AdversaryParams, GridSpec, LearnerKind,
};
use parboost::diagnostics::{duality_certificate, kl_report};
use parboost::engine::{self, boost_step_predictions, certify_margins, BoostOutcome};
use parboost::harness::grid::UpperRow;
use parboost::harness::config::{DatasetConfig, EngineSection, GridKind, GridSection};
use parboost::harness::{run_experiment, tradeoff_grid, ExperimentConfig, Mode};
use parboost::rng;
use parboost::weak::{plant_vote_instance, ErmLearner, StumpLearner};
use parboost::{EngineConfig, LabeledSample, SnapshotMode, Subsample, WeakLearner, WeightDistribution};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn note(text: impl AsRef<str>) {
    println!("    note: {}", text.as_ref());
}

struct SeededRun {
    m: usize,
    steps: usize,
    outcome: BoostOutcome,
    sample: LabeledSample,
    pool_size: usize,
}

fn random_features(m: usize, seed: u64) -> LabeledSample {
    let mut g = rng::stream(seed, &[1]);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| vec![g.gen(), g.gen(), g.gen()]).collect();
    let labels = rows
        .iter()
        .map(|x| {
            let clean = x[0] + 0.5 * x[1] - 0.4 * x[2] > 0.55;
            if clean ^ (g.gen::<f64>() < 0.1) {
                1
            } else {
                -1
            }
        })
        .collect();
    LabeledSample::from_features(rows, labels).unwrap()
}

/// Fifty runs mixing planted-vote ERM and stumps on noisy features.
fn seeded_runs() -> (Vec<SeededRun>, f64) {
    let ms = [100, 250, 500, 1000, 2000];
    let rs = [1, 2, 5];
    let steps = [60, 300, 1000, 2500, 5000];
    let start = Instant::now();
    let mut runs = Vec::new();
    for i in 0..50u64 {
        let m = ms[i as usize % 5];
        let r = rs[i as usize % 3];
        let total = steps[(i as usize / 5) % 5];
        let p = total / r;
        let t = 2 * r;
        let (sample, learner, gamma): (LabeledSample, Box<dyn WeakLearner>, f64) = if i % 2 == 0 {
            let inst = plant_vote_instance(m, 32, 5, 0.2, i).unwrap();
            let l = ErmLearner::new(inst.class.clone(), &inst.sample).unwrap();
            (inst.sample, Box::new(l), 0.1)
        } else {
            let s = random_features(m, i);
            let l = StumpLearner::for_sample(&s).unwrap();
            (s, Box::new(l), 0.1)
        };
        let cfg = EngineConfig::new(gamma, p, r, t, 1000 + i).with_snapshots(if m * p * r > 4_000_000 {
            SnapshotMode::RoundStarts
        } else {
            SnapshotMode::EveryStep
        });
        let outcome = engine::run(&cfg, &sample, learner.as_ref()).unwrap();
        runs.push(SeededRun {
            m,
            steps: p * r,
            outcome,
            sample,
            pool_size: t,
        });
    }
    (runs, start.elapsed().as_secs_f64())
}

fn criterion_1(runs: &[SeededRun], engine_secs: f64) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for run in runs {
        let rep = certify_margins(&run.outcome.classifier, &run.outcome.trace, &run.sample).unwrap();
        worst = worst.max(rep.exp_loss_rel_err);
    }
    let secs = engine_secs + start.elapsed().as_secs_f64();
    let max_m = runs.iter().map(|r| r.m).max().unwrap();
    let max_steps = runs.iter().map(|r| r.steps).max().unwrap();
    outcome(
        worst <= 1e-9 && secs <= 120.0 && runs.len() == 50,
        format!(
            "{} runs (m <= {max_m}, pR <= {max_steps}): max relative error {worst:e} (limit 1e-9), {secs:.1}s (limit 120s)",
            runs.len()
        ),
    )
}

fn criterion_2(runs: &[SeededRun]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut accepted = 0usize;
    for run in runs {
        let gamma = run.outcome.trace.params.gamma;
        let bound = (1.0 - gamma * gamma).sqrt();
        for s in run.outcome.trace.steps.iter().filter(|s| s.accepted) {
            worst = worst.max(s.z - bound);
            accepted += 1;
        }
    }
    let d = WeightDistribution::from_weights(vec![0.6, 0.4]).unwrap();
    let (_, z) = boost_step_predictions(&d, &[1, -1], &[1, 1], 0.2f64.atanh()).unwrap();
    outcome(
        worst <= 1e-12 && (z - 0.9797959).abs() <= 1e-6,
        format!("{accepted} accepted steps, max Z - sqrt(1-γ²) = {worst:e}; two-point γ=0.2 gives Z = {z}"),
    )
}

fn criterion_3(runs: &[SeededRun]) -> Outcome {
    let mut worst = 0.0f64;
    let mut rounds = 0usize;
    for run in runs {
        let rep = kl_report(&run.outcome.trace).unwrap();
        worst = worst.max(rep.max_abs_residual);
        rounds += rep.rounds.len();
    }
    outcome(worst < 1e-8, format!("{rounds} rounds, max |residual| {worst:e} (limit 1e-8)"))
}

fn criterion_4() -> Outcome {
    let mut g = rng::stream(4, &[]);
    let mut min_slack = f64::INFINITY;
    let mut triples = 0usize;
    while triples < 100_000 {
        // a common support of size <= 8 inside a slightly larger index set
        let n = g.gen_range(1..=10);
        let support: Vec<bool> = (0..n).map(|i| i == 0 || g.gen::<f64>() < 0.7).collect();
        let k = support.iter().filter(|&&b| b).count();
        if k > 8 {
            continue;
        }
        let draw = |g: &mut rng::StreamRng| -> WeightDistribution {
            WeightDistribution::normalized(support.iter().map(|&b| if b { g.gen::<f64>() + 1e-6 } else { 0.0 }).collect())
                .unwrap()
        };
        let p = draw(&mut g);
        let q = draw(&mut g);
        let x: Vec<f64> = (0..n).map(|_| g.gen_range(-5.0..5.0)).collect();
        min_slack = min_slack.min(duality_certificate(&p, &q, &x).unwrap().slack);
        triples += 1;
    }
    let mut worst_eq = 0.0f64;
    for _ in 0..1000 {
        let n = g.gen_range(1..=8);
        let p = WeightDistribution::normalized((0..n).map(|_| g.gen::<f64>() + 1e-6).collect()).unwrap();
        let c = g.gen_range(-5.0..5.0);
        worst_eq = worst_eq.max(duality_certificate(&p, &p, &vec![c; n]).unwrap().slack.abs());
    }
    outcome(
        triples >= 100_000 && min_slack >= -1e-10 && worst_eq <= 1e-12,
        format!("{triples} triples, min slack {min_slack:e}; equality case max |slack| {worst_eq:e}"),
    )
}

fn upper_config(ts: Option<Vec<usize>>, seeds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::Grid, 5);
    cfg.parallelism = 4;
    cfg.dataset = Some(DatasetConfig::PlantedVote {
        m: 1000,
        class_size: 64,
        voters: 5,
        gamma_star: 0.2,
    });
    cfg.engine = Some(EngineSection {
        gamma: 0.1,
        rounds: 1,
        steps_per_round: 1,
        pool_size: 1,
        subsample_size: None,
        full_sample: false,
        c_n: 1.0,
        weak: None,
        gamma_target: None,
        selection: None,
        snapshots: Some(parboost::harness::config::SnapshotChoice::RoundStarts),
        max_weak_calls: None,
    });
    cfg.grid = Some(GridSection {
        kind: GridKind::Upper,
        rs: vec![1, 2, 5],
        ps: None,
        ts,
        delta: 0.1,
        seeds,
        ml_widths: 3.0,
    });
    cfg
}

/// (round, seed) pairs in completed runs, and how many meet the product event.
fn product_pairs(rows: &[UpperRow]) -> (usize, usize) {
    let ok = rows.iter().filter(|r| r.status == "ok");
    ok.fold((0, 0), |(n, k), r| (n + r.p, k + r.rounds_meeting_z_product))
}

fn criterion_5_and_6() -> (Outcome, Outcome) {
    let start = Instant::now();
    let g = tradeoff_grid(&upper_config(None, 20)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let per_r: Vec<String> = g.verdicts.iter().map(|v| format!("{}: {}", v.name, v.detail)).collect();
    let first_error = g.results["failures"].get(0).and_then(|e| e.as_str()).unwrap_or("").to_string();
    // runtime limit is 10 min per R
    let c5 = outcome(
        g.verdicts.iter().all(|v| v.passed) && secs <= 600.0 * 3.0,
        format!("{}; {first_error}", per_r.join("; ")),
    );
    let (pairs, meeting) = product_pairs(&g.upper);
    let c6 = if pairs == 0 {
        outcome(false, "no run of criterion 5 completed, so there are no (round, seed) pairs to check")
    } else {
        let frac = meeting as f64 / pairs as f64;
        outcome(frac >= 0.9, format!("{meeting}/{pairs} (round, seed) pairs meet the product event"))
    };
    (c5, c6)
}

fn supplementary_upper() {
    let g = tradeoff_grid(&upper_config(Some(vec![20]), 5)).unwrap();
    for v in &g.verdicts {
        note(format!("criterion 5 at t = 20 instead of the prescribed t, {}: {}", v.name, v.detail));
    }
    let (pairs, meeting) = product_pairs(&g.upper);
    note(format!("criterion 6 at t = 20: {meeting}/{pairs} (round, seed) pairs meet the product event"));
}

/// Textbook AdaBoost: same weak learner, full sample, pool {h, -h},
/// weights recomputed from the cumulative margin each round.
fn adaboost_oracle(sample: &LabeledSample, learner: &dyn WeakLearner, rounds: usize, gamma: f64) -> Vec<Vec<f64>> {
    let m = sample.len();
    let y = sample.labels();
    let alpha = 0.5 * ((1.0 + gamma) / (1.0 - gamma)).ln();
    let all: Vec<usize> = (0..m).collect();
    let mut margin = vec![0.0f64; m];
    let mut seq = vec![vec![1.0 / m as f64; m]];
    for _ in 0..rounds {
        let d = seq.last().unwrap();
        let h = learner.train(sample, &all).unwrap().hypothesis.predictions(sample).unwrap();
        let err: f64 = (0..m).filter(|&i| h[i] != y[i]).map(|i| d[i]).sum();
        let step = if err <= 0.5 - gamma / 2.0 + 1e-12 {
            alpha
        } else if 1.0 - err <= 0.5 - gamma / 2.0 + 1e-12 {
            -alpha
        } else {
            0.0
        };
        for i in 0..m {
            margin[i] += step * f64::from(y[i] * h[i]);
        }
        let top = margin.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = margin.iter().map(|v| (-v - top).exp()).collect();
        let z: f64 = w.iter().sum();
        seq.push(w.iter().map(|v| v / z).collect());
    }
    seq
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut accepted = 0;
    let mut cases = 0;
    for seed in 0..10u64 {
        let inst = plant_vote_instance(10, 8, 3, 0.3, seed).unwrap();
        let erm = ErmLearner::new(inst.class.clone(), &inst.sample).unwrap();
        let noisy = random_features(10, 100 + seed);
        let stumps = StumpLearner::for_sample(&noisy).unwrap();
        let cases_here: [(&LabeledSample, &dyn WeakLearner, f64); 2] =
            [(&inst.sample, &erm, 0.1), (&noisy, &stumps, 0.05)];
        for (sample, learner, gamma) in cases_here {
            let cfg = EngineConfig::new(gamma, 25, 1, 1, seed).with_subsample(Subsample::FullSample);
            let out = engine::run(&cfg, sample, learner).unwrap();
            let want = adaboost_oracle(sample, learner, 25, gamma);
            for (l, w) in want.iter().enumerate() {
                let got = out.trace.distribution(l + 1).unwrap();
                for (a, b) in got.weights().iter().zip(w) {
                    worst = worst.max((a - b).abs());
                }
            }
            accepted += out.trace.steps.iter().filter(|s| s.accepted).count();
            cases += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{cases} ten-point instances, 25 rounds each ({accepted} accepted steps): max |ΔD| = {worst:e}"),
    )
}

fn criterion_8() -> Outcome {
    let c3 = coin_oracle(3, 0.1).unwrap();
    let mut trivial = true;
    for i in 0..50 {
        let beta = i as f64 / 100.0;
        trivial &= coin_oracle(1, beta).unwrap() == 0.5 - beta;
    }
    let params = AdversaryParams::new(100, 1.0, 5, 1, 1, 0.1);
    let e = measure_expected_loss(LearnerKind::MajorityDecoder, &params, 10_000, 8).unwrap();
    let mc_ok = (e.mean - e.exact_majority).abs() <= 3.0 * e.half_width;
    outcome(
        c3 == 0.352 && trivial && mc_ok,
        format!(
            "coin_oracle(3, 0.1) = {c3}; coin_oracle(1, β) = 1/2 - β on 50 values: {trivial}; \
             majority decoder {:.5} ± {:.5} vs exact {:.5} (pR = 5, 10^4 trials)",
            e.mean, e.half_width, e.exact_majority
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let spec = GridSpec {
        base: AdversaryParams::new(200, 2.0, 1, 1, 4, 0.1),
        rs: vec![1, 4],
        ps: (1..=8).collect(),
        learners: vec![
            LearnerKind::MajorityDecoder,
            LearnerKind::AllOnes,
            LearnerKind::RandomGuess,
            LearnerKind::NaiveBoosting,
        ],
        trials: 2000,
        seed: 9,
        ml_widths: 3.0,
    };
    let rep = adversary_grid(&spec).unwrap();
    let secs = start.elapsed().as_secs_f64();
    note(format!("criterion 9 calibrated C_l = {:?}", rep.calibrated_c_l));
    for v in rep.halt_violations.iter().take(4) {
        note(format!("criterion 9 (C_s = 1) {v}"));
    }
    for pt in &rep.points {
        let row: Vec<String> = pt.estimates.iter().map(|e| format!("{} {:.4}", e.learner, e.mean)).collect();
        note(format!("p={} R={} exact {:.4}: {}", pt.p, pt.r, pt.exact_majority, row.join(", ")));
    }
    let detail = format!(
        "{} ML-floor violations, {} monotonicity violations{}; {secs:.0}s (limit 900s)",
        rep.ml_violations.len(),
        rep.monotone_violations.len(),
        rep.ml_violations
            .iter()
            .chain(&rep.monotone_violations)
            .next()
            .map(|v| format!(", first: {v}"))
            .unwrap_or_default()
    );
    outcome(
        rep.ml_violations.is_empty() && rep.monotone_violations.is_empty() && secs <= 900.0,
        detail,
    )
}

fn criterion_10(runs: &[SeededRun]) -> Outcome {
    let mut identical = true;
    let mut calls_ok = runs
        .iter()
        .all(|r| r.outcome.trace.weak_calls == (r.outcome.trace.params.rounds * r.pool_size) as u64);
    let mut checked = 0;
    for seed in [1u64, 2, 3] {
        let mut csvs = Vec::new();
        for par in [1usize, 4, 16] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = ExperimentConfig::new(Mode::Boost, seed);
            cfg.parallelism = par;
            cfg.out = Some(dir.path().to_path_buf());
            cfg.dataset = Some(DatasetConfig::PlantedVote {
                m: 400,
                class_size: 32,
                voters: 5,
                gamma_star: 0.2,
            });
            cfg.engine = Some(EngineSection {
                gamma: 0.1,
                rounds: 30,
                steps_per_round: 2,
                pool_size: 8,
                subsample_size: None,
                full_sample: false,
                c_n: 1.0,
                weak: None,
                gamma_target: None,
                selection: None,
                snapshots: None,
                max_weak_calls: None,
            });
            let out = run_experiment(&cfg).unwrap();
            calls_ok &= out.record.weak_calls == 30 * 8;
            csvs.push(std::fs::read(dir.path().join("metrics.csv")).unwrap());
            checked += 1;
        }
        identical &= csvs.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(
        identical && calls_ok,
        format!(
            "metrics CSV byte-identical at parallelism 1/4/16: {identical}; weak calls = p·t in all {} runs: {calls_ok}",
            checked + runs.len()
        ),
    )
}

fn report(id: u32, o: &Outcome, all: &mut bool) {
    *all &= o.passed;
    println!("criterion {id:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    std::io::stdout().flush().ok();
}

fn main() -> ExitCode {
    let mut all = true;
    println!("acceptance suite");
    let (runs, engine_secs) = seeded_runs();
    report(1, &criterion_1(&runs, engine_secs), &mut all);
    report(2, &criterion_2(&runs), &mut all);
    report(3, &criterion_3(&runs), &mut all);
    report(4, &criterion_4(), &mut all);
    let (c5, c6) = criterion_5_and_6();
    report(5, &c5, &mut all);
    report(6, &c6, &mut all);
    supplementary_upper();
    report(7, &criterion_7(), &mut all);
    report(8, &criterion_8(), &mut all);
    report(9, &criterion_9(), &mut all);
    report(10, &criterion_10(&runs), &mut all);
    if all {
        ExitCode::SUCCESS
    } else {
        println!("acceptance suite: at least one criterion failed");
        ExitCode::FAILURE
    }
}
