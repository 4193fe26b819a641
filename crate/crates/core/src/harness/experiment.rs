//! Runs one configured experiment and persists its record.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use super::baseline::compare_with_adaboost;
use super::config::{AdversarySection, EngineSection, ExperimentConfig, Mode, WeakChoice};
use super::dataset::Dataset;
use super::grid::tradeoff_grid;
use super::records::{
    input_hash, metric_rows, metrics_csv, round_metrics, RoundMetrics, RunRecord, Timings, Verdict, CODE_VERSION,
    SCHEMA_VERSION,
};
use super::verify::run_suite;
use crate::adversary::{coin_oracle, measure_expected_loss, LearnerKind, LossEstimate};
use crate::diagnostics::kl_report;
use crate::engine::{self, certify_margins};
use crate::error::{Error, Result};
use crate::weak::{WeakLearner, WeakLearnerKind, WeakLearnerSpec};

/// Slack, in 95% half-widths, for Monte-Carlo comparisons.
pub const CI_WIDTHS: f64 = 3.0;

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Per-step metric table, for modes that boost.
    pub metrics: Option<String>,
    /// Mode-specific table (adversary estimates, grid points).
    pub table: Option<String>,
}

impl RunOutput {
    /// Exit status: every hard assertion held.
    pub fn passed(&self) -> bool {
        self.record.passed()
    }
}

#[derive(Default)]
struct ModeResult {
    fingerprint: Vec<u8>,
    rounds: Vec<RoundMetrics>,
    min_margin: Option<f64>,
    weak_calls: u64,
    results: serde_json::Value,
    verdicts: Vec<Verdict>,
    metrics: Option<String>,
    table: Option<String>,
    timings: Timings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// The weak learner named by the engine section, bound to the dataset.
pub fn build_learner(engine: &EngineSection, data: &Dataset) -> Result<Box<dyn WeakLearner>> {
    let choice = engine
        .weak
        .unwrap_or(if data.class.is_some() { WeakChoice::Erm } else { WeakChoice::Stump });
    let kind = match choice {
        WeakChoice::Stump => WeakLearnerKind::Stump,
        WeakChoice::Erm => WeakLearnerKind::FiniteClassErm(
            data.class
                .clone()
                .ok_or_else(|| Error::Config("the erm learner needs a planted-vote dataset".into()))?,
        ),
    };
    WeakLearnerSpec::new(kind, engine.gamma_target.unwrap_or(engine.gamma))?.build(&data.sample)
}

fn boost(cfg: &ExperimentConfig, seed: u64) -> Result<ModeResult> {
    let section = cfg.engine()?;
    let t0 = Instant::now();
    let data = cfg.dataset()?.load(seed)?;
    let learner = build_learner(section, &data)?;
    let load_ms = ms(t0);

    let t1 = Instant::now();
    let ecfg = section.engine_config(seed, cfg.parallelism);
    let out = engine::run(&ecfg, &data.sample, learner.as_ref())?;
    let run_ms = ms(t1);

    let t2 = Instant::now();
    let margins = certify_margins(&out.classifier, &out.trace, &data.sample)?;
    let kl = kl_report(&out.trace)?;
    let analysis_ms = ms(t2);

    let trace = &out.trace;
    let expected_calls = (ecfg.rounds * ecfg.pool_size) as u64;
    let mut verdicts = vec![
        Verdict::new(
            "exp_loss_identity",
            margins.exp_loss_ok,
            format!("relative error {:e}", margins.exp_loss_rel_err),
        ),
        Verdict::new(
            "z_bound",
            margins.z_bound_ok,
            format!("max accepted Z − √(1−γ²) = {:e}", margins.max_accepted_z_excess),
        ),
        Verdict::new(
            "telescoping",
            kl.residuals_ok,
            format!("max |residual| {:e}", kl.max_abs_residual),
        ),
        Verdict::new(
            "weak_call_accounting",
            trace.weak_calls == expected_calls,
            format!("{} calls, expected p·t = {expected_calls}", trace.weak_calls),
        ),
    ];
    if let Some(holds) = margins.counting_bound_holds {
        verdicts.push(Verdict::new(
            "counting_bound",
            holds,
            format!(
                "{} margins below γ/8, bound {}",
                margins.below_gamma_over_8.unwrap_or(0),
                margins.counting_bound
            ),
        ));
    }
    let rows = metric_rows(trace, &kl);
    Ok(ModeResult {
        fingerprint: data.fingerprint,
        rounds: round_metrics(trace, &kl),
        min_margin: margins.min_margin,
        weak_calls: trace.weak_calls,
        results: json!({
            "learner": learner.name(),
            "d": learner.vc_dimension(),
            "trace": trace.params,
            "planted_margin": data.planted_margin,
            "margins": margins,
            "degenerate": out.degenerate,
            "advantage_shortfalls": trace.advantage_shortfalls,
            "min_trained_advantage": trace.min_trained_advantage,
            "trichotomy": {
                "LOW_KL": kl.low_kl,
                "PROGRESS": kl.progress,
                "NEGATION_ADVANTAGE": kl.negation_advantage,
            },
        }),
        verdicts,
        metrics: Some(metrics_csv(&rows)?),
        table: None,
        timings: Timings {
            load_ms,
            run_ms,
            analysis_ms,
        },
    })
}

fn baseline(cfg: &ExperimentConfig, seed: u64) -> Result<ModeResult> {
    let section = cfg.engine()?;
    let t0 = Instant::now();
    let data = cfg.dataset()?.load(seed)?;
    let learner = build_learner(section, &data)?;
    let load_ms = ms(t0);
    let t1 = Instant::now();
    let (report, out) = compare_with_adaboost(&data.sample, learner.as_ref(), section.gamma, section.rounds, seed)?;
    let run_ms = ms(t1);
    let t2 = Instant::now();
    let kl = kl_report(&out.trace)?;
    let margins = certify_margins(&out.classifier, &out.trace, &data.sample)?;
    let rows = metric_rows(&out.trace, &kl);
    Ok(ModeResult {
        fingerprint: data.fingerprint,
        rounds: round_metrics(&out.trace, &kl),
        min_margin: margins.min_margin,
        weak_calls: out.trace.weak_calls,
        results: json!({ "baseline": report, "margins": margins }),
        verdicts: vec![Verdict::new(
            "adaboost_equivalence",
            report.passed,
            format!("max |ΔD| = {:e} over {} steps", report.max_abs_diff, report.steps),
        )],
        metrics: Some(metrics_csv(&rows)?),
        table: None,
        timings: Timings {
            load_ms,
            run_ms,
            analysis_ms: ms(t2),
        },
    })
}

/// Checks that apply to one set of loss estimates at a single point.
pub fn adversary_verdicts(estimates: &[LossEstimate], widths: f64) -> Vec<Verdict> {
    let mut out = Vec::new();
    for e in estimates {
        if e.learner.is_fair() {
            let lower = e.exact_majority - widths * e.half_width;
            out.push(Verdict::new(
                format!("ml_floor[{}]", e.learner),
                e.mean >= lower,
                format!("loss {} ± {}, exact majority {}", e.mean, e.half_width, e.exact_majority),
            ));
        }
        if e.learner == LearnerKind::MajorityDecoder {
            out.push(Verdict::new(
                "majority_matches_exact",
                (e.mean - e.exact_majority).abs() <= widths * e.half_width,
                format!("loss {} vs exact {}", e.mean, e.exact_majority),
            ));
        }
    }
    out
}

#[derive(serde::Serialize)]
struct EstimateRow<'a> {
    learner: &'a str,
    p: usize,
    r: usize,
    t: usize,
    trials: usize,
    mean: f64,
    half_width: f64,
    exact_majority: f64,
    analytic_floor: f64,
    halt_rate: f64,
    halt_bound: f64,
    concept_responses: usize,
}

fn adversary(cfg: &ExperimentConfig, seed: u64) -> Result<ModeResult> {
    let section: &AdversarySection = cfg.adversary()?;
    let params = section.params();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let t1 = Instant::now();
    let estimates = pool.install(|| {
        section
            .learners
            .iter()
            .map(|&k| measure_expected_loss(k, &params, section.trials, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let run_ms = ms(t1);
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &estimates {
        w.serialize(EstimateRow {
            learner: e.learner.name(),
            p: params.p,
            r: params.r,
            t: params.t,
            trials: e.trials,
            mean: e.mean,
            half_width: e.half_width,
            exact_majority: e.exact_majority,
            analytic_floor: e.analytic_floor,
            halt_rate: e.halt_rate,
            halt_bound: e.halt_bound,
            concept_responses: e.concept_responses,
        })?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok(ModeResult {
        fingerprint: Vec::new(),
        results: json!({ "params": params, "estimates": estimates }),
        verdicts: adversary_verdicts(&estimates, CI_WIDTHS),
        table: Some(table),
        timings: Timings {
            run_ms,
            ..Timings::default()
        },
        ..ModeResult::default()
    })
}

fn oracle(cfg: &ExperimentConfig) -> Result<ModeResult> {
    let o = cfg.oracle()?;
    let value = coin_oracle(o.n, o.beta)?;
    Ok(ModeResult {
        results: json!({ "n": o.n, "beta": o.beta, "error_probability": value }),
        ..ModeResult::default()
    })
}

fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<ModeResult> {
    match cfg.mode {
        Mode::Boost => boost(cfg, seed),
        Mode::AdaboostBaseline => baseline(cfg, seed),
        Mode::Adversary => adversary(cfg, seed),
        Mode::Oracle => oracle(cfg),
        Mode::Verify => {
            let t = Instant::now();
            let verdicts = run_suite(seed, cfg.parallelism)?;
            Ok(ModeResult {
                verdicts,
                timings: Timings {
                    run_ms: ms(t),
                    ..Timings::default()
                },
                ..ModeResult::default()
            })
        }
        Mode::Grid => {
            let t = Instant::now();
            let g = tradeoff_grid(cfg)?;
            Ok(ModeResult {
                fingerprint: g.fingerprint,
                results: g.results,
                verdicts: g.verdicts,
                table: Some(g.table),
                timings: Timings {
                    run_ms: ms(t),
                    ..Timings::default()
                },
                ..ModeResult::default()
            })
        }
    }
}

/// File names under the output directory.
pub const RECORD_FILE: &str = "runs.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";

fn table_file(mode: Mode) -> String {
    format!("{}.csv", mode.as_str())
}

fn persist(dir: &Path, out: &RunOutput, mode: Mode) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    out.record.append_to(&dir.join(RECORD_FILE))?;
    if let Some(m) = &out.metrics {
        std::fs::write(dir.join(METRICS_FILE), m)?;
    }
    if let Some(t) = &out.table {
        std::fs::write(dir.join(table_file(mode)), t)?;
    }
    Ok(())
}

/// Validates the config, runs its mode and, when an output directory is
/// set, appends the record and writes the tables. A run that fails partway
/// still appends a record flagged `incomplete` before the error returns.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let echo = serde_json::to_value(cfg)?;
    let result = execute(cfg, seed);
    let (res, error) = match result {
        Ok(r) => (r, None),
        Err(e) => (ModeResult::default(), Some(e)),
    };
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.to_string(),
        input_hash: input_hash(&echo, &res.fingerprint),
        mode: cfg.mode.as_str().to_string(),
        seed,
        config: echo,
        rounds: res.rounds,
        min_margin: res.min_margin,
        weak_calls: res.weak_calls,
        timings: res.timings,
        results: res.results,
        verdicts: res.verdicts,
        incomplete: error.is_some(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    let out = RunOutput {
        record,
        metrics: res.metrics,
        table: res.table,
    };
    if let Some(dir) = &cfg.out {
        persist(dir, &out, cfg.mode)?;
    }
    match error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DatasetConfig, OracleSection};

    fn boost_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Mode::Boost, 5);
        cfg.dataset = Some(DatasetConfig::PlantedVote {
            m: 80,
            class_size: 12,
            voters: 3,
            gamma_star: 0.3,
        });
        cfg.engine = Some(EngineSection {
            gamma: 0.1,
            rounds: 4,
            steps_per_round: 2,
            pool_size: 4,
            subsample_size: Some(60),
            full_sample: false,
            c_n: 1.0,
            weak: None,
            gamma_target: None,
            selection: None,
            snapshots: None,
            max_weak_calls: None,
        });
        cfg
    }

    #[test]
    fn boost_mode_passes_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = boost_config();
        cfg.out = Some(dir.path().to_path_buf());
        let out = run_experiment(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.record.verdicts);
        assert_eq!(out.record.weak_calls, 16);
        let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 8);
        assert!(dir.path().join(RECORD_FILE).is_file());
    }

    #[test]
    fn metrics_are_reproducible_across_parallelism() {
        let a = run_experiment(&boost_config()).unwrap();
        let mut cfg = boost_config();
        cfg.parallelism = 3;
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn failure_leaves_incomplete_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = boost_config();
        cfg.out = Some(dir.path().to_path_buf());
        cfg.engine.as_mut().unwrap().max_weak_calls = Some(3);
        assert!(matches!(run_experiment(&cfg), Err(Error::Resource(_))));
        let text = std::fs::read_to_string(dir.path().join(RECORD_FILE)).unwrap();
        let rec: RunRecord = serde_json::from_str(text.trim()).unwrap();
        assert!(rec.incomplete);
        assert!(!rec.passed());
    }

    #[test]
    fn oracle_mode() {
        let mut cfg = ExperimentConfig::new(Mode::Oracle, 0);
        cfg.oracle = Some(OracleSection { n: 3, beta: 0.1 });
        let out = run_experiment(&cfg).unwrap();
        let v = out.record.results["error_probability"].as_f64().unwrap();
        assert!((v - 0.352).abs() < 1e-15);
    }
}
