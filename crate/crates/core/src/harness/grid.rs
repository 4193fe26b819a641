//! The `(p, R, t)` tradeoff grid.
//!
//! Upper grids boost the configured dataset at each point and certify the
//! result; adversary grids measure learners on the hard instance. Points run
//! on a bounded pool and a failing point is recorded, not fatal.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, GridKind};
use super::experiment::build_learner;
use super::records::Verdict;
use crate::adversary::{adversary_grid, expected_majority_loss, GridSpec};
use crate::engine::{self, certify_margins, pool_size_for_round_guarantee, rounds_for_margin};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Fraction of seeds per `R` that must certify the margin.
pub const MARGIN_SUCCESS_RATE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpperRow {
    pub r: usize,
    pub p: usize,
    /// Pool size; a real because the default formula overflows integers.
    pub t: f64,
    pub seed_index: usize,
    pub status: String,
    pub min_margin: Option<f64>,
    pub margin_ok: bool,
    pub rounds_meeting_z_product: usize,
    pub max_round_log_z: Option<f64>,
    pub weak_calls: u64,
    /// Expected loss of the majority decoder with `pR` biased rows.
    pub adversary_loss: f64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub table: String,
    /// Rows of an upper grid; empty for adversary grids.
    pub upper: Vec<UpperRow>,
    pub verdicts: Vec<Verdict>,
    pub results: serde_json::Value,
    pub fingerprint: Vec<u8>,
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn thread_pool(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))
}

fn upper_point(cfg: &ExperimentConfig, seed: u64, r: usize, p: Option<usize>, t: Option<usize>, s: usize) -> UpperRow {
    let mut row = UpperRow {
        r,
        p: p.unwrap_or(0),
        t: t.map_or(f64::NAN, |t| t as f64),
        seed_index: s,
        status: "ok".into(),
        min_margin: None,
        margin_ok: false,
        rounds_meeting_z_product: 0,
        max_round_log_z: None,
        weak_calls: 0,
        adversary_loss: f64::NAN,
        error: String::new(),
    };
    let result = (|| -> Result<()> {
        let section = cfg.engine()?;
        let grid = cfg.grid()?;
        let data = cfg.dataset()?.load(derive_seed(seed, &[s as u64, 0]))?;
        let learner = build_learner(section, &data)?;
        let gamma = section.gamma;
        let m = data.sample.len();
        row.p = p.unwrap_or_else(|| rounds_for_margin(m, gamma, r));
        let t_real = match t {
            Some(t) => t as f64,
            None => pool_size_for_round_guarantee(r, section.c_n, learner.vc_dimension().max(1.0), grid.delta),
        };
        row.t = t_real;
        row.adversary_loss = expected_majority_loss(m, row.p * r, gamma)?;
        if !(t_real <= usize::MAX as f64) {
            return Err(Error::Resource(format!("pool size t = {t_real:e} does not fit in memory")));
        }
        let mut ecfg = section.engine_config(derive_seed(seed, &[s as u64, 1]), 1);
        ecfg.rounds = row.p;
        ecfg.steps_per_round = r;
        ecfg.pool_size = t_real as usize;
        let out = engine::run(&ecfg, &data.sample, learner.as_ref())?;
        let rep = certify_margins(&out.classifier, &out.trace, &data.sample)?;
        row.min_margin = rep.min_margin;
        row.margin_ok = rep.min_margin.is_some_and(|v| v > gamma / 8.0);
        row.rounds_meeting_z_product = rep.rounds_meeting_z_product;
        row.max_round_log_z = out.trace.round_log_z_products().into_iter().reduce(f64::max);
        row.weak_calls = out.trace.weak_calls;
        Ok(())
    })();
    if let Err(e) = result {
        row.status = "error".into();
        row.error = e.to_string();
    }
    row
}

fn upper_grid(cfg: &ExperimentConfig, seed: u64) -> Result<GridOutcome> {
    let grid = cfg.grid()?;
    let gamma = cfg.engine()?.gamma;
    let mut tasks = Vec::new();
    for &r in &grid.rs {
        let ps: Vec<Option<usize>> = grid.ps.as_ref().map_or(vec![None], |v| v.iter().map(|&p| Some(p)).collect());
        let ts: Vec<Option<usize>> = grid.ts.as_ref().map_or(vec![None], |v| v.iter().map(|&t| Some(t)).collect());
        for &p in &ps {
            for &t in &ts {
                for s in 0..grid.seeds {
                    tasks.push((r, p, t, s));
                }
            }
        }
    }
    let rows: Vec<UpperRow> = thread_pool(cfg.parallelism)?.install(|| {
        tasks
            .par_iter()
            .map(|&(r, p, t, s)| upper_point(cfg, seed, r, p, t, s))
            .collect()
    });
    let mut verdicts = Vec::new();
    let mut summary = Vec::new();
    for &r in &grid.rs {
        let mine: Vec<&UpperRow> = rows.iter().filter(|x| x.r == r).collect();
        let ok = mine.iter().filter(|x| x.margin_ok).count();
        let errors = mine.iter().filter(|x| x.status != "ok").count();
        let rate = ok as f64 / mine.len().max(1) as f64;
        verdicts.push(Verdict::new(
            format!("margin_rate[R={r}]"),
            rate >= MARGIN_SUCCESS_RATE,
            format!(
                "{ok}/{} runs with min margin > γ/8 = {}; {errors} failed to run",
                mine.len(),
                gamma / 8.0
            ),
        ));
        summary.push(json!({ "r": r, "certified": ok, "runs": mine.len(), "errors": errors }));
    }
    Ok(GridOutcome {
        table: csv_text(&rows)?,
        upper: rows.clone(),
        verdicts,
        results: json!({ "kind": "upper", "per_r": summary, "failures": rows.iter().filter(|x| x.status != "ok").map(|x| &x.error).collect::<Vec<_>>() }),
        fingerprint: Vec::new(),
    })
}

#[derive(Serialize)]
struct AdversaryRow<'a> {
    p: usize,
    r: usize,
    votes: usize,
    learner: &'a str,
    trials: usize,
    mean: f64,
    half_width: f64,
    exact_majority: f64,
    floor_calibrated: f64,
    halt_rate: f64,
    halt_bound: f64,
}

fn adversary_points(cfg: &ExperimentConfig, seed: u64) -> Result<GridOutcome> {
    let grid = cfg.grid()?;
    let section = cfg.adversary()?;
    let spec = GridSpec {
        base: section.params(),
        rs: grid.rs.clone(),
        ps: grid.ps.clone().unwrap_or_else(|| vec![section.p]),
        learners: section.learners.clone(),
        trials: section.trials,
        seed,
        ml_widths: grid.ml_widths,
    };
    let report = thread_pool(cfg.parallelism)?.install(|| adversary_grid(&spec))?;
    let mut rows = Vec::new();
    for pt in &report.points {
        for e in &pt.estimates {
            rows.push(AdversaryRow {
                p: pt.p,
                r: pt.r,
                votes: pt.votes,
                learner: e.learner.name(),
                trials: e.trials,
                mean: e.mean,
                half_width: e.half_width,
                exact_majority: pt.exact_majority,
                floor_calibrated: pt.floor_calibrated,
                halt_rate: e.halt_rate,
                halt_bound: e.halt_bound,
            });
        }
    }
    let list = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join("; ") };
    let verdicts = vec![
        Verdict::new("ml_floor", report.ml_violations.is_empty(), list(&report.ml_violations)),
        Verdict::new(
            "monotone_in_pr",
            report.monotone_violations.is_empty(),
            list(&report.monotone_violations),
        ),
        Verdict::new(
            "calibrated_floor",
            report.calibrated_c_l.is_some() && report.floor_violations.is_empty(),
            format!("C_l = {:?}; {}", report.calibrated_c_l, list(&report.floor_violations)),
        ),
    ];
    Ok(GridOutcome {
        table: csv_text(&rows)?,
        upper: Vec::new(),
        verdicts,
        results: json!({
            "kind": "adversary",
            "calibrated_c_l": report.calibrated_c_l,
            "halt_violations": report.halt_violations,
        }),
        fingerprint: Vec::new(),
    })
}

pub fn tradeoff_grid(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    let seed = cfg.seed()?;
    let grid = cfg.grid()?;
    if grid.rs.is_empty() || grid.rs.contains(&0) {
        return Err(Error::Config("grid rs must be non-empty and positive".into()));
    }
    match grid.kind {
        GridKind::Upper => upper_grid(cfg, seed),
        GridKind::Adversary => adversary_points(cfg, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DatasetConfig, EngineSection, GridSection, Mode};

    fn upper(ts: Option<Vec<usize>>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Mode::Grid, 3);
        cfg.parallelism = 2;
        cfg.dataset = Some(DatasetConfig::PlantedVote {
            m: 60,
            class_size: 8,
            voters: 3,
            gamma_star: 0.3,
        });
        cfg.engine = Some(EngineSection {
            gamma: 0.2,
            rounds: 1,
            steps_per_round: 1,
            pool_size: 1,
            subsample_size: None,
            full_sample: false,
            c_n: 1.0,
            weak: None,
            gamma_target: None,
            selection: None,
            snapshots: None,
            max_weak_calls: None,
        });
        cfg.grid = Some(GridSection {
            kind: GridKind::Upper,
            rs: vec![1, 2],
            ps: None,
            ts,
            delta: 0.1,
            seeds: 2,
            ml_widths: 3.0,
        });
        cfg
    }

    #[test]
    fn explicit_pool_sizes_run() {
        let g = tradeoff_grid(&upper(Some(vec![8]))).unwrap();
        assert_eq!(g.table.lines().count(), 1 + 4);
        assert!(!g.table.contains(",error,"));
        assert_eq!(g.verdicts.len(), 2);
    }

    #[test]
    fn infeasible_points_are_recorded() {
        let g = tradeoff_grid(&upper(None)).unwrap();
        assert_eq!(g.table.matches(",error,").count(), 4);
        assert!(g.verdicts.iter().all(|v| !v.passed));
    }
}
