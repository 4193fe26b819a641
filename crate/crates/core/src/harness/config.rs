//! Experiment configuration: a TOML file of `key = value` lines under
//! section headers, with command-line overrides layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryParams, Constants, LearnerKind, OracleMode};
use crate::engine::{EngineConfig, SelectionRule, SnapshotMode, Subsample, DEFAULT_MAX_SNAPSHOT_BYTES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Boost,
    AdaboostBaseline,
    Adversary,
    Oracle,
    Verify,
    Grid,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Boost => "boost",
            Mode::AdaboostBaseline => "adaboost-baseline",
            Mode::Adversary => "adversary",
            Mode::Oracle => "oracle",
            Mode::Verify => "verify",
            Mode::Grid => "grid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Csv {
        path: PathBuf,
    },
    /// Labels from a margin-`γ*` vote over a random finite class.
    PlantedVote {
        m: usize,
        class_size: usize,
        voters: usize,
        gamma_star: f64,
    },
    /// Uniform features in `[0, 1)` with uniform random labels.
    Random {
        m: usize,
        features: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeakChoice {
    Stump,
    Erm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionChoice {
    MaxAdvantage,
    FirstFound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotChoice {
    EveryStep,
    RoundStarts,
}

fn one() -> usize {
    1
}

fn c_n_default() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub gamma: f64,
    /// `p`.
    pub rounds: usize,
    /// `R`.
    #[serde(default = "one")]
    pub steps_per_round: usize,
    /// `t`.
    pub pool_size: usize,
    /// Fixed `n`; when absent, `n = ⌈c_n d / γ²⌉`.
    pub subsample_size: Option<usize>,
    #[serde(default)]
    pub full_sample: bool,
    #[serde(default = "c_n_default")]
    pub c_n: f64,
    pub weak: Option<WeakChoice>,
    pub gamma_target: Option<f64>,
    pub selection: Option<SelectionChoice>,
    pub snapshots: Option<SnapshotChoice>,
    pub max_weak_calls: Option<u64>,
}

impl EngineSection {
    pub fn engine_config(&self, seed: u64, parallelism: usize) -> EngineConfig {
        let subsample = if self.full_sample {
            Subsample::FullSample
        } else if let Some(n) = self.subsample_size {
            Subsample::Fixed(n)
        } else {
            Subsample::FromCapacity { c_n: self.c_n }
        };
        let mut cfg = EngineConfig::new(self.gamma, self.rounds, self.steps_per_round, self.pool_size, seed)
            .with_subsample(subsample)
            .with_parallelism(parallelism)
            .with_selection(match self.selection.unwrap_or(SelectionChoice::MaxAdvantage) {
                SelectionChoice::MaxAdvantage => SelectionRule::MaxAdvantage,
                SelectionChoice::FirstFound => SelectionRule::FirstFound,
            })
            .with_snapshots(match self.snapshots.unwrap_or(SnapshotChoice::EveryStep) {
                SnapshotChoice::EveryStep => SnapshotMode::EveryStep,
                SnapshotChoice::RoundStarts => SnapshotMode::RoundStarts,
            });
        if let Some(b) = self.max_weak_calls {
            cfg.max_weak_calls = u128::from(b);
        }
        cfg.max_snapshot_bytes = DEFAULT_MAX_SNAPSHOT_BYTES;
        cfg
    }
}

fn yes() -> bool {
    true
}

fn oracle_default() -> OracleMode {
    OracleMode::Hypotheses
}

fn learners_default() -> Vec<LearnerKind> {
    LearnerKind::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub m: usize,
    pub d: f64,
    #[serde(default = "one")]
    pub p: usize,
    #[serde(default = "one")]
    pub r: usize,
    pub t: usize,
    pub gamma: f64,
    #[serde(default = "c_n_default")]
    pub c_s: f64,
    #[serde(default = "c_n_default")]
    pub c_b: f64,
    #[serde(default = "c_n_default")]
    pub c_l: f64,
    #[serde(default = "oracle_default")]
    pub oracle: OracleMode,
    #[serde(default = "yes")]
    pub extension: bool,
    pub trials: usize,
    #[serde(default = "learners_default")]
    pub learners: Vec<LearnerKind>,
    pub max_matrix_bytes: Option<u64>,
}

impl AdversarySection {
    pub fn params(&self) -> AdversaryParams {
        let mut a = AdversaryParams::new(self.m, self.d, self.p, self.r, self.t, self.gamma);
        a.constants = Constants {
            c_s: self.c_s,
            c_b: self.c_b,
            c_l: self.c_l,
        };
        a.oracle = self.oracle;
        a.extension = self.extension;
        if let Some(b) = self.max_matrix_bytes {
            a.max_matrix_bytes = u128::from(b);
        }
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Engine runs on the dataset, certifying margins.
    Upper,
    /// Expected-loss measurements on the hard instance.
    Adversary,
}

fn delta_default() -> f64 {
    0.1
}

fn widths_default() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub kind: GridKind,
    pub rs: Vec<usize>,
    /// Explicit `p` values; upper grids default to `⌈4 ln m/(γ² R)⌉`.
    pub ps: Option<Vec<usize>>,
    /// Explicit `t` values; upper grids default to `R⌈exp(16 c_n d R)⌉⌈ln(R/δ)⌉`.
    pub ts: Option<Vec<usize>>,
    #[serde(default = "delta_default")]
    pub delta: f64,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default = "widths_default")]
    pub ml_widths: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: usize,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Mandatory; there is no clock-derived default.
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub parallelism: usize,
    /// Output directory for records and tables.
    pub out: Option<PathBuf>,
    pub dataset: Option<DatasetConfig>,
    pub engine: Option<EngineSection>,
    pub adversary: Option<AdversarySection>,
    pub grid: Option<GridSection>,
    pub oracle: Option<OracleSection>,
}

/// Values given on the command line, applied over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// A config with only a mode and seed set.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed: Some(seed),
            parallelism: 1,
            out: None,
            dataset: None,
            engine: None,
            adversary: None,
            grid: None,
            oracle: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    /// Reads a file; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        if let Some(DatasetConfig::Csv { path: data }) = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(p) = o.parallelism {
            self.parallelism = p;
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| cfg_err("seed is mandatory"))
    }

    fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| cfg_err(format!("mode {} needs a [{name}] section", self.mode.as_str())))
    }

    pub fn engine(&self) -> Result<&EngineSection> {
        self.require(&self.engine, "engine")
    }

    pub fn dataset(&self) -> Result<&DatasetConfig> {
        self.require(&self.dataset, "dataset")
    }

    pub fn adversary(&self) -> Result<&AdversarySection> {
        self.require(&self.adversary, "adversary")
    }

    pub fn grid(&self) -> Result<&GridSection> {
        self.require(&self.grid, "grid")
    }

    pub fn oracle(&self) -> Result<&OracleSection> {
        self.require(&self.oracle, "oracle")
    }

    /// Checks that the sections the mode needs are present and that
    /// referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.parallelism == 0 {
            return Err(cfg_err("parallelism must be at least 1"));
        }
        match self.mode {
            Mode::Boost | Mode::AdaboostBaseline => {
                self.engine()?;
                self.dataset()?;
            }
            Mode::Adversary => {
                self.adversary()?;
            }
            Mode::Oracle => {
                self.oracle()?;
            }
            Mode::Verify => {}
            Mode::Grid => match self.grid()?.kind {
                GridKind::Upper => {
                    self.engine()?;
                    self.dataset()?;
                }
                GridKind::Adversary => {
                    self.adversary()?;
                }
            },
        }
        if let Some(DatasetConfig::Csv { path }) = &self.dataset {
            if !path.is_file() {
                return Err(cfg_err(format!("dataset {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOST: &str = r#"
mode = "boost"
seed = 7
parallelism = 2

[dataset]
source = "planted-vote"
m = 200
class_size = 16
voters = 5
gamma_star = 0.2

[engine]
gamma = 0.1
rounds = 4
steps_per_round = 2
pool_size = 4
subsample_size = 100
"#;

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::parse(BOOST).unwrap();
        assert_eq!(cfg.mode, Mode::Boost);
        assert_eq!(cfg.parallelism, 2);
        assert!(matches!(cfg.dataset, Some(DatasetConfig::PlantedVote { m: 200, .. })));
        let e = cfg.engine().unwrap().engine_config(7, 2);
        assert_eq!(e.subsample, Subsample::Fixed(100));
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = ExperimentConfig::parse(&BOOST.replace("seed = 7\n", "")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = cfg;
        cfg.apply(&Overrides {
            seed: Some(1),
            ..Default::default()
        });
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_missing_sections() {
        assert!(ExperimentConfig::parse(&format!("{BOOST}\nbogus = 1\n")).is_err());
        let cfg = ExperimentConfig::parse("mode = \"adversary\"\nseed = 1\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_dataset_file() {
        let cfg = ExperimentConfig::parse(
            "mode = \"boost\"\nseed = 1\n[dataset]\nsource = \"csv\"\npath = \"/nonexistent.csv\"\n\
             [engine]\ngamma = 0.1\nrounds = 1\npool_size = 1\n",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
