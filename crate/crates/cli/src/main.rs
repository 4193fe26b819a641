use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parboost::harness::config::OracleSection;
use parboost::harness::{run_experiment, ExperimentConfig, Mode, Overrides, RunOutput};
use parboost::Result;

/// Parallel boosting experiments.
///
/// Logging is controlled by the BOOST_LOG environment variable
/// (e.g. BOOST_LOG=debug).
#[derive(Parser, Debug)]
#[command(name = "boost", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the run record and tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the identity suite on small seeded instances.
    Verify { config: Option<PathBuf> },
    /// Run the tradeoff grid from a config's [grid] section.
    Grid { config: PathBuf },
    /// Print the majority-vote error probability for n votes of bias beta.
    Oracle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
    },
    /// Measure learners on the hard instance.
    Adversary { config: PathBuf },
}

fn load(path: &Path, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    Ok(cfg)
}

fn build(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.command {
        Command::Run { config } => load(config, None)?,
        Command::Verify { config: Some(c) } => load(c, Some(Mode::Verify))?,
        Command::Verify { config: None } => {
            let mut c = ExperimentConfig::new(Mode::Verify, 0);
            c.seed = None;
            c
        }
        Command::Grid { config } => load(config, Some(Mode::Grid))?,
        Command::Adversary { config } => load(config, Some(Mode::Adversary))?,
        Command::Oracle { n, beta } => {
            let mut c = ExperimentConfig::new(Mode::Oracle, 0);
            c.oracle = Some(OracleSection { n: *n, beta: *beta });
            c
        }
    };
    cfg.apply(&Overrides {
        seed: cli.common.seed,
        out: cli.common.out.clone(),
        parallelism: cli.common.parallelism,
    });
    Ok(cfg)
}

fn report(out: &RunOutput) {
    let rec = &out.record;
    if rec.mode == Mode::Oracle.as_str() {
        println!("{}", rec.results["error_probability"]);
        return;
    }
    println!("mode {} seed {} input {}", rec.mode, rec.seed, &rec.input_hash[..16]);
    if let Some(m) = rec.min_margin {
        println!("min margin {m}");
    }
    if rec.weak_calls > 0 {
        println!("weak calls {}", rec.weak_calls);
    }
    for v in &rec.verdicts {
        println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    if let Some(t) = &out.table {
        if out.record.mode != Mode::Grid.as_str() || t.lines().count() <= 40 {
            print!("{t}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOOST_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = build(&cli).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(out) => {
            report(&out);
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
