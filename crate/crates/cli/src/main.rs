use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use plab_cli::config::{ExperimentConfig, Kind, DEFAULT_SEED};
use plab_cli::{emit_table, run_config, RunReport};

#[derive(Parser)]
#[command(name = "plab", version, about = "Learning-theory and state-discrimination experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Quantile EMX learner against a distribution file.
    Emx {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sweep_d: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Quantile learner behind a uniform binning of [0, 1].
    Coarse {
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        dist: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sweep_bits: Option<Vec<u32>>,
        #[command(flatten)]
        common: Common,
    },
    /// Monotone compression schemes.
    Compress {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sweep_m: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Pure-state discrimination.
    Quantum {
        #[command(subcommand)]
        action: QuantumCommand,
    },
    /// PL feasibility checks.
    Feasible {
        #[command(subcommand)]
        solver: FeasibleCommand,
    },
    /// Runs a JSON experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the sweep of a report as CSV.
    Table {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Demo,
    Lemma1,
}

#[derive(Subcommand)]
enum QuantumCommand {
    Discriminate {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        copies: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        sweep_gamma: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sweep_copies: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum FeasibleCommand {
    /// Exact LP over a classical kernel polytope.
    Lp {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        polytope: Option<PathBuf>,
        /// Rational, e.g. 1/3 or 0.25.
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        delta: String,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical POVM search over d-copy states.
    Sdp {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        copies: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn config(kind: Kind, common: &Common) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.seed = common.seed;
    cfg.output = common.out.clone();
    cfg
}

fn path_value(p: &Path) -> serde_json::Value {
    json!(p)
}

fn build(command: Command) -> Result<Option<(ExperimentConfig, PathBuf)>> {
    let cwd = PathBuf::from(".");
    let cfg = match command {
        Command::Emx { epsilon, delta, dist, trials, d, sweep_d, common } => {
            let mut cfg = config(Kind::Emx, &common);
            cfg.set("epsilon", epsilon);
            cfg.set("delta", delta);
            cfg.set("dist", path_value(&dist));
            cfg.set("trials", json!(trials));
            cfg.set("d", json!(d));
            cfg.set("sweep_d", json!(sweep_d));
            cfg
        }
        Command::Coarse { bits, epsilon, delta, dist, trials, d, atoms, sweep_bits, common } => {
            let mut cfg = config(Kind::Coarse, &common);
            cfg.set("bits", bits);
            cfg.set("epsilon", epsilon);
            cfg.set("delta", delta);
            cfg.set("dist", json!(dist));
            cfg.set("trials", json!(trials));
            cfg.set("d", json!(d));
            cfg.set("atoms", json!(atoms));
            cfg.set("sweep_bits", json!(sweep_bits));
            cfg
        }
        Command::Compress { mode, m, trials, sweep_m, common } => {
            let mut cfg = config(Kind::Compress, &common);
            cfg.set(
                "mode",
                match mode {
                    Mode::Demo => "demo",
                    Mode::Lemma1 => "lemma1",
                },
            );
            cfg.set("m", json!(m));
            cfg.set("trials", json!(trials));
            cfg.set("sweep_m", json!(sweep_m));
            cfg
        }
        Command::Quantum {
            action: QuantumCommand::Discriminate { gamma, copies, delta, sweep_gamma, sweep_copies, common },
        } => {
            let mut cfg = config(Kind::Quantum, &common);
            cfg.set("action", "discriminate");
            cfg.set("gamma", gamma);
            cfg.set("copies", copies);
            cfg.set("delta", json!(delta));
            cfg.set("sweep_gamma", json!(sweep_gamma));
            cfg.set("sweep_copies", json!(sweep_copies));
            cfg
        }
        Command::Feasible { solver: FeasibleCommand::Lp { task, polytope, epsilon, delta, common } } => {
            let mut cfg = config(Kind::FeasibleLp, &common);
            cfg.set("task", path_value(&task));
            cfg.set("polytope", json!(polytope));
            cfg.set("epsilon", epsilon);
            cfg.set("delta", delta);
            cfg
        }
        Command::Feasible { solver: FeasibleCommand::Sdp { states, task, copies, epsilon, delta, common } } => {
            let mut cfg = config(Kind::FeasibleSdp, &common);
            cfg.set("states", path_value(&states));
            cfg.set("task", path_value(&task));
            cfg.set("copies", copies);
            cfg.set("epsilon", epsilon);
            cfg.set("delta", delta);
            cfg
        }
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            // a config's own output is relative to the config; --out to the shell
            match out {
                Some(out) => cfg.output = Some(out),
                None => cfg.output = cfg.output.map(|o| if o.is_absolute() { o } else { base.join(o) }),
            }
            return Ok(Some((cfg, base)));
        }
        Command::Table { report, out } => {
            let report = RunReport::load(&report)?;
            emit_table(&report, &out)?;
            return Ok(None);
        }
    };
    Ok(Some((cfg, cwd)))
}

fn main_inner() -> Result<()> {
    let cli = Cli::parse();
    let Some((cfg, base)) = build(cli.command)? else {
        return Ok(());
    };
    let report = run_config(&cfg, &base)?;
    match &cfg.output {
        Some(path) => report.write(path).with_context(|| format!("writing report {}", path.display())),
        None => {
            print!("{}", report.to_json_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
