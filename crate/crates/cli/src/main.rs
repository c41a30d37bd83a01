use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rachlearn_core::{engine, SimConfig};

mod error;
mod experiment;
mod formulas;

use error::{CliError, Result};
use experiment::{ExperimentSpec, PointSummary, Summary};

/// Critical-message delay and learning simulator for massive-IoT random access.
#[derive(Debug, Parser)]
#[command(name = "rachlearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a closed-form expression.
    Analytics {
        #[command(subcommand)]
        formula: formulas::Formula,
    },
    /// Run a Monte Carlo sweep and write CSV and JSON results.
    Simulate {
        /// Experiment file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the experiment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides `base.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Runs per sweep point; overrides the experiment.
        #[arg(long)]
        runs: Option<u32>,
        /// Worker threads.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        parallel: u16,
        /// Also write the learning hops of each point's first run.
        #[arg(long)]
        trace: bool,
    },
    /// Check a configuration or experiment file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Analytics { formula } => {
            println!("{}", formulas::evaluate(&formula)?);
            Ok(())
        }
        Command::Simulate {
            config,
            out,
            seed,
            runs,
            parallel,
            trace,
        } => simulate(&config, out, seed, runs, parallel as usize, trace),
        Command::Validate { config } => validate(&config),
    }
}

fn simulate(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    runs: Option<u32>,
    parallel: usize,
    trace: bool,
) -> Result<()> {
    let mut spec: ExperimentSpec = experiment::parse_json(path)?;
    if let Some(seed) = seed {
        spec.base.master_seed = seed;
    }
    let runs = runs.or(spec.runs).unwrap_or(spec.base.runs);
    if runs == 0 {
        return Err(CliError::Usage("runs must be at least 1".into()));
    }
    let dir = out.or_else(|| spec.output_dir.clone()).ok_or_else(|| {
        CliError::Usage("no output directory; pass --out or set output_dir".into())
    })?;
    let points = spec.points()?;
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;

    let param = spec.sweep.param;
    let master = spec.base.master_seed;
    let mut summaries = Vec::with_capacity(points.len());
    for point in &points {
        let tag = point.tag(param);
        let agg = engine::monte_carlo(&point.config, runs, master, parallel)?;
        experiment::write_cdf(&dir.join(format!("delay_cdf_{tag}.csv")), &agg)?;
        experiment::write_learned(&dir.join(format!("learned_frac_{tag}.csv")), &agg)?;
        if trace {
            let mut t = engine::Trace::default();
            engine::run_traced(&point.config, engine::run_seed(master, 0), Some(&mut t))?;
            let path = dir.join(format!("trace_{tag}.csv"));
            let file = fs::File::create(&path).map_err(CliError::io(&path))?;
            t.write_csv(std::io::BufWriter::new(file))
                .map_err(CliError::io(&path))?;
        }
        let s = PointSummary::new(point.value, &agg);
        println!(
            "{param} = {}: satisfaction {:.4}, mean delay {} ms, peak learned {:.2}%",
            point.value,
            s.threshold_satisfaction,
            s.mean_delay_ms.map_or("n/a".into(), |m| format!("{m:.4}")),
            s.peak_learned_correct_pct
        );
        summaries.push(s);
    }
    let summary = Summary {
        sweep: param,
        runs,
        master_seed: master,
        points: summaries,
    };
    experiment::write_summary(&dir.join("summary.json"), &summary)
}

fn print_rules(label: &str, cfg: &SimConfig) -> bool {
    let mut ok = true;
    for check in cfg.rule_checks() {
        ok &= check.passed;
        let verdict = if check.passed { "pass" } else { "FAIL" };
        if check.detail.is_empty() {
            println!("{label}{verdict} {}", check.rule);
        } else {
            println!("{label}{verdict} {}: {}", check.rule, check.detail);
        }
    }
    ok
}

fn validate(path: &Path) -> Result<()> {
    let value: serde_json::Value = experiment::parse_json(path)?;
    let is_experiment = value.get("sweep").is_some();
    let ok = if is_experiment {
        let spec: ExperimentSpec = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut ok = true;
        for &v in &spec.sweep.values {
            let label = format!("[{} = {v}] ", spec.sweep.param);
            match spec.sweep.param.set(&spec.base, v) {
                Ok(cfg) => ok &= print_rules(&label, &cfg),
                Err(why) => {
                    println!("{label}FAIL {}: {why}", spec.sweep.param);
                    ok = false;
                }
            }
        }
        ok
    } else {
        let cfg: SimConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        print_rules("", &cfg)
    };
    if ok {
        println!("valid");
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is invalid", path.display())))
    }
}
