//! `vista` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 invariant violation
//! under `--strict`, 1 anything else.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use vista_core::diagnostics::{check_run, RunVerdict};
use vista_core::harness::{compare, run_batch, write_batch, write_comparison, BatchResult, ExperimentConfig, RunRecord};

#[derive(Parser)]
#[command(name = "vista", version, about = "Adaptive-threshold gradient descent simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the equilibrium curve described by a config and write it as CSV.
    TabulateCurve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a multi-seed batch for one policy.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        batch: BatchArgs,
    },
    /// Run several policies on a shared setup and rank them.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        batch: BatchArgs,
    },
    /// Check recorded runs (JSON lines) against the pathwise invariants.
    Check {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Args)]
struct BatchArgs {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with code 3 if any run violates a pathwise invariant.
    #[arg(long)]
    strict: bool,
    /// Also write every run as JSON lines.
    #[arg(long)]
    dump_runs: bool,
}

/// Marker for invariant failures found under `--strict`.
#[derive(Debug)]
struct StrictFailure(usize);

impl std::fmt::Display for StrictFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} run(s) violate pathwise invariants", self.0)
    }
}

impl std::error::Error for StrictFailure {}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<StrictFailure>() {
            return 3;
        }
        if let Some(err) = cause.downcast_ref::<vista_core::Error>() {
            if err.is_config() {
                return 2;
            }
            if matches!(err, vista_core::Error::Invariant(_)) {
                return 3;
            }
        }
    }
    1
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::TabulateCurve { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let curve = cfg.tabulate_curve(seed)?;
            curve.save(&out)?;
            println!(
                "wrote {} points to {} (sigma2 in [{}, {}], pa in [{}, {}])",
                curve.len(),
                out.display(),
                curve.sigma2_min,
                curve.sigma2_max,
                curve.p_min,
                curve.p_max
            );
            Ok(())
        }
        Command::Run { config, out, batch } => {
            init_threads(batch.threads)?;
            let result = run_config(&config, &batch)?;
            let files = write_batch(&out, &result, batch.dump_runs)?;
            report(&result, &files);
            strict_check(&out, &result, batch.strict)
        }
        Command::Compare { configs, out, batch } => {
            init_threads(batch.threads)?;
            let mut results = Vec::with_capacity(configs.len());
            for path in &configs {
                results.push(run_config(path, &batch)?);
            }
            let table = compare(&results)?;
            for r in &results {
                let files = write_batch(&out, r, batch.dump_runs)?;
                report(r, &files);
            }
            write_comparison(&out, &table)?;
            println!("ranking by final mean squared gradient norm:");
            for (i, e) in table.ranking.iter().enumerate() {
                println!(
                    "  {}. {:<20} gradsq {:.6e} ± {:.2e}  loss {:.6}",
                    i + 1,
                    e.label,
                    e.final_mean_gradsq,
                    e.final_std_gradsq,
                    e.final_mean_loss
                );
            }
            for r in &results {
                strict_check(&out, r, batch.strict)?;
            }
            Ok(())
        }
        Command::Check { run, strict } => {
            let runs = read_runs(&run)?;
            let verdicts: Vec<RunVerdict> = runs.iter().map(check_run).collect();
            println!("{}", serde_json::to_string_pretty(&verdicts)?);
            let failed = verdicts.iter().filter(|v| !v.passed).count();
            if failed > 0 {
                eprintln!("{failed} of {} run(s) failed", verdicts.len());
                if strict {
                    return Err(StrictFailure(failed).into());
                }
            }
            Ok(())
        }
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(vista_core::Error::Config("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn run_config(path: &Path, args: &BatchArgs) -> anyhow::Result<BatchResult> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.run.runs = runs;
    }
    cfg.validate()?;
    let exp = cfg.build()?;
    Ok(run_batch(&exp)?)
}

fn report(result: &BatchResult, files: &[PathBuf]) {
    let f = result.aggregate.final_row();
    println!(
        "{}: {} runs x {} rounds, final mean loss {:.6}, final mean gradsq {:.6e}",
        result.echo.label,
        result.runs.len(),
        result.aggregate.rows.len(),
        f.mean_loss,
        f.mean_gradsq
    );
    for p in files {
        println!("  {}", p.display());
    }
}

fn strict_check(out: &Path, result: &BatchResult, strict: bool) -> anyhow::Result<()> {
    if !strict {
        return Ok(());
    }
    let failed: Vec<RunVerdict> = result.runs.iter().map(check_run).filter(|v| !v.passed).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let path = out.join(format!("{}_violations.json", result.echo.label));
    fs::write(&path, serde_json::to_string_pretty(&failed)?)?;
    eprintln!("invariant violations written to {}", path.display());
    Err(StrictFailure(failed.len()).into())
}

fn read_runs(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut runs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let run: RunRecord = serde_json::from_str(&line).map_err(|e| vista_core::Error::Parse {
            line: i + 1,
            column: e.column(),
            msg: e.to_string(),
        })?;
        runs.push(run);
    }
    if runs.is_empty() {
        bail!(vista_core::Error::Config(format!("{} contains no runs", path.display())));
    }
    Ok(runs)
}
