use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use allocsim::harness::{emit_report, run_experiment, scale_config, Mode};
use allocsim::model::{load_config, save_config, scenario_nonstationary, scenario_stationary, NonStationaryKind};
use allocsim::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

/// Online item allocation with preference learning: simulations and benchmarks.
#[derive(Parser, Debug)]
#[command(name = "allocsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the offline benchmark on a sampled arrival stream.
    Offline(RunArgs),
    /// Run the integrated UCB + online gradient algorithm on stationary arrivals.
    Stationary(RunArgs),
    /// Segment the horizon and run the integrated algorithm per segment.
    Nonstationary(RunArgs),
    /// Run the highest-reward-first baseline.
    Greedy(RunArgs),
    /// Build the segmentation plan only and write plan.csv.
    SegmentPlan(RunArgs),
    /// Write one of the built-in scenario configurations as JSON.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the per-arrival trace.csv.
    #[arg(long)]
    trace: bool,
    /// Run the configuration rescaled to several horizons, e.g. `T=1e3,1e4,1e5`.
    /// Each cell is written to `<out>/T=<horizon>/`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScenarioKind {
    Stationary,
    ExtremeBudget,
    VaryingReward,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(value_enum)]
    kind: ScenarioKind,
    /// Expected number of arrivals.
    #[arg(long)]
    horizon: u64,
    /// Length of the non-stationary time span in hours.
    #[arg(long, default_value_t = 24.0)]
    hours: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct Grid(Vec<u64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let list = s.strip_prefix("T=").unwrap_or(s);
    list.split(',')
        .map(|item| {
            let v: f64 = item.trim().parse().map_err(|_| format!("invalid horizon `{item}`"))?;
            if v.is_nan() || v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
                return Err(format!("horizon `{item}` is not a positive integer"));
            }
            Ok(v as u64)
        })
        .collect::<Result<_, _>>()
        .map(Grid)
}

fn mode_of(command: &Command) -> Option<(Mode, &RunArgs)> {
    Some(match command {
        Command::Offline(a) => (Mode::Offline, a),
        Command::Stationary(a) => (Mode::Stationary, a),
        Command::Nonstationary(a) => (Mode::Nonstationary, a),
        Command::Greedy(a) => (Mode::Greedy, a),
        Command::SegmentPlan(a) => (Mode::SegmentPlan, a),
        Command::Scenario(_) => return None,
    })
}

/// Runs one cell and writes its report. Returns whether every offline solve converged.
fn run_cell(config: &allocsim::SimConfig, mode: Mode, out: &Path, trace: bool) -> anyhow::Result<bool> {
    let output = run_experiment(config, mode).with_context(|| format!("{} run failed", mode.as_str()))?;
    emit_report(&output, out, trace).with_context(|| format!("writing report to {}", out.display()))?;
    Ok(output.report.offline_converged)
}

/// Concatenates the per-cell summaries into `<out>/grid_summary.csv` with a leading `horizon` column.
fn merge_summaries(out: &Path, horizons: &[u64]) -> anyhow::Result<()> {
    let mut merged = String::new();
    for (k, t) in horizons.iter().enumerate() {
        let path = out.join(format!("T={t}")).join("summary.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::Io { context: path.clone(), source: e })?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
        if k == 0 {
            merged.push_str(&format!("horizon,{header}\n"));
        }
        for line in lines {
            merged.push_str(&format!("{t},{line}\n"));
        }
    }
    let path = out.join("grid_summary.csv");
    fs::write(&path, merged).map_err(|e| Error::Io { context: path, source: e })?;
    Ok(())
}

fn run(args: &RunArgs, mode: Mode) -> anyhow::Result<bool> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let Some(Grid(horizons)) = &args.grid else {
        return run_cell(&config, mode, &args.out, args.trace);
    };
    if mode == Mode::SegmentPlan {
        bail!(Error::Validation("--grid does not apply to segment-plan".into()));
    }
    let cells = horizons
        .iter()
        .map(|&t| scale_config(&config, t).map(|c| (t, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<anyhow::Result<bool>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|(t, c)| {
                let dir = args.out.join(format!("T={t}"));
                scope.spawn(move || run_cell(c, mode, &dir, args.trace))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked")))).collect()
    });
    let mut converged = true;
    for r in results {
        converged &= r?;
    }
    merge_summaries(&args.out, horizons)?;
    Ok(converged)
}

fn write_scenario(args: &ScenarioArgs) -> anyhow::Result<()> {
    let config = match args.kind {
        ScenarioKind::Stationary => scenario_stationary(args.horizon, args.seed)?,
        ScenarioKind::ExtremeBudget => {
            scenario_nonstationary(NonStationaryKind::ExtremeBudget, args.horizon, args.hours, args.seed)?
        }
        ScenarioKind::VaryingReward => {
            scenario_nonstationary(NonStationaryKind::VaryingReward, args.horizon, args.hours, args.seed)?
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io { context: parent.to_path_buf(), source: e })?;
    }
    save_config(&config, &args.out)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io { .. }) => EXIT_IO,
        Some(Error::NonConvergence { .. }) => EXIT_NON_CONVERGENCE,
        Some(e) if e.is_config_error() => EXIT_CONFIG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (&cli.command, mode_of(&cli.command)) {
        (Command::Scenario(args), _) => write_scenario(args).map(|_| true),
        (_, Some((mode, args))) => run(args, mode),
        (_, None) => unreachable!("every other subcommand has a mode"),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: offline solver did not converge; outputs were written");
            ExitCode::from(EXIT_NON_CONVERGENCE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
