use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ambisense_cli::commands::{self, MetricsTask};
use ambisense_cli::formats::SCENARIO_FILE;
use ambisense_cli::oracle::{self, Tolerance};
use ambisense_cli::{CliError, CliResult, Scenario};
use clap::{Parser, Subcommand};

/// Ambient-RF sensing simulator.
#[derive(Debug, Parser)]
#[command(name = "ambisense", version, about)]
struct Cli {
    /// Scenario file, or `preset:<name>` for a bundled one. Defaults to the
    /// scenario echoed into the input directory.
    #[arg(long, global = true)]
    scenario: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides `run.rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; all available cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Oracle amplitude tolerance; the phase tolerance is ten times this in radians.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write per-channel baseband payloads for the scenario.
    Simulate,
    /// Compare RF-rate mixing with the closed-form baseband.
    Oracle,
    /// Reduce each baseband window to one point per channel.
    Sanitize {
        /// Directory holding `header.json` and the payloads; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Differential heatmaps from sanitized points.
    Beamform {
        /// Directory holding `points.csv`; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Velocity trace from sanitized points.
    Velocity {
        /// Directory holding `points.csv`; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// simulate, sanitize, velocity, and beamform in one go.
    Pipeline,
    /// Evaluate predictions against ground truth.
    Metrics {
        #[arg(long, value_enum)]
        task: MetricsTask,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

fn load_scenario(cli: &Cli, input: &Path) -> CliResult<Scenario> {
    let source = match &cli.scenario {
        Some(s) => s.clone(),
        None => {
            let echoed = input.join(SCENARIO_FILE);
            if !echoed.exists() {
                return Err(CliError::Usage(format!("no --scenario given and {} does not exist", echoed.display())));
            }
            echoed.to_string_lossy().into_owned()
        }
    };
    let mut env: Vec<(String, String)> = std::env::vars().collect();
    if let Some(seed) = cli.seed {
        env.push(("AMBISENSE_RUN__RNG_SEED".into(), seed.to_string()));
    }
    Scenario::load_with_env(&source, env)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up {n} threads: {e}")))?;
    }
    let out = &cli.out;
    match &cli.command {
        Command::Simulate => {
            let sc = load_scenario(cli, out)?;
            let summary = commands::simulate(&sc, out)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} channels of {} samples to {}", summary.channels, summary.samples_per_channel, out.display());
        }
        Command::Oracle => {
            let sc = load_scenario(cli, out)?;
            let tol = cli.tolerance.map_or_else(Tolerance::default, Tolerance::scaled);
            let report = oracle::run_oracle(&sc, &tol)?;
            ambisense_cli::formats::write_json(&out.join("oracle.json"), &report)?;
            println!(
                "compared {} of {} samples: max relative amplitude error {:.3e} (tolerance {:.1e}), max phase error {:.3e} rad (tolerance {:.1e})",
                report.samples_compared,
                report.samples_total,
                report.max_rel_amplitude_error,
                tol.amplitude,
                report.max_phase_error_rad,
                tol.phase_rad
            );
            if !report.pass {
                return Err(CliError::Tolerance("oracle disagreement exceeds tolerance".into()));
            }
        }
        Command::Sanitize { input } => {
            let input = input.as_deref().unwrap_or(out);
            let sc = load_scenario(cli, input)?;
            let pts = commands::sanitize(&sc, input, out)?;
            println!("{} windows x {} channels, {} without a point", pts.windows, pts.channels.len(), pts.gaps.len());
        }
        Command::Velocity { input } => {
            let input = input.as_deref().unwrap_or(out);
            let sc = load_scenario(cli, input)?;
            let (_, m) = commands::velocity(&sc, input, out)?;
            match m.mean_velocity_mps {
                Some(v) => println!("mean velocity {v:.4} m/s over {} samples", m.samples),
                None => println!("no velocity samples"),
            }
        }
        Command::Beamform { input } => {
            let input = input.as_deref().unwrap_or(out);
            let sc = load_scenario(cli, input)?;
            let frames = commands::beamform(&sc, input, out)?;
            println!("{} heatmap frames written to {}", frames.len(), out.display());
        }
        Command::Pipeline => {
            let sc = load_scenario(cli, out)?;
            let m = commands::pipeline(&sc, out)?;
            for w in &m.simulate.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(v) = m.velocity.mean_velocity_mps {
                println!("mean velocity {v:.4} m/s");
            }
            println!("{} heatmap frames, {} files in {}", m.heatmap_frames, m.files.len(), out.display());
        }
        Command::Metrics { task, pred, gt } => {
            let report = commands::metrics(*task, pred, gt, out)?;
            print!("{}", commands::format_metrics(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
