//! `sonoforce`: run force-tracking scenarios, batch matrices, reports,
//! tuning sweeps, and bandwidth measurements from the command line.
//!
//! Exit codes: 0 on success, 1 when a scenario fails at runtime, 2 on
//! configuration errors (bad files, bad flags, invalid scenarios).

use clap::{Args, Parser, Subcommand, ValueEnum};
use sonoforce::control::ziegler_nichols;
use sonoforce::harness::{
    builtin_scenarios_seeded, emit_csv, emit_report, emit_svg, find_ultimate_gain, load_report,
    measure_bandwidth, report_text, run_matrix, run_scenario_row, Architecture, HarnessError,
    ReportRow, ScenarioSpec,
};
use sonoforce::plant::MotionProfile;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sonoforce",
    version,
    about = "Force-control simulation testbed for robotic ultrasound end-effectors"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Master seed override applied to every scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for traces, plots, and reports.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Physics integration step override, seconds.
    #[arg(long, global = true)]
    physics_dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its traces, plot, and metrics.
    Run {
        /// Scenario description (JSON).
        scenario: PathBuf,
    },
    /// Run a batch of scenarios and write the combined report.
    Matrix {
        /// Use the built-in experiment matrix.
        #[arg(long, conflicts_with = "dir")]
        builtin: bool,
        /// Load every *.json scenario file from this directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Run scenarios one at a time instead of on the thread pool.
        #[arg(long)]
        serial: bool,
        /// Also write per-replicate trace CSVs.
        #[arg(long)]
        traces: bool,
    },
    /// Render a previously written JSON report as a text table.
    Report {
        /// Report JSON produced by `matrix` or `run`.
        results: PathBuf,
    },
    /// Find the ultimate gain and Ziegler-Nichols starting gains.
    Tune {
        #[arg(long, value_enum)]
        architecture: ArchitectureArg,
        /// Platform motion during the sweep.
        #[arg(long, value_enum, default_value = "static")]
        profile: ProfileArg,
    },
    /// Measure the closed-loop -3 dB force-tracking bandwidth.
    Bandwidth {
        #[arg(long, value_enum)]
        architecture: ArchitectureArg,
        /// Reference amplitudes to sweep, N.
        #[arg(long)]
        amplitude: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchitectureArg {
    #[value(name = "end_effector", alias = "ee")]
    EndEffector,
    Arm,
}

impl From<ArchitectureArg> for Architecture {
    fn from(a: ArchitectureArg) -> Self {
        match a {
            ArchitectureArg::EndEffector => Architecture::EndEffector,
            ArchitectureArg::Arm => Architecture::Arm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Static,
    Breathing,
}

impl From<ProfileArg> for MotionProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Static => MotionProfile::Static,
            ProfileArg::Breathing => MotionProfile::quiet_breathing(),
        }
    }
}

enum CliError {
    /// Bad input: files, flags, scenario validation.
    Config(String),
    /// Scenarios that failed at runtime.
    Scenario(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Scenario(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario } => cmd_run(&scenario, &cli.global),
        Command::Matrix {
            builtin,
            dir,
            serial,
            traces,
        } => cmd_matrix(builtin, dir.as_deref(), serial, traces, &cli.global),
        Command::Report { results } => cmd_report(&results),
        Command::Tune {
            architecture,
            profile,
        } => cmd_tune(architecture.into(), profile.into()),
        Command::Bandwidth {
            architecture,
            amplitude,
        } => cmd_bandwidth(architecture.into(), &amplitude),
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create output directory {out:?}: {e}")))
}

fn load_scenario(path: &Path, global: &GlobalArgs) -> Result<ScenarioSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read scenario {path:?}: {e}")))?;
    let mut spec: ScenarioSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("bad scenario {path:?}: {e}")))?;
    apply_overrides(&mut spec, global);
    spec.validate()
        .map_err(|e| CliError::Config(format!("invalid scenario {path:?}: {e}")))?;
    Ok(spec)
}

fn apply_overrides(spec: &mut ScenarioSpec, global: &GlobalArgs) {
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    if let Some(dt) = global.physics_dt {
        spec.schedule.physics_dt = dt;
    }
}

fn write_outputs(
    spec: &ScenarioSpec,
    traces: &[sonoforce::SimTrace],
    out: &Path,
) -> Result<(), CliError> {
    for (i, trace) in traces.iter().enumerate() {
        let path = out.join(format!("{}-r{i}.csv", spec.name));
        emit_csv(trace, &path)?;
    }
    emit_svg(traces, &out.join(format!("{}.svg", spec.name)))?;
    Ok(())
}

fn cmd_run(path: &Path, global: &GlobalArgs) -> Result<(), CliError> {
    let spec = load_scenario(path, global)?;
    ensure_out_dir(&global.out)?;
    let (row, traces) = run_scenario_row(&spec)?;
    write_outputs(&spec, &traces, &global.out)?;
    let rows = vec![row];
    emit_report(&rows, &global.out.join(format!("{}-report.txt", spec.name)))?;
    print!("{}", report_text(&rows));
    println!(
        "wrote {} trace file(s) and plot to {:?}",
        traces.len(),
        global.out
    );
    Ok(())
}

fn collect_dir_scenarios(dir: &Path, global: &GlobalArgs) -> Result<Vec<ScenarioSpec>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read scenario directory {dir:?}: {e}")))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no *.json scenario files in {dir:?}"
        )));
    }
    paths.iter().map(|p| load_scenario(p, global)).collect()
}

fn cmd_matrix(
    builtin: bool,
    dir: Option<&Path>,
    serial: bool,
    traces: bool,
    global: &GlobalArgs,
) -> Result<(), CliError> {
    let specs = match (builtin, dir) {
        (true, None) => {
            let mut specs = builtin_scenarios_seeded(global.seed.unwrap_or(0));
            for spec in &mut specs {
                if let Some(dt) = global.physics_dt {
                    spec.schedule.physics_dt = dt;
                }
            }
            specs
        }
        (false, Some(d)) => collect_dir_scenarios(d, global)?,
        _ => {
            return Err(CliError::Config(
                "matrix needs exactly one of --builtin or --dir <path>".into(),
            ))
        }
    };
    ensure_out_dir(&global.out)?;

    let outcomes = run_matrix(&specs, !serial);
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut failures = Vec::new();
    for (spec, outcome) in specs.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(format!("{}: {e}", spec.name)),
        }
    }
    if traces {
        for spec in &specs {
            if let Ok((_, t)) = run_scenario_row(spec) {
                write_outputs(spec, &t, &global.out)?;
            }
        }
    }
    emit_report(&rows, &global.out.join("report.txt"))?;
    print!("{}", report_text(&rows));
    println!("report written to {:?}", global.out.join("report.txt"));
    if !failures.is_empty() {
        return Err(CliError::Scenario(format!(
            "{} of {} scenarios failed:\n{}",
            failures.len(),
            specs.len(),
            failures.join("\n")
        )));
    }
    Ok(())
}

fn cmd_report(results: &Path) -> Result<(), CliError> {
    let rows = load_report(results)?;
    print!("{}", report_text(&rows));
    Ok(())
}

fn cmd_tune(architecture: Architecture, profile: MotionProfile) -> Result<(), CliError> {
    let ug = find_ultimate_gain(architecture, &profile)?;
    let gains = ziegler_nichols(ug.ku, ug.tu).map_err(|e| {
        CliError::Scenario(format!("Ziegler-Nichols rule rejected sweep output: {e}"))
    })?;
    println!("architecture: {architecture}");
    println!("ultimate gain Ku = {:.6}", ug.ku);
    println!("ultimate period Tu = {:.6} s", ug.tu);
    println!(
        "Ziegler-Nichols starting gains: kp = {:.6}, ki = {:.6}, kd = {:.6}",
        gains.kp, gains.ki, gains.kd
    );
    Ok(())
}

fn cmd_bandwidth(architecture: Architecture, amplitudes: &[f64]) -> Result<(), CliError> {
    let bw = measure_bandwidth(architecture, amplitudes)?;
    println!("architecture: {architecture}");
    println!("-3 dB force-tracking bandwidth: {bw:.3} Hz");
    Ok(())
}
