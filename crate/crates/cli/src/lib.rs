//! The `spectral` command: run scenarios, check the analytic gradients, and
//! print adjacency spectra.
//!
//! Exit statuses:
//!
//! | status | meaning                                          |
//! |--------|--------------------------------------------------|
//! | 0      | converged / all checks passed                    |
//! | 1      | horizon reached without converging, or a failed check |
//! | 2      | invalid arguments, unparsable or invalid scenario |
//! | 3      | unrealizable targets                             |
//! | 4      | integration stalled                              |
//! | 5      | file could not be read or written                |

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use spectral_core::report::{write_trajectory_csv, ReportFiles, RunReport};
use spectral_core::scenarios::Violation;
use spectral_core::schema::ScenarioFile;
use spectral_core::verify::{self, Check, VerifyOptions};
use spectral_core::{build_adjacency, eigenvalues, simulate, spectral_moments, Error, Metric, RobotConfiguration, Termination};

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const NOT_CONVERGED: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const UNREALIZABLE: i32 = 3;
    pub const STALLED: i32 = 4;
    pub const IO: i32 = 5;
}

/// File names written into the output directory of a run.
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "spectral", version, about = "Steer robot networks toward target adjacency spectral moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write its trajectory and final report.
    Run(RunArgs),
    /// Compare analytic gradients, matrix powers and moments against oracles.
    Verify(VerifyArgs),
    /// Print the adjacency spectrum and moments of a configuration.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
struct ScenarioSource {
    /// Scenario JSON file.
    #[arg(required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario instead of a file (hexagon7, rgg10).
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Dotted-path override such as `s=4` or `targets.moments.1=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Output directory; trial `i` of a batch writes to `DIR/trial-i`.
    #[arg(short = 'o', long = "output", default_value = "out")]
    output: PathBuf,
    /// Number of independent runs, started from seeds `S, S+1, ..`.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Seed of the random start, replacing the scenario's own start.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the final report as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    ControlLaw,
    MomentGradient,
    BarrierGradient,
    TraceDerivative,
    WalkEnumeration,
    SpectralMoments,
}

impl From<FaultArg> for Check {
    fn from(f: FaultArg) -> Check {
        match f {
            FaultArg::ControlLaw => Check::ControlLaw,
            FaultArg::MomentGradient => Check::MomentGradient,
            FaultArg::BarrierGradient => Check::BarrierGradient,
            FaultArg::TraceDerivative => Check::TraceDerivative,
            FaultArg::WalkEnumeration => Check::WalkEnumeration,
            FaultArg::SpectralMoments => Check::SpectralMoments,
        }
    }
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one analytic quantity to exercise the failure path.
    #[arg(long, hide = true)]
    fault: Option<FaultArg>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Scenario file, or a positions file: either an array of coordinate rows
    /// or an object `{"positions": [...], "c": .., "z": .., "s": ..}`.
    #[arg(required_unless_present = "preset")]
    input: Option<PathBuf>,
    /// Built-in scenario; its start configuration is used and its targets echoed.
    #[arg(long, conflicts_with = "input")]
    preset: Option<String>,
    /// Dotted-path override applied to a scenario or preset.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Decay constant for a positions file (default 1).
    #[arg(long)]
    c: Option<f64>,
    /// Metric for a positions file, 1 or 2 (default 1).
    #[arg(long)]
    z: Option<u8>,
    /// Number of moments to print for a positions file (default n).
    #[arg(long)]
    s: Option<usize>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

/// Failure of a command, carrying its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::new(exit::IO, format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Unrealizable { .. } => exit::UNREALIZABLE,
            Error::Stalled { .. } => exit::STALLED,
            _ => exit::INVALID,
        };
        Self::new(code, err.to_string())
    }
}

/// Exit status for a finished simulation.
pub fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => exit::SUCCESS,
        Termination::Horizon => exit::NOT_CONVERGED,
        Termination::Stalled => exit::STALLED,
    }
}

/// Parses `args` (including the program name), runs the command, and returns
/// the exit status. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID } else { exit::SUCCESS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Verify(args) => cmd_verify(&args, out, err),
        Command::Spectrum(args) => cmd_spectrum(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn load_scenario_file(source: &ScenarioSource) -> Result<ScenarioFile, CliError> {
    match (&source.scenario, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ScenarioFile::from_json_with_overrides(&text, &source.set)
                .map_err(|e| CliError::new(exit::INVALID, format!("{}: {e}", path.display())))
        }
        (None, Some(name)) => Ok(ScenarioFile::preset(name)?.with_overrides(&source.set)?),
        (None, None) => Err(CliError::new(exit::INVALID, "no scenario given")),
    }
}

/// Validates, simulates and writes the outputs of one scenario into `dir`.
pub fn run_scenario(file: ScenarioFile, dir: &Path) -> Result<RunReport, CliError> {
    let scenario = file.into_scenario().map_err(violation_error)?;
    let record = simulate(&scenario)?;
    let mut report = RunReport::new(&scenario, &record);

    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv_path = dir.join(TRAJECTORY_FILE);
    let json_path = dir.join(REPORT_FILE);
    let csv_file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_trajectory_csv(std::io::BufWriter::new(csv_file), &record)
        .map_err(|e| CliError::io(&csv_path, e))?;
    report.files = Some(ReportFiles {
        trajectory: csv_path.display().to_string(),
        report: json_path.display().to_string(),
    });
    fs::write(&json_path, report.to_json_pretty() + "\n").map_err(|e| CliError::io(&json_path, e))?;
    Ok(report)
}

/// Status 3 when the only problems are unrealizable targets, 2 otherwise.
fn violation_error(violations: Vec<Violation>) -> CliError {
    let code = if violations.iter().all(Violation::is_unrealizable) {
        exit::UNREALIZABLE
    } else {
        exit::INVALID
    };
    let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
    CliError::new(code, format!("invalid scenario:\n{}", lines.join("\n")))
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut file = load_scenario_file(&args.source)?;
    if let Some(seed) = args.seed {
        file.seed = Some(seed);
        file.positions = None;
    }
    if args.trials == 0 {
        return Err(CliError::new(exit::INVALID, "--trials must be at least 1"));
    }
    if args.trials == 1 {
        let report = run_scenario(file, &args.output)?;
        print_report(out, &report, args.json)?;
        return Ok(termination_code(report.termination_reason));
    }

    let base = file.seed.ok_or_else(|| {
        CliError::new(exit::INVALID, "--trials needs a seeded start (give --seed or a scenario seed)")
    })?;
    let jobs: Vec<(ScenarioFile, PathBuf)> = (0..args.trials)
        .map(|i| {
            let mut f = file.clone();
            f.seed = Some(base.wrapping_add(i as u64));
            f.name = format!("{}-trial-{i}", file.name);
            (f, args.output.join(format!("trial-{i}")))
        })
        .collect();
    let results = run_parallel(jobs);

    let mut code = exit::SUCCESS;
    for (i, result) in results.into_iter().enumerate() {
        let trial_code = match result {
            Ok(report) => {
                print_report(out, &report, args.json)?;
                termination_code(report.termination_reason)
            }
            Err(e) => {
                writeln!(out, "trial {i}: error: {}", e.message).map_err(stdout_error)?;
                e.code
            }
        };
        if code == exit::SUCCESS {
            code = trial_code;
        }
    }
    Ok(code)
}

/// Runs independent scenarios on all available cores; results keep the
/// order of `jobs`.
fn run_parallel(jobs: Vec<(ScenarioFile, PathBuf)>) -> Vec<Result<RunReport, CliError>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, usize::from)
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((file, dir)) = jobs.get(i) else { break };
                let result = run_scenario(file.clone(), dir);
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every trial ran"))
        .collect()
}

fn stdout_error(e: std::io::Error) -> CliError {
    CliError::new(exit::IO, format!("writing output: {e}"))
}

fn print_report(out: &mut dyn Write, report: &RunReport, json: bool) -> Result<(), CliError> {
    let text = if json { report.to_json_pretty() + "\n" } else { report.summary() };
    out.write_all(text.as_bytes()).map_err(stdout_error)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    if args.n < 2 || args.d < 1 {
        return Err(CliError::new(exit::INVALID, "verify needs n >= 2 and d >= 1"));
    }
    let report = verify::run(&VerifyOptions {
        n: args.n,
        d: args.d,
        trials: args.trials,
        seed: args.seed,
        fault: args.fault.map(Check::from),
    })?;
    let text = if args.json {
        report.to_json_pretty() + "\n"
    } else {
        report.summary()
    };
    out.write_all(text.as_bytes()).map_err(stdout_error)?;
    if report.passed() {
        Ok(exit::SUCCESS)
    } else {
        let _ = writeln!(err, "failed checks: {}", report.failed_checks().join(", "));
        Ok(exit::NOT_CONVERGED)
    }
}

/// Spectrum of one configuration, with the scenario's targets when the input
/// was a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOutput {
    pub eigenvalues: Vec<f64>,
    pub moments: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_moments: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PositionsInput {
    Rows(Vec<Vec<f64>>),
    Object(PositionsFile),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PositionsFile {
    positions: Vec<Vec<f64>>,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    z: Option<Metric>,
    #[serde(default)]
    s: Option<usize>,
}

/// Eigenvalues (largest first) and moments `m_1..m_s` of the adjacency of
/// `config`.
pub fn spectrum_of(config: &RobotConfiguration, c: f64, metric: Metric, s: usize) -> Result<SpectrumOutput, Error> {
    let adjacency = build_adjacency(config, c, metric)?;
    Ok(SpectrumOutput {
        eigenvalues: eigenvalues(&adjacency),
        moments: spectral_moments(&adjacency, s)?.into_vec(),
        target_moments: None,
        reference_eigenvalues: None,
    })
}

fn cmd_spectrum(args: &SpectrumArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let output = match (&args.input, &args.preset) {
        (None, Some(name)) => scenario_spectrum(ScenarioFile::preset(name)?.with_overrides(&args.set)?)?,
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            match ScenarioFile::from_json_with_overrides(&text, &args.set) {
                Ok(file) => scenario_spectrum(file)?,
                Err(scenario_err) => match serde_json::from_str::<PositionsInput>(&text) {
                    Ok(input) => positions_spectrum(input, args)?,
                    Err(_) => {
                        return Err(CliError::new(
                            exit::INVALID,
                            format!(
                                "{}: neither a scenario nor a positions file ({scenario_err})",
                                path.display()
                            ),
                        ))
                    }
                },
            }
        }
        (None, None) => return Err(CliError::new(exit::INVALID, "no input given")),
    };
    let text = if args.json {
        serde_json::to_string_pretty(&output).expect("spectrum serializes") + "\n"
    } else {
        format_spectrum(&output)
    };
    out.write_all(text.as_bytes()).map_err(stdout_error)?;
    Ok(exit::SUCCESS)
}

fn scenario_spectrum(file: ScenarioFile) -> Result<SpectrumOutput, CliError> {
    let scenario = file.into_scenario().map_err(violation_error)?;
    let start = scenario.initial.configuration()?;
    let mut output = spectrum_of(&start, scenario.params.c, scenario.params.metric, scenario.params.order)?;
    output.target_moments = Some(scenario.targets.moments().to_vec());
    output.reference_eigenvalues = scenario.targets.reference_eigenvalues().map(|r| {
        let mut r = r.to_vec();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    });
    Ok(output)
}

fn positions_spectrum(input: PositionsInput, args: &SpectrumArgs) -> Result<SpectrumOutput, CliError> {
    let (rows, c, z, s) = match input {
        PositionsInput::Rows(rows) => (rows, None, None, None),
        PositionsInput::Object(f) => (f.positions, f.c, f.z, f.s),
    };
    let config = RobotConfiguration::from_rows(&rows)?;
    let metric = match args.z {
        Some(z) => Metric::try_from(z).map_err(|e| CliError::new(exit::INVALID, e))?,
        None => z.unwrap_or(Metric::L1),
    };
    let c = args.c.or(c).unwrap_or(1.0);
    let s = args.s.or(s).unwrap_or(config.n());
    Ok(spectrum_of(&config, c, metric, s)?)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn format_spectrum(output: &SpectrumOutput) -> String {
    let mut text = format!("eigenvalues: {}\nmoments: {}\n", join(&output.eigenvalues), join(&output.moments));
    if let Some(t) = &output.target_moments {
        text.push_str(&format!("target moments: {}\n", join(t)));
    }
    if let Some(r) = &output.reference_eigenvalues {
        text.push_str(&format!("reference eigenvalues: {}\n", join(r)));
    }
    text
}
