//! Command-line harness: run experiments, synthesize datasets, probe
//! trained models, and re-emit charts for an existing run directory.
//!
//! Exit codes: 0 on success (a completed run may still contain failed
//! cells; they are recorded in the report), 1 on config or input errors,
//! 2 on runtime failures.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ceprobe::chart::emit_svg_charts;
use ceprobe::dataset::{load_csv, synth_gaussian, CsvSchema, GaussianSpec};
use ceprobe::experiment::{run_experiment, DiagnosticsReport, ExperimentConfig};
use ceprobe::probe::{batch_decompose, decompositions_to_csv, parse_model_json};
use ceprobe::report::{emit_reports, load_report, run_dir, write_manifest};
use ceprobe::{Dataset64, Error, Result, TrainedModel64};

#[derive(Parser)]
#[command(name = "ceprobe", version, about = "Classification-embedding diagnostics")]
struct Cli {
    /// Override the seed (config seed for `run`, sampling seed for `synth-data`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log verbosity: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config and write its reports.
    Run { config: PathBuf },
    /// Sample a Gaussian dataset to CSV with the label in the last column.
    SynthData { spec: PathBuf, out: PathBuf },
    /// Decompose every row of a labeled CSV against a model JSON; CSV on stdout.
    Probe { model: PathBuf, data: PathBuf },
    /// Re-emit reports, charts, and the manifest for an existing run directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors exit 1; --help and --version print to stdout and exit 0.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.log_level);
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!(target: "cli", "{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for errors in configs or inputs, 2 for failures while running.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::Json { .. }
        | Error::CsvParse { .. }
        | Error::InvalidData(_) => 1,
        Error::Io { .. } | Error::Training(_) | Error::Augment(_) | Error::Shape(_) => 2,
    }
}

/// Logs `LEVEL ts stage message` to stderr; the stage is the log target.
fn init_logging(level: log::LevelFilter) {
    let mut builder = env_logger::Builder::new();
    builder
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format(|buf, record| {
            writeln!(
                buf,
                "{} {} {} {}",
                record.level(),
                buf.timestamp(),
                record.target(),
                record.args()
            )
        });
    let _ = builder.try_init();
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => cmd_run(&config, cli.seed, cli.out.as_deref()),
        Command::SynthData { spec, out } => cmd_synth_data(&spec, &out, cli.seed),
        Command::Probe { model, data } => cmd_probe(&model, &data),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e.to_string()))
}

/// Writes CSVs, charts, and a manifest covering both into `dir`.
fn emit_all(report: &DiagnosticsReport, dir: &Path) -> Result<usize> {
    let mut manifest = emit_reports(report, dir)?;
    manifest.files.extend(emit_svg_charts(report, dir)?);
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    write_manifest(dir, &manifest)?;
    Ok(manifest.files.len())
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut config: ExperimentConfig = read_json(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out_dir = o.to_path_buf();
    }
    config.validate()?;
    let report = run_experiment(&config)?;
    let dir = run_dir(&report);
    let n = emit_all(&report, &dir)?;
    let failed = report
        .cells
        .iter()
        .filter(|c| !matches!(c.outcome, ceprobe::experiment::CellOutcome::Completed { .. }))
        .count();
    if failed > 0 {
        log::warn!(target: "report", "{failed} of {} cells failed", report.cells.len());
    }
    log::info!(target: "report", "wrote {n} files");
    println!("{}", dir.display());
    Ok(())
}

fn cmd_synth_data(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let spec: GaussianSpec = read_json(spec_path)?;
    spec.validate()?;
    let data: Dataset64 = synth_gaussian(&spec, seed.unwrap_or(0))?;
    let mut text = String::new();
    for (row, &label) in data.features().iter_rows().zip(data.labels()) {
        use std::fmt::Write as _;
        for v in row {
            let _ = write!(text, "{v},");
        }
        let _ = writeln!(text, "{label}");
    }
    std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
    log::info!(target: "synth", "wrote {} rows to {}", data.n_samples(), out.display());
    Ok(())
}

fn cmd_probe(model_path: &Path, data_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e))?;
    let model: TrainedModel64 = parse_model_json(&text, model_path)?;
    let data: Dataset64 = load_csv(data_path, &CsvSchema::default())?;
    let batch = batch_decompose(&model, data.features(), data.labels())?;
    print!("{}", decompositions_to_csv(&batch.decompositions)?);
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let report = load_report(dir)?;
    let n = emit_all(&report, dir)?;
    log::info!(target: "report", "rewrote {n} files");
    println!("{}", dir.display());
    Ok(())
}
