use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcat_core::engine::{run_gate_driver, simulate, Scenario};
use dcat_core::scenarios::{self, GateDriveSpec};
use dcat_core::sweep::{self, SweepRun};
use dcat_core::Error;

/// Simulator for a DC-autotransformer multilevel inverter.
#[derive(Parser)]
#[command(name = "dcat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write waveform.csv and report.json.
    Simulate {
        /// Scenario JSON file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the integration step (seconds).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run one simulation per parameter value and write a summary table.
    Sweep {
        /// Template scenario JSON file, or the name of a bundled scenario.
        template: String,
        /// Config field, scenario field, `reference.<field>` or
        /// `initial_unbalance`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; `5%` means 0.05.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run the resonant gate driver and write trajectory.csv and energy.json.
    Gatedrive {
        /// Gate driver JSON file (bare parameters or `{params, periods, dt}`),
        /// or the name of a bundled one.
        params: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        periods: Option<usize>,
    },
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl fmt::Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn output(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { scenario, out, dt } => cmd_simulate(&scenario, &out, dt),
        Command::Sweep {
            template,
            param,
            values,
            out,
            dt,
        } => cmd_sweep(&template, &param, &values, &out, dt),
        Command::Gatedrive {
            params,
            out,
            dt,
            periods,
        } => cmd_gatedrive(&params, &out, dt, periods),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Reads `source` as a file, falling back to a bundled entry of that name.
fn read_source<T>(
    source: &str,
    parse: impl Fn(&str) -> dcat_core::Result<T>,
    bundled: impl Fn(&str) -> dcat_core::Result<T>,
) -> CliResult<T> {
    let path = Path::new(source);
    if path.is_file() {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::input(format!("{source}: {e}")))?;
        return parse(&text).map_err(|e| Failure::input(format!("{source}: {e}")));
    }
    let name = source.strip_suffix(".json").unwrap_or(source);
    bundled(name).map_err(|_| Failure::input(format!("{source}: no such file or bundled scenario")))
}

fn load_scenario(source: &str, dt: Option<f64>) -> CliResult<Scenario> {
    let mut scenario = read_source(source, Scenario::from_json_str, scenarios::load)?;
    if dt.is_some() {
        scenario.dt = dt;
        scenario.validate()?;
    }
    Ok(scenario)
}

fn create_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| Failure::output(out, e))
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::output(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, format!("{text}\n")).map_err(|e| Failure::output(path, e))
}

fn cmd_simulate(source: &str, out: &Path, dt: Option<f64>) -> CliResult<()> {
    let scenario = load_scenario(source, dt)?;
    let result = simulate(&scenario)?;
    create_dir(out)?;
    let path = out.join("waveform.csv");
    result
        .waveform
        .write_csv(create_file(&path)?)
        .map_err(|e| Failure::output(&path, e))?;
    write_text(&out.join("report.json"), &result.report.to_json_pretty())?;
    let r = &result.report;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "simulated {} s in {} steps: thd {}, tracking {} V, final spread {:.4} V",
        r.duration,
        r.steps,
        show(r.thd),
        show(r.rms_tracking_error),
        r.capacitor_spread_final
    );
    Ok(())
}

fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (number, scale) = match s.strip_suffix('%') {
                Some(n) => (n.trim(), 0.01),
                None => (s, 1.0),
            };
            number
                .parse::<f64>()
                .map(|v| v * scale)
                .map_err(|_| Failure::input(format!("values: `{s}` is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Failure::input("values: sweep needs at least one value"));
    }
    Ok(values)
}

fn cmd_sweep(
    source: &str,
    param: &str,
    values: &str,
    out: &Path,
    dt: Option<f64>,
) -> CliResult<()> {
    let template = load_scenario(source, dt)?;
    let values = parse_values(values)?;
    let runs: Vec<SweepRun> = sweep::run_sweep(&template, param, &values)?;
    create_dir(out)?;
    for (i, run) in runs.iter().enumerate() {
        write_text(
            &out.join(format!("run_{i:03}.json")),
            &run.report.to_json_pretty(),
        )?;
    }
    let path = out.join("summary.csv");
    sweep::write_summary_csv(&runs, create_file(&path)?).map_err(|e| Failure::output(&path, e))?;
    println!("swept {param} over {} values", runs.len());
    Ok(())
}

fn cmd_gatedrive(
    source: &str,
    out: &Path,
    dt: Option<f64>,
    periods: Option<usize>,
) -> CliResult<()> {
    let mut spec = read_source(
        source,
        GateDriveSpec::from_json_str,
        scenarios::load_gate_drive,
    )?;
    if dt.is_some() {
        spec.dt = dt;
    }
    if let Some(p) = periods {
        spec.periods = p;
    }
    let run = run_gate_driver(&spec.params, spec.periods, spec.step())?;
    create_dir(out)?;
    let path = out.join("trajectory.csv");
    run.trajectory
        .write_csv(create_file(&path)?)
        .map_err(|e| Failure::output(&path, e))?;
    let energy = serde_json::json!({
        "report": run.report,
        "periods": run.periods,
    });
    let text = serde_json::to_string_pretty(&energy).expect("energy report serializes");
    write_text(&out.join("energy.json"), &text)?;
    println!(
        "{} periods: delivered {:.4e} J, dissipated {:.4e} J, ratio {:.3e}",
        run.report.periods, run.report.delivered, run.report.dissipated, run.report.ratio
    );
    Ok(())
}
