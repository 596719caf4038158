use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vlcsim::harness::{
    emit_report, figure34_sweeps, run_sweeps, table4_sweep, ExperimentReport, Filtering,
    HarnessError, ReportFormat, ScenarioConfig, SweepSpec, DEFAULT_FRAMES, DEFAULT_SEED,
};
use vlcsim::PpmConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vlcsim",
    version,
    about = "M-PPM optical link simulator with interference cancellation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario or sweep description.
    Run(RunArgs),
    /// SER against the number of acquisition samples.
    Table4(PresetArgs),
    /// SER against interference level for three distances, filtered and not.
    Figure34(Figure34Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Modulation {
    #[value(name = "4ppm")]
    Ppm4,
    #[value(name = "8ppm")]
    Ppm8,
}

impl Modulation {
    fn order(self) -> usize {
        match self {
            Self::Ppm4 => 4,
            Self::Ppm8 => 8,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FilteringArg {
    On,
    Off,
    Both,
}

impl From<FilteringArg> for Filtering {
    fn from(f: FilteringArg) -> Self {
        match f {
            FilteringArg::On => Filtering::On,
            FilteringArg::Off => Filtering::Off,
            FilteringArg::Both => Filtering::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file, or `stdout`/`-`.
    #[arg(long, default_value = "stdout")]
    out: String,
}

#[derive(Args)]
struct RunArgs {
    /// JSON scenario or sweep file; the built-in default scenario otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    modulation: Option<Modulation>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    acq_samples: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_enum)]
    filtering: Option<FilteringArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = 11)]
    repetitions: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct Figure34Args {
    /// Only this modulation; both 4PPM and 8PPM when omitted.
    #[arg(long, value_enum)]
    modulation: Option<Modulation>,
    #[command(flatten)]
    preset: PresetArgs,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_sweep(args: &RunArgs) -> Result<SweepSpec, Failure> {
    let mut sweep = match &args.scenario {
        None => SweepSpec::single(ScenarioConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let parsed = serde_json::from_str::<serde_json::Value>(&text).and_then(|v| {
                if v.get("base").is_some() {
                    serde_json::from_value::<SweepSpec>(v)
                } else {
                    serde_json::from_value::<ScenarioConfig>(v).map(SweepSpec::single)
                }
            });
            parsed.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
    };
    let single = sweep.values.len() == 1 && sweep.axis == vlcsim::SweepAxis::AcquisitionSamples;
    let base = &mut sweep.base;
    if let Some(m) = args.modulation {
        base.ppm = PpmConfig {
            order: m.order(),
            ..base.ppm
        };
    }
    if let Some(n) = args.frames {
        base.n_frames = n;
    }
    if let Some(n) = args.acq_samples {
        base.acquisition_samples = n;
        if single {
            sweep.values = vec![n as f64];
        }
    }
    if let Some(p) = args.order {
        sweep.base.predictor_order = p;
    }
    if let Some(f) = args.filtering {
        sweep.base.filtering = f.into();
    }
    if let Some(s) = args.seed {
        sweep.base.seed.seed = s;
    }
    Ok(sweep)
}

fn write_output(report: &ExperimentReport, output: &OutputArgs) -> Result<(), Failure> {
    let bytes = emit_report(report, output.format.into());
    if output.out == "stdout" || output.out == "-" {
        io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::Io(e.to_string()))
    } else {
        fs::write(&output.out, bytes).map_err(|e| Failure::Io(format!("{}: {e}", output.out)))
    }
}

fn execute(sweeps: &[SweepSpec], output: &OutputArgs) -> Result<ExitCode, Failure> {
    let report = run_sweeps(sweeps)?;
    write_output(&report, output)?;
    if report.all_failed() {
        eprintln!("error: every point failed during estimation");
        return Ok(ExitCode::from(EXIT_ESTIMATION));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => load_sweep(args).and_then(|s| execute(&[s], &args.output)),
        Command::Table4(a) => execute(&[table4_sweep(a.frames, a.repetitions, a.seed)], &a.output),
        Command::Figure34(a) => {
            let orders = a.modulation.map_or(vec![4, 8], |m| vec![m.order()]);
            let p = &a.preset;
            let sweeps: Vec<SweepSpec> = orders
                .into_iter()
                .flat_map(|o| figure34_sweeps(o, p.frames, p.repetitions, p.seed))
                .collect();
            execute(&sweeps, &p.output)
        }
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
