use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddgate_cli::config::{ExperimentConfig, Kind};
use ddgate_cli::presets::{self, PRESETS};
use ddgate_cli::run::execute;
use ddgate_cli::CliError;

#[derive(Parser)]
#[command(name = "ddgate", version, about = "Run dynamical-decoupling gate simulations from config files")]
struct Cli {
    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep, scan or error map and write CSV plus manifest.
    Run(RunArgs),
    /// Run a pulse-error map (the config must have an [errmap] table).
    Errmap(RunArgs),
    /// Print the built-in presets.
    ListPresets,
    /// Print a preset's config file.
    ShowPreset { name: String },
    /// Check a config without simulating.
    Validate(Source),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the Trotter step.
    #[arg(long)]
    dt: Option<f64>,
}

fn load(source: &Source) -> Result<ExperimentConfig, CliError> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)
        }
        (None, Some(name)) => {
            presets::find(name).map(|p| p.config()).ok_or_else(|| CliError::Config(format!("no preset named {name}")))
        }
        (None, None) => Err(CliError::Config("pass --config or --preset".into())),
    }
}

fn run(args: &RunArgs, errmap_only: bool) -> Result<(), CliError> {
    let config = load(&args.source)?;
    if errmap_only && !matches!(config.validate()?, Kind::Errmap { .. }) {
        return Err(CliError::config("errmap", "config has no [errmap] table"));
    }
    let manifest = execute(&config, &args.out, args.dt)?;
    for f in &manifest.files {
        println!("{}  {}", f.sha256, f.path.display());
    }
    println!("{}", serde_json::to_string_pretty(&manifest.metrics).expect("metrics serialize"));
    eprintln!("{} finished in {:.2} s", manifest.name, manifest.wall_clock_seconds);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Run(args) => run(&args, false),
        Command::Errmap(args) => run(&args, true),
        Command::ListPresets => {
            for p in PRESETS {
                println!("{:<20} {}", p.name, p.config().description);
            }
            Ok(())
        }
        Command::ShowPreset { name } => {
            let p = presets::find(&name).ok_or_else(|| CliError::Config(format!("no preset named {name}")))?;
            print!("{}", p.text);
            Ok(())
        }
        Command::Validate(source) => {
            let config = load(&source)?;
            let kind = config.validate()?;
            println!("{}: ok ({kind:?}), hash {}", config.name, config.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
