use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use physattn_cli::{commands, CliError, CliResult, ExperimentConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "physattn",
    version,
    about = "Temporal-regularization experiments: operator runs, prior ablations, alpha sweeps, metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the physics operator to a feature file gated by a mask file
    Operate {
        /// Feature container (.json or .bin)
        features: PathBuf,
        /// Mask container (.json or .bin, d = 1, values 0/1)
        masks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: the config's output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Single seed overriding the config's seed list
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every update rule with shared seeds and emit CSV + SVG + JSON
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the alpha grid with shared seeds and emit CSV + SVG + JSON
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a feature file and print the metric report
    Metrics {
        /// Feature container (.json or .bin)
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report format on stdout
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        /// Require the adjacent-frame cosine (zero-norm frames error out)
        #[arg(long)]
        cosine: bool,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let config = config.with_seed_override(seed);
    config.validate()?;
    Ok(config)
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Operate {
            features,
            masks,
            config,
            out,
            seed,
        } => {
            let config = load_config(config.as_ref(), seed)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let outcome = commands::operate(&features, &masks, &config, &out_dir)?;
            println!("energy before: {}", outcome.energy_before);
            println!("energy after: {}", outcome.energy_after);
            println!("wrote {}", outcome.output_path.display());
        }
        Command::Ablate { config, out, seed } => {
            let config = load_config(config.as_ref(), seed)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let files = commands::ablate(&config, &out_dir)?;
            println!("wrote {}", files.csv_path.display());
            println!("wrote {}", files.svg_path.display());
            println!("wrote {}", files.summary_path.display());
        }
        Command::Sweep { config, out, seed } => {
            let config = load_config(config.as_ref(), seed)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let files = commands::sweep(&config, &out_dir)?;
            println!("wrote {}", files.csv_path.display());
            println!("wrote {}", files.svg_path.display());
            println!("wrote {}", files.summary_path.display());
        }
        Command::Metrics {
            features,
            config,
            seed,
            format,
            cosine,
        } => {
            let config = load_config(config.as_ref(), seed)?;
            match format {
                OutputFormat::Json => {
                    let report = commands::metrics_report(&features, &config, cosine)?;
                    let text = serde_json::to_string_pretty(&report)
                        .map_err(|e| CliError::Io(format!("report serialization: {e}")))?;
                    println!("{text}");
                }
                OutputFormat::Csv => {
                    print!("{}", commands::metrics_csv(&features, &config, cosine)?);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
