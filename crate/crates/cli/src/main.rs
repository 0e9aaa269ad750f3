use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use eon_cli::config::{ExperimentConfig, Mode};
use eon_cli::experiments::{self, FacesStage};

#[derive(Parser, Debug)]
#[command(name = "eon1", version, about = "Run EON-1 simulator experiments")]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// TOML file layered over the mode's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for metrics, reports and model files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one setting, e.g. `--set model.neurons=9000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn run(cli: &Cli) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::resolve(cli.mode, cli.config.as_deref(), cli.seed, &cli.overrides)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(w) = cfg.learn.timing_warning(&cfg.model) {
        eprintln!("warning: {w}");
    }
    let out = cli.out.as_deref();
    match cli.mode {
        Mode::MnistTrain => {
            let run = experiments::run_mnist_train(&cfg, out)?;
            for r in &run.rows {
                eprintln!(
                    "samples {:>6}  acc {:6.2}%  capacity {:>5}  eligible {:6.2}  no-pred {}",
                    r.sample_count, r.accuracy, r.capacity, r.eligible, r.no_prediction
                );
            }
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Mode::MnistEval => {
            let s = experiments::run_mnist_eval(&cfg, out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Mode::FacesPretrain | Mode::FacesAdapt | Mode::CollageScan => {
            let stage = match cli.mode {
                Mode::FacesPretrain => FacesStage::Pretrain,
                Mode::FacesAdapt => FacesStage::Adapt,
                _ => FacesStage::Scan,
            };
            let run = experiments::run_faces(&cfg, stage, out)?;
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Mode::Cost => {
            let s = experiments::run_cost(&cfg, out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
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
            ExitCode::FAILURE
        }
    }
}
