use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvrelax::config::{Experiment, OutputFormat, RunConfig};
use nvrelax::{calibration, experiments, Error};

#[derive(Parser, Debug)]
#[command(name = "nvrelax", version, about = "NV relaxometry simulator for Gd-tagged nanodiamond RNA sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed of every random stream.
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, value_name = "N", default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its tables plus a run manifest.
    Run {
        /// t1-sweep, sensitivity-map, sensitivity-dist, ensemble-hist or fnr-curve;
        /// overrides `experiment` in the config.
        #[arg(value_parser = parse_experiment)]
        experiment: Option<Experiment>,
        #[command(flatten)]
        common: Common,
        /// Output directory (overrides `output.dir`).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// csv or json (overrides `output.format`).
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
    },
    /// Grid-calibrate the bath rates, contrast and photon budget on the
    /// configured ensemble and print the result as JSON.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration in canonical form.
    Config {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(path: Option<&PathBuf>) -> nvrelax::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn execute(cli: Cli) -> nvrelax::Result<()> {
    match cli.command {
        Command::Run {
            experiment,
            common,
            out,
            format,
        } => {
            let mut config = load(common.config.as_ref())?;
            let experiment = experiment.or(config.experiment).ok_or_else(|| {
                Error::Usage("no experiment given on the command line or in the config".into())
            })?;
            config.experiment = Some(experiment);
            if let Some(dir) = out {
                config.output.dir = dir;
            }
            if let Some(format) = format {
                config.output.format = format;
            }
            let manifest = experiments::run(
                &config,
                experiment,
                common.seed,
                common.workers,
                &config.output.dir,
                config.output.format,
            )?;
            for o in &manifest.outputs {
                println!("{}", config.output.dir.join(&o.file).display());
            }
            println!("{}", config.output.dir.join(experiments::MANIFEST_FILE).display());
            Ok(())
        }
        Command::Calibrate { common } => {
            let config = load(common.config.as_ref())?;
            let spec = config.ensemble_spec(common.seed);
            let (model, readout) = (config.model()?, config.readout());
            let result = experiments::with_workers(common.workers, || {
                calibration::calibrate(&spec, &model, &readout)
            })??;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).map_err(|e| Error::Numeric(e.to_string()))?
            );
            Ok(())
        }
        Command::Config { config } => {
            print!("{}", load(config.as_ref())?.to_canonical());
            Ok(())
        }
    }
}

/// One JSON object on one line: `{"error": kind, "exit_code": n, "message": text}`.
fn report(kind: &str, code: u8, message: &str) {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            report("usage", 2, first);
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code() as u8;
            report(e.kind(), code, &e.to_string());
            ExitCode::from(code)
        }
    }
}
