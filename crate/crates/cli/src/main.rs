use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tinyfit_cli::dataset::{ingest, DatasetKind};
use tinyfit_cli::experiment::{
    eval_personalized, generalized_data, package_model, train_generalized, GeneralizedReport,
};
use tinyfit_cli::report::write_report;
use tinyfit_cli::{CliError, Config, Result};
use tinyfit_core::nn::Checkpoint;
use tinyfit_core::signal::twin;
use tinyfit_device::Device;
use tinyfit_server::Server;

#[derive(Parser)]
#[command(
    name = "tinyfit",
    version,
    about = "Personalized activity recognition for a wrist-worn device"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for models and reports.
    #[arg(long, global = true, default_value = "tinyfit-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Read a raw dataset and write its 20 Hz windows as a TWIN file.
    Ingest {
        #[arg(long, value_enum)]
        dataset: DatasetKind,
        /// Dataset root (unused for synthetic).
        #[arg(long)]
        path: Option<PathBuf>,
        /// Seed of the synthetic generator.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the generalized model and report GS accuracy.
    TrainGeneralized {
        /// TWIN windows file.
        #[arg(long)]
        path: PathBuf,
        /// Dataset name recorded in the report.
        #[arg(long, value_enum)]
        dataset: Option<DatasetKind>,
        /// Training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the generalized and personalized models on each held-out user.
    EvalPersonalized {
        #[arg(long)]
        path: PathBuf,
        /// Generalized checkpoint; defaults to `<out>/generalized.tflt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        dataset: Option<DatasetKind>,
        /// Fine-tuning seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Quantize a checkpoint into a TBND bundle and measure it.
    Package {
        /// TWIN file the checkpoint was trained on (calibration and fidelity).
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Bundle version written into the header.
        #[arg(long)]
        version: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the device registry and OTA server.
    Serve {
        #[command(flatten)]
        common: Common,
    },
    /// Run the simulated wristband from the `[device]` config section.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn checkpoint_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| out.join("generalized.tflt"))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            dataset,
            path,
            seed,
            common,
        } => {
            let mut config = load_config(&common)?;
            if let Some(s) = seed {
                config.synthetic.seed = s;
            }
            let (classes, windows, summary) = ingest(dataset, path.as_deref(), &config.synthetic)?;
            std::fs::create_dir_all(&common.out).map_err(io(&common.out))?;
            let twin_path = common.out.join(format!("{}.twin", dataset.name()));
            twin::write(&twin_path, &classes, &windows)?;
            let (table, _) = write_report(&common.out, "ingest", &summary)?;
            print!("{table}");
            println!("windows written to {}", twin_path.display());
        }
        Command::TrainGeneralized {
            path,
            dataset,
            seed,
            common,
        } => {
            let mut config = load_config(&common)?;
            if let Some(s) = seed {
                config.train.seed = s;
            }
            let (classes, windows) = twin::read(&path)?;
            let (checkpoint, report) = train_generalized(&classes, &windows, &config, dataset.map(|d| d.name()))?;
            std::fs::create_dir_all(&common.out).map_err(io(&common.out))?;
            let ckpt = common.out.join("generalized.tflt");
            checkpoint.save(&ckpt)?;
            let (table, _) = write_report(&common.out, "train-generalized", &report)?;
            print!("{table}");
            println!("checkpoint written to {}", ckpt.display());
        }
        Command::EvalPersonalized {
            path,
            checkpoint,
            dataset,
            seed,
            common,
        } => {
            let mut config = load_config(&common)?;
            if let Some(s) = seed {
                config.fine_tune.seed = s;
            }
            let checkpoint = Checkpoint::load(checkpoint_path(checkpoint, &common.out))?;
            let (_, windows) = twin::read(&path)?;
            // GS from a previous train-generalized run in the same directory, if any.
            let gs = std::fs::read(common.out.join("train-generalized.json"))
                .ok()
                .and_then(|b| serde_json::from_slice::<GeneralizedReport>(&b).ok())
                .map(|r| r.gs_accuracy);
            let report = eval_personalized(&checkpoint, &windows, &config, gs, dataset.map(|d| d.name()))?;
            let (table, _) = write_report(&common.out, "eval-personalized", &report)?;
            print!("{table}");
        }
        Command::Package {
            path,
            checkpoint,
            version,
            seed,
            common,
        } => {
            let mut config = load_config(&common)?;
            if let Some(v) = version {
                config.package.version = v;
            }
            if let Some(s) = seed {
                config.package.seed = s;
            }
            let checkpoint = Checkpoint::load(checkpoint_path(checkpoint, &common.out))?;
            let (_, windows) = twin::read(&path)?;
            let mut data = generalized_data(&windows, &config)?;
            // Normalize with the checkpoint's own statistics.
            let renorm = |ws: &mut Vec<tinyfit_core::Window>| {
                for w in ws.iter_mut() {
                    let raw = tinyfit_core::signal::denormalize(w, &data.stats);
                    *w = tinyfit_core::signal::normalize(&raw, &checkpoint.stats);
                }
            };
            if data.stats != checkpoint.stats {
                renorm(&mut data.train);
                renorm(&mut data.test);
            }
            let (bytes, report) = package_model(&checkpoint, &data.train, &data.test, &config)?;
            std::fs::create_dir_all(&common.out).map_err(io(&common.out))?;
            let bundle = common.out.join("model.tbnd");
            std::fs::write(&bundle, &bytes).map_err(io(&bundle))?;
            let (table, _) = write_report(&common.out, "package", &report)?;
            print!("{table}");
            println!("bundle written to {}", bundle.display());
        }
        Command::Serve { common } => {
            let config = load_config(&common)?;
            let runtime = tokio_runtime()?;
            runtime.block_on(async {
                let server = Server::bind(config.server)
                    .await
                    .map_err(|e| CliError::Server(e.to_string()))?;
                let addr = server.local_addr().map_err(|e| CliError::Server(e.to_string()))?;
                println!("listening on http://{addr}");
                server.run().await.map_err(|e| CliError::Server(e.to_string()))
            })?;
        }
        Command::Simulate { common } => {
            let config = load_config(&common)?;
            let device = config
                .device
                .ok_or_else(|| CliError::Usage("simulate needs a [device] section in --config".into()))?;
            let mut device = Device::connect(device)?;
            let summary = device.run()?;
            println!("{}", serde_json::to_string_pretty(&summary_json(&summary))?);
        }
    }
    Ok(())
}

fn summary_json(s: &tinyfit_device::RunSummary) -> serde_json::Value {
    serde_json::json!({
        "samples": s.samples,
        "windows": s.windows,
        "inferences": s.inferences,
        "skipped_windows": s.skipped_windows,
        "events_sent": s.events_sent,
        "events_dropped": s.events_dropped,
        "swaps": s.swaps,
        "rejected_bundles": s.rejected_bundles,
        "model_version": s.model_version,
    })
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Server(e.to_string()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
