//! `latentscout`: dataset generation, Beta-VAE training, latent analysis,
//! probing, evidence, shortcut attacks, reports and the HTTP API.
//!
//! Every command prints one JSON line on success. Failures print a single
//! `error[<kind>]: <message>` line on stderr and exit nonzero.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentscout::pipeline::{DimSelection, EvidenceOptions, Overrides, Pipeline, PipelineConfig, StageOutcome};
use latentscout::runstore::{RunStore, Verdict};
use latentscout::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "latentscout", version, about = "Find shortcut features in labeled image datasets with a Beta-VAE")]
struct Cli {
    /// Directory holding one subdirectory per run.
    #[arg(long, global = true, env = "LATENTSCOUT_RUN_ROOT", default_value = "runs")]
    run_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML, or JSON for a `.json` file).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Candidates per score reviewed in the report.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let o = Overrides { seed: self.seed, k: self.k, beta: self.beta, latent_dim: self.latent_dim };
        PipelineConfig::load(&self.config, &o)
    }
}

#[derive(Args)]
struct StageArgs {
    /// Run id (see `latentscout list`).
    #[arg(long)]
    run: String,
    /// Re-run even when the inputs are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Build the configured dataset and create a run for it.
    Gen(ConfigArgs),
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the Beta-VAE.
    Train(StageArgs),
    /// Encode the training split and score every latent dimension.
    Analyze(StageArgs),
    /// Fit the linear probe and add predictiveness to the scores.
    Probe(StageArgs),
    /// Render traversals and extreme-instance grids.
    Evidence {
        #[command(flatten)]
        stage: StageArgs,
        /// `top` (top-k union), `all`, or 1-based dimensions like `2,5`.
        #[arg(long)]
        dims: Option<DimSelection>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Extreme instances per side.
        #[arg(long)]
        l: Option<usize>,
    },
    /// Train the reference classifier and evaluate it on attacked test images.
    Attack(StageArgs),
    /// Assemble report.html and report.md.
    Report(StageArgs),
    /// Record a verdict for a latent dimension.
    Verdict {
        #[arg(long)]
        run: String,
        /// 1-based dimension.
        #[arg(long)]
        dim: usize,
        /// shortcut, valid or unclear.
        #[arg(long)]
        verdict: Verdict,
        #[arg(long, default_value = "")]
        notes: String,
        #[arg(long, default_value = "cli")]
        judge: String,
    },
    /// List runs, newest first.
    List,
    /// Serve the HTTP API over the run root.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// dataset → train → analyze → probe → evidence → report on a new run.
    Pipeline(ConfigArgs),
}

fn outcome(run: &str, stage: &str, o: StageOutcome) -> serde_json::Value {
    let o = match o {
        StageOutcome::Ran => "ran",
        StageOutcome::Skipped => "skipped",
    };
    json!({ "run_id": run, "stage": stage, "outcome": o })
}

fn log_epoch(r: &latentscout::vae::EpochRecord) {
    log::info!("{}", serde_json::to_string(r).unwrap_or_default());
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let open = || RunStore::open(&cli.run_root);
    match cli.command {
        Command::Dataset(DatasetCommand::Gen(args)) => {
            let m = Pipeline::new(open()?).create_run(&args.load()?)?;
            Ok(json!({ "run_id": m.run_id, "stage": "dataset", "n_samples": m.dataset.n_samples }))
        }
        Command::Train(a) => Ok(outcome(&a.run, "train", Pipeline::new(open()?).train(&a.run, a.force, log_epoch)?)),
        Command::Analyze(a) => Ok(outcome(&a.run, "analyze", Pipeline::new(open()?).analyze(&a.run, a.force)?)),
        Command::Probe(a) => Ok(outcome(&a.run, "probe", Pipeline::new(open()?).probe(&a.run, a.force)?)),
        Command::Evidence { stage, dims, k, steps, l } => {
            let opts = EvidenceOptions { dims, k, steps, extremes: l };
            Ok(outcome(&stage.run, "evidence", Pipeline::new(open()?).evidence(&stage.run, &opts, stage.force)?))
        }
        Command::Attack(a) => Ok(outcome(&a.run, "attack", Pipeline::new(open()?).attack(&a.run, a.force)?)),
        Command::Report(a) => Ok(outcome(&a.run, "report", Pipeline::new(open()?).report(&a.run, a.force)?)),
        Command::Verdict { run, dim, verdict, notes, judge } => {
            if dim == 0 {
                return Err(Error::Contract("dimensions are 1-based".into()));
            }
            let rec = open()?.record_verdict(&run, dim - 1, verdict, &notes, &judge)?;
            Ok(serde_json::to_value(rec)?)
        }
        Command::List => {
            let runs = RunStore::open_existing(&cli.run_root)?.list_runs()?;
            Ok(json!(runs
                .iter()
                .map(|m| json!({ "run_id": m.run_id, "status": m.status, "created_at": m.created_at }))
                .collect::<Vec<_>>()))
        }
        Command::Serve { port, host } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(latentscout_server::serve(&cli.run_root, SocketAddr::new(host, port)))?;
            Ok(json!({ "stage": "serve", "outcome": "stopped" }))
        }
        Command::Pipeline(args) => {
            let m = Pipeline::new(open()?).run_all(&args.load()?, log_epoch)?;
            Ok(
                json!({ "run_id": m.run_id, "stage": "pipeline", "status": m.status, "run_dir": open()?.run_dir(&m.run_id) }),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let lines: Vec<&str> =
                msg.lines().take_while(|l| !l.starts_with("Usage:")).map(str::trim).filter(|l| !l.is_empty()).collect();
            eprintln!("error[usage]: {}", lines.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(match e {
                Error::Config(_) | Error::Contract(_) => 2,
                Error::State(_) => 3,
                Error::NotFound(_) => 4,
                _ => 1,
            })
        }
    }
}
