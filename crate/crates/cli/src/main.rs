use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualpath_cli::commands;
use dualpath_cli::config::{set, ConfigFile};
use dualpath_cli::error::{CliError, CliResult};
use dualpath_core::pipeline::PendingPolicy;

#[derive(Parser)]
#[command(
    name = "dualpath",
    version,
    about = "Dual-path fraud detection: scoring, synthesis, review"
)]
struct Cli {
    /// TOML file with one section per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic transaction stream.
    GenData(GenDataArgs),
    /// Train the VAE on legitimate rows and calibrate tau.
    TrainVae(TrainVaeArgs),
    /// Train the WGAN-GP synthesizer on fraud rows.
    TrainGan(TrainGanArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Replay a labelled stream through an embedded service.
    Simulate(SimulateArgs),
    /// Show the attribution for a transaction.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    accounts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: salami, cnp_velocity, ato. Pass "" for none.
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    #[arg(long)]
    prevalence: Option<f64>,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    id_offset: Option<u64>,
}

#[derive(Args)]
struct TrainVaeArgs {
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    rows_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    calibration_fraction: Option<f64>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    background_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embedding_seed: Option<u64>,
}

#[derive(Args)]
struct TrainGanArgs {
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    #[arg(long)]
    buffer: Option<PathBuf>,
    #[arg(long)]
    generator_steps: Option<usize>,
    #[arg(long)]
    n_critic: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    explanation_workers: Option<usize>,
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// hold or provisional_approve
    #[arg(long, value_parser = parse_policy)]
    pending_policy: Option<PendingPolicy>,
    #[arg(long)]
    retrain: bool,
    #[arg(long)]
    min_entries: Option<usize>,
    #[arg(long)]
    interval_secs: Option<f64>,
    #[arg(long)]
    seed_stream: Option<PathBuf>,
    #[arg(long)]
    seed_labels: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    reviewer_error: Option<f64>,
    #[arg(long)]
    reviewer_seed: Option<u64>,
    #[arg(long, value_parser = parse_policy)]
    pending_policy: Option<PendingPolicy>,
    #[arg(long)]
    explanation_workers: Option<usize>,
    #[arg(long)]
    cycle: bool,
}

#[derive(Args)]
struct ExplainArgs {
    txid: u64,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn parse_policy(s: &str) -> Result<PendingPolicy, String> {
    match s {
        "hold" => Ok(PendingPolicy::Hold),
        "provisional_approve" | "provisional-approve" => Ok(PendingPolicy::ProvisionalApprove),
        other => Err(format!("unknown pending policy `{other}` (hold, provisional_approve)")),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => {
            let mut s = file.gen_data;
            set(&mut s.out_dir, a.out_dir);
            set(&mut s.length, a.length);
            set(&mut s.accounts, a.accounts);
            set(&mut s.seed, a.seed);
            set(
                &mut s.scenarios,
                a.scenarios.map(|v| v.into_iter().filter(|x| !x.is_empty()).collect()),
            );
            set(&mut s.prevalence, a.prevalence);
            set(&mut s.profiles, a.profiles.map(Some));
            set(&mut s.id_offset, a.id_offset);
            commands::gen_data(&s)?;
        }
        Command::TrainVae(a) => {
            let mut s = file.train_vae;
            set(&mut s.stream, a.stream);
            set(&mut s.labels, a.labels);
            set(&mut s.out_dir, a.out_dir);
            set(&mut s.epochs, a.epochs);
            set(&mut s.rows_per_epoch, a.rows_per_epoch);
            set(&mut s.batch_size, a.batch_size);
            set(&mut s.latent_dim, a.latent_dim);
            set(&mut s.hidden, a.hidden);
            set(&mut s.hidden_layers, a.hidden_layers);
            set(&mut s.calibration_fraction, a.calibration_fraction);
            set(&mut s.quantile, a.quantile);
            set(&mut s.background_size, a.background_size);
            set(&mut s.seed, a.seed);
            set(&mut s.embedding_seed, a.embedding_seed);
            commands::train_vae(&s)?;
        }
        Command::TrainGan(a) => {
            let mut s = file.train_gan;
            set(&mut s.stream, a.stream);
            set(&mut s.labels, a.labels);
            set(&mut s.model_dir, a.model_dir);
            set(&mut s.out_dir, a.out_dir.map(Some));
            set(&mut s.scenarios, a.scenarios);
            set(&mut s.buffer, a.buffer.map(Some));
            set(&mut s.generator_steps, a.generator_steps);
            set(&mut s.n_critic, a.n_critic);
            set(&mut s.batch_size, a.batch_size);
            set(&mut s.lambda, a.lambda);
            set(&mut s.seed, a.seed);
            commands::train_gan_cmd(&s)?;
        }
        Command::Serve(a) => {
            let mut s = file.serve;
            set(&mut s.model_dir, a.model_dir);
            set(&mut s.data_dir, a.data_dir);
            set(&mut s.bind, a.bind);
            set(&mut s.explanation_workers, a.explanation_workers);
            set(&mut s.queue_capacity, a.queue_capacity);
            set(&mut s.pending_policy, a.pending_policy);
            s.retrain |= a.retrain;
            set(&mut s.min_entries, a.min_entries);
            set(&mut s.interval_secs, a.interval_secs.map(Some));
            set(&mut s.seed_stream, a.seed_stream.map(Some));
            set(&mut s.seed_labels, a.seed_labels.map(Some));
            commands::serve(&s)?;
        }
        Command::Simulate(a) => {
            let mut s = file.simulate;
            set(&mut s.model_dir, a.model_dir);
            set(&mut s.stream, a.stream);
            set(&mut s.labels, a.labels);
            set(&mut s.out_dir, a.out_dir);
            set(&mut s.data_dir, a.data_dir.map(Some));
            set(&mut s.reviewer_error, a.reviewer_error);
            set(&mut s.reviewer_seed, a.reviewer_seed);
            set(&mut s.pending_policy, a.pending_policy);
            set(&mut s.explanation_workers, a.explanation_workers);
            s.cycle |= a.cycle;
            commands::simulate(&s)?;
        }
        Command::Explain(a) => {
            let mut s = file.explain;
            set(&mut s.model_dir, a.model_dir);
            set(&mut s.data_dir, a.data_dir.map(Some));
            set(&mut s.stream, a.stream.map(Some));
            s.json |= a.json;
            commands::explain(&s, a.txid)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    e.exit_code()
}
