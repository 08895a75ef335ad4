use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use mvgcca::experiment::{
    export_embedding, grid_search, run_experiment, DatasetKind, ExperimentConfig, Grid, Method, Task,
};
use mvgcca::Error;

/// Multiview graph CCA experiments: baselines, the variational model and
/// their evaluation.
#[derive(Parser, Debug)]
#[command(name = "mvgcca", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed the configured dataset with a trained checkpoint.
    Export {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint written by a training run.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Destination of the embedding table.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = DatasetKind::from_str)]
    dataset: Option<DatasetKind>,
    #[arg(long, value_parser = Method::from_str)]
    method: Option<Method>,
    #[arg(long, value_parser = Task::from_str)]
    task: Option<Task>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for the report, embedding, checkpoint and log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// TOML file of parameter lists to search.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Seeds per grid point.
    #[arg(long, default_value_t = 3)]
    runs: usize,
}

impl RunArgs {
    fn config(&self) -> mvgcca::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field).+ = v;
                }
            };
        }
        set!(dataset => dataset);
        set!(method => method);
        set!(task => task);
        set!(data_dir => data_dir);
        set!(seed => seed);
        set!(latent_dim => latent_dim);
        set!(knn_k => graph.k);
        set!(epochs => train.epochs);
        set!(lr => train.learning_rate);
        set!(batch_size => train.batch_size);
        set!(dropout => train.dropout);
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        if self.gamma.is_some() {
            c.baseline.gamma = self.gamma;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> mvgcca::Result<()> {
    match cli.command {
        Some(Command::Export { run, checkpoint, output }) => {
            let config = run.config()?;
            let z = export_embedding(&config, &checkpoint, &output)?;
            println!("wrote {} x {} embedding to {}", z.nrows(), z.ncols(), output.display());
        }
        None => {
            let args = cli.run;
            let config = args.config()?;
            match &args.grid {
                Some(path) => {
                    let grid = Grid::from_file(path)?;
                    let outcome = grid_search(&config, &grid, args.runs)?;
                    print!("{}", outcome.to_records());
                    println!("selected point {}: {}", outcome.best, outcome.points[outcome.best].description);
                    print!("{}", outcome.report.to_table());
                }
                None => print!("{}", run_experiment(&config)?.to_table()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
