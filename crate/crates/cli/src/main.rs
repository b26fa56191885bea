mod commands;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use himnet::graph_io::GraphError;
use himnet::train::TrainError;
use thiserror::Error;

use config::Command;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] GraphError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Run(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gradient check failed: {}", .0.join(", "))]
    GradientCheck(Vec<String>),
    #[error("replay differs from the original run: {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input (flags, config, datasets), 1 for failed runs.
    pub fn exit_code(&self) -> u8 {
        fn config(e: &TrainError) -> bool {
            match e {
                TrainError::Config(_) | TrainError::Graph(GraphError::Config(_)) => true,
                TrainError::Fold { source, .. } => config(source),
                _ => false,
            }
        }
        match self {
            CliError::Usage(_) | CliError::Data(_) => 2,
            CliError::Train(e) if config(e) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "himnet",
    version,
    about = "Graph-level anomaly detection with hierarchical memory networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cross-validate one configuration
    Cv(RunArgs),
    /// Cross-validate a grid of configurations
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Compare analytic gradients with central differences
    Gradcheck(GradArgs),
    /// Repeat a run from its manifest
    Replay(ReplayArgs),
    /// Write a synthetic density dataset in TUDataset format
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum SweepKind {
    /// One report per contamination rate in --tau
    Contamination(RunArgs),
    /// Vary P with Q = 1, then Q with P = 1
    Memory(RunArgs),
    /// One report per architecture in --variant
    Ablation(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Dataset name, e.g. AIDS
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding NAME/NAME_A.txt or NAME_A.txt
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Entropy weight
    #[arg(long)]
    alpha: Option<String>,
    /// Hard-shrink threshold
    #[arg(long)]
    shrink_lambda: Option<String>,
    /// Node memory blocks: `2`, `1..6` or `1,3,5`
    #[arg(long)]
    p: Option<String>,
    /// Graph memory blocks: `2`, `1..6` or `1,3,5`
    #[arg(long)]
    q: Option<String>,
    /// Contamination percentages, e.g. `0,2,4,8,16`
    #[arg(long)]
    tau: Option<String>,
    /// full, no_node, no_graph or gae_only (comma list for ablation)
    #[arg(long)]
    variant: Option<String>,
    /// Worker threads; 0 uses every core
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Flat `key = value` file; flags win over it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstruction losses over all n_max padded rows
    #[arg(long)]
    unmasked_losses: bool,
    /// Divide loss terms by their element counts
    #[arg(long)]
    normalize_losses: bool,
}

impl RunArgs {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("dataset", &self.dataset),
            ("data-dir", &self.data_dir),
            ("folds", &self.folds),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("batch-size", &self.batch_size),
            ("alpha", &self.alpha),
            ("shrink-lambda", &self.shrink_lambda),
            ("p", &self.p),
            ("q", &self.q),
            ("tau", &self.tau),
            ("variant", &self.variant),
            ("jobs", &self.jobs),
            ("out-dir", &self.out_dir),
        ];
        let mut out: BTreeMap<String, String> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for (key, set) in [
            ("unmasked-losses", self.unmasked_losses),
            ("normalize-losses", self.normalize_losses),
        ] {
            if set {
                out.insert(key.into(), "true".into());
            }
        }
        out
    }
}

#[derive(Args)]
struct GradArgs {
    /// Central-difference step
    #[arg(long)]
    eps: Option<String>,
    /// Random draws per check
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flip the sign of one primitive's backward rule
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    /// manifest.json of the run to repeat
    manifest: PathBuf,
    /// Write outputs here instead of the original directory
    #[arg(long)]
    out_dir: Option<String>,
    /// Fail unless the outputs match the original ones
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long, default_value = "SYNTH")]
    name: String,
    #[arg(long, default_value_t = 120)]
    normals: usize,
    #[arg(long, default_value_t = 30)]
    anomalies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_config(path: Option<&Path>) -> Result<BTreeMap<String, String>, CliError> {
    match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            config::parse_config_file(&text, p)
        }
        None => Ok(BTreeMap::new()),
    }
}

fn experiment(command: Command, args: &RunArgs) -> Result<(), CliError> {
    let file = read_config(args.config.as_deref())?;
    let resolved = config::Resolved::new(command, &args.flags(), &file);
    commands::execute(command, resolved, args.config.clone(), None, None).map(|_| ())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Cv(args) => experiment(Command::Cv, &args),
        Cmd::Sweep { kind } => match kind {
            SweepKind::Contamination(args) => experiment(Command::Contamination, &args),
            SweepKind::Memory(args) => experiment(Command::Memory, &args),
            SweepKind::Ablation(args) => experiment(Command::Ablation, &args),
        },
        Cmd::Gradcheck(args) => {
            let file = read_config(args.config.as_deref())?;
            let flags: BTreeMap<String, String> = [
                ("eps", &args.eps),
                ("seeds", &args.seeds),
                ("out-dir", &args.out_dir),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
            let fault = args
                .inject_fault
                .as_deref()
                .map(|p| {
                    p.parse()
                        .map_err(|e| CliError::Usage(format!("--inject-fault: {e}")))
                })
                .transpose()?;
            let resolved = config::Resolved::new(Command::Gradcheck, &flags, &file);
            commands::execute(Command::Gradcheck, resolved, args.config, fault, None).map(|_| ())
        }
        Cmd::Replay(args) => commands::replay(&args.manifest, args.out_dir, args.verify),
        Cmd::Synth(args) => {
            commands::synth(&args.out_dir, &args.name, args.normals, args.anomalies, args.seed)
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
