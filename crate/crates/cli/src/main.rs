mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ultradiff::operators::{Bullet, Measure};

use config::{FileConfig, Flags, RunConfig};
use error::CliError;
use output::Artifact;

#[derive(Debug, Parser)]
#[command(name = "ultradiff", version, about = "Multi-topology graphs, ultrametric indexes and p-adic heat operators")]
struct Cli {
    /// TOML file with defaults for any run parameter; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Io {
    /// Input file.
    #[arg(short, long)]
    input: PathBuf,
    /// Artifact path; the artifact goes to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Model {
    #[arg(long)]
    bullet: Option<Bullet>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    measure: Option<Measure>,
    /// Discretization level n (default: one below the vertex discs).
    #[arg(long)]
    level: Option<usize>,
    /// Prime for the embedding (default: the smallest admissible one).
    #[arg(long)]
    prime: Option<u64>,
    /// Time t (heat), horizon (bounds) or tau (converge).
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a topology family as one weighted graph.
    Encode {
        #[command(flatten)]
        io: Io,
        /// Comma-separated primes overriding the file's list.
        #[arg(long)]
        primes: Option<String>,
    },
    /// Recover the topology family from a weighted graph.
    Decode {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        primes: Option<String>,
    },
    /// Build the ultrametric index and disc assignment of a graph.
    Index {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        prime: Option<u64>,
    },
    /// Cluster-parallel topological sort of a DAG.
    Toposort {
        #[command(flatten)]
        io: Io,
        /// Index file whose dendrogram drives the clusters.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Comma-separated seed labels (default: every vertex).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<String>>,
    },
    /// Eigenbasis table of the heat operator.
    Spectrum {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        /// Also export the generator matrix here.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Heat kernel table at time t.
    Heat {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
    },
    /// Certify the truncation or kernel-swap estimate.
    Bounds {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        /// Cut level of the truncated tree.
        #[arg(long, conflicts_with = "swap")]
        truncate: Option<usize>,
        /// Two bullets to compare, e.g. graphdist,ultrametric.
        #[arg(long)]
        swap: Option<String>,
    },
    /// Discretization convergence study.
    Converge {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        /// Reference level N (default: five below the vertex discs).
        #[arg(long)]
        reference: Option<usize>,
        /// Restriction to coarse levels: sample or average.
        #[arg(long)]
        projection: Option<String>,
    },
}

fn model_flags(model: &Model, flags: &mut Flags) {
    flags.bullet = model.bullet;
    flags.alpha = model.alpha;
    flags.measure = model.measure;
    flags.level = model.level;
    flags.prime = model.prime;
    flags.t = model.t;
}

fn run(cli: Cli) -> Result<(String, Vec<Artifact>), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut flags = Flags {
        parallelism: cli.parallelism,
        ..Flags::default()
    };
    match &cli.command {
        Command::Index { prime, .. } => flags.prime = *prime,
        Command::Toposort { seeds, .. } => flags.seeds = seeds.clone(),
        Command::Spectrum { model, .. } | Command::Heat { model, .. } => model_flags(model, &mut flags),
        Command::Bounds { model, truncate, .. } => {
            model_flags(model, &mut flags);
            flags.truncate = *truncate;
        }
        Command::Converge {
            model,
            reference,
            projection,
            ..
        } => {
            model_flags(model, &mut flags);
            flags.reference = *reference;
            flags.projection = projection.clone();
        }
        Command::Encode { .. } | Command::Decode { .. } => {}
    }
    let cfg = RunConfig::resolve(flags, file)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build_global()
        .map_err(|e| CliError::parse(format!("cannot start {} workers: {e}", cfg.parallelism)))?;

    let (name, artifacts) = match cli.command {
        Command::Encode { io, primes } => ("encode", commands::run_encode(&io.input, io.output, primes.as_deref())?),
        Command::Decode { io, primes } => ("decode", commands::run_decode(&io.input, io.output, primes.as_deref())?),
        Command::Index { io, .. } => ("index", commands::run_index(&io.input, io.output, &cfg)?),
        Command::Toposort { io, index, .. } => (
            "toposort",
            commands::run_toposort(&io.input, index.as_deref(), io.output, &cfg)?,
        ),
        Command::Spectrum { io, matrix, .. } => ("spectrum", commands::run_spectrum(&io.input, io.output, matrix, &cfg)?),
        Command::Heat { io, .. } => ("heat", commands::run_heat(&io.input, io.output, &cfg)?),
        Command::Bounds { io, swap, .. } => {
            let pair = swap.as_deref().map(commands::parse_swap).transpose()?;
            ("bounds", commands::run_bounds(&io.input, io.output, pair, &cfg)?)
        }
        Command::Converge { io, .. } => ("converge", commands::run_converge(&io.input, io.output, &cfg)?),
    };
    Ok((name.to_string(), artifacts))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli).and_then(|(name, artifacts)| output::emit(&name, artifacts));
    match result {
        Ok((summary, streamed)) => {
            let summary = serde_json::to_string(&summary).expect("summary serializes");
            let mut stdout = std::io::stdout().lock();
            if streamed.is_empty() {
                let _ = writeln!(stdout, "{summary}");
            } else {
                for text in streamed {
                    let _ = stdout.write_all(text.as_bytes());
                }
                eprintln!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::to_string(&e.record()).expect("error record serializes");
            eprintln!("{record}");
            ExitCode::from(e.exit_code())
        }
    }
}
