use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etnas_core::arch::ModelConfig;
use etnas_core::experiment::{
    cmd_ablation, cmd_search, genome_compose, genome_diff, genome_params, genome_show, genome_validate, load_genome,
    ExperimentConfig, ExperimentError, PRESETS,
};

#[derive(Parser)]
#[command(
    name = "etnas",
    version,
    about = "Evolutionary seq2seq architecture search with progressive dynamic hurdles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one search and write its event log, checkpoint and summary.
    Search(SearchArgs),
    /// Compare hurdle search against random seeding and fixed-step controls.
    Ablation(RunArgs),
    /// Inspect genome files.
    #[command(subcommand)]
    Genome(GenomeCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; may start from a preset via `preset = "NAME"`.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: desk, paper-5.1 or paper-5.2.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Continue an interrupted run from its checkpoint file.
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    #[arg(long, value_name = "N", hide = true)]
    halt_after: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_name = "N", default_value_t = 512)]
    embedding: usize,
    #[arg(long, value_name = "N", default_value_t = 32768)]
    vocab: usize,
}

impl ModelArgs {
    fn model(&self) -> ModelConfig {
        ModelConfig {
            input_embedding_dim: self.embedding,
            vocab_size: self.vocab,
            ..ModelConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum GenomeCommand {
    /// Print a genome in canonical form with its id.
    Show { file: PathBuf },
    /// Check a genome against the search-space constraints.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// List the fields where two genomes differ.
    Diff { a: PathBuf, b: PathBuf },
    /// Print parameter counts and the scale that fits the parameter range.
    Params {
        file: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Describe the scaled computation graph.
    Compose {
        #[arg(long, value_name = "FILE")]
        genome: PathBuf,
        /// Emit the graph document (the only output format).
        #[arg(long)]
        report: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn resolve(args: &RunArgs, fallback: Option<&Path>) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => ExperimentConfig::preset(name).ok_or_else(|| {
            ExperimentError::Usage(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESETS.join(", ")
            ))
        })?,
        (None, None) => match fallback.filter(|p| p.exists()) {
            Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::preset("desk").expect("desk preset exists"),
        },
    };
    if let Some(seed) = args.seed {
        config.search.seed = seed;
        config.oracle.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<bool, ExperimentError> {
    match cli.command {
        Command::Search(args) => {
            let saved = args.run.out.join("config.toml");
            let fallback = args.resume.as_ref().map(|_| saved.as_path());
            let mut config = resolve(&args.run, fallback)?;
            if args.resume.is_none() {
                config.search.worker_count = args.run.workers.unwrap_or(1);
            }
            let summary = cmd_search(&config, &args.run.out, args.resume.as_deref(), args.halt_after)?;
            if !summary.completed {
                println!(
                    "halted after {} children; resume with --resume",
                    summary.children_issued
                );
            }
            match summary.top.first() {
                Some(best) => println!(
                    "best model {} fitness {:.5} perplexity {:.4} steps {} genome {}",
                    best.model_id, best.fitness, best.perplexity, best.steps, best.genome_id
                ),
                None => println!("no model evaluated"),
            }
            println!(
                "{} models, {} steps, hurdles {:?}",
                summary.models_evaluated, summary.steps_consumed, summary.hurdles
            );
            Ok(true)
        }
        Command::Ablation(args) => {
            let config = resolve(&args, None)?;
            let report = cmd_ablation(&config, &args.out, args.workers.unwrap_or_else(default_workers))?;
            print!("{}", report.to_table());
            Ok(true)
        }
        Command::Genome(cmd) => match cmd {
            GenomeCommand::Show { file } => {
                print!("{}", genome_show(&load_genome(&file)?));
                Ok(true)
            }
            GenomeCommand::Validate { file, model } => {
                let (text, valid) = genome_validate(&load_genome(&file)?, &model.model());
                print!("{text}");
                Ok(valid)
            }
            GenomeCommand::Diff { a, b } => {
                print!("{}", genome_diff(&load_genome(&a)?, &load_genome(&b)?));
                Ok(true)
            }
            GenomeCommand::Params { file, model } => {
                print!("{}", genome_params(&load_genome(&file)?, &model.model())?);
                Ok(true)
            }
            GenomeCommand::Compose { genome, model, .. } => {
                print!("{}", genome_compose(&load_genome(&genome)?, &model.model())?);
                Ok(true)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
