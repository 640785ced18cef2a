use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use failmap::dataset::TaskKind;
use failmap::failure::Reference;
use failmap::pipeline::{generate_planted, planted_schema, Pipeline};

#[derive(Parser)]
#[command(name = "failmap", version, about = "Find, explain and correct failure modes of a predictive model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Fold to process; all folds when omitted.
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Classification,
    Regression,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage on every fold.
    Run(RunArgs),
    /// Compute filters and build the Mapper graph.
    BuildGraph(StageArgs),
    /// Partition the graph and select failure modes.
    Extract(StageArgs),
    /// Train the correction ensemble on extracted and selected modes.
    Train(StageArgs),
    /// Evaluate the ensemble on the held-out fold.
    Evaluate(StageArgs),
    /// Rank features that distinguish each mode (KS statistic).
    Diagnose {
        #[command(flatten)]
        stage: StageArgs,
        /// `dataset`, `rest`, or `mode:<id>`.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Write a synthetic dataset with planted failures as CSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 800)]
        inliers: usize,
        #[arg(long, default_value_t = 200)]
        outliers: usize,
        #[arg(long, default_value_t = 10)]
        dims: usize,
        #[arg(long, value_enum, default_value_t = Task::Classification)]
        task: Task,
    },
    /// Serve a fold's artifacts over HTTP.
    Serve {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn open(args: &RunArgs) -> anyhow::Result<(Pipeline, PathBuf)> {
    let p = Pipeline::from_path(&args.config, args.seed)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let out = args
        .out
        .clone()
        .or_else(|| p.default_output())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set `output` in the config"))?;
    Ok((p, out))
}

fn folds(p: &Pipeline, fold: Option<usize>) -> Vec<usize> {
    match fold {
        Some(f) => vec![f],
        None => (0..p.splits.len()).collect(),
    }
}

fn parse_reference(s: &str) -> anyhow::Result<Reference> {
    match s {
        "dataset" => Ok(Reference::Dataset),
        "rest" => Ok(Reference::Rest),
        _ => match s.strip_prefix("mode:") {
            Some(id) => Ok(Reference::Mode(id.parse().context("mode id")?)),
            None => bail!("reference must be `dataset`, `rest` or `mode:<id>`, got `{s}`"),
        },
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn each_fold<T>(args: &StageArgs, f: impl Fn(&Pipeline, &Path, usize) -> failmap::Result<T>) -> anyhow::Result<()> {
    let (p, out) = open(&args.run)?;
    for fold in folds(&p, args.fold) {
        f(&p, &out, fold)?;
        eprintln!("fold {fold}: done");
    }
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let (p, out) = open(&args)?;
            let outcome = p.run(&out)?;
            for f in &outcome.report.folds {
                for w in &f.warnings {
                    eprintln!("WARNING (fold {}): {w}", f.fold);
                }
            }
            print_json(&outcome.report.summary)?;
        }
        Command::BuildGraph(a) => each_fold(&a, |p, o, f| p.build_graph_stage(o, f))?,
        Command::Extract(a) => each_fold(&a, |p, o, f| p.extract_stage(o, f))?,
        Command::Train(a) => each_fold(&a, |p, o, f| p.train_stage(o, f))?,
        Command::Evaluate(a) => each_fold(&a, |p, o, f| p.evaluate_stage(o, f))?,
        Command::Diagnose {
            stage,
            reference,
            top_n,
        } => {
            let (p, _) = open(&stage.run)?;
            let reference = match reference {
                Some(r) => parse_reference(&r)?,
                None => p.config.diagnose.reference.clone(),
            };
            let top_n = top_n.unwrap_or(p.config.diagnose.top_n);
            each_fold(&stage, |p, o, f| p.diagnose_stage(o, f, &reference, top_n))?;
        }
        Command::Generate {
            out,
            seed,
            inliers,
            outliers,
            dims,
            task,
        } => {
            let task = match task {
                Task::Classification => TaskKind::Classification,
                Task::Regression => TaskKind::Regression,
            };
            let d = generate_planted(seed, inliers, outliers, dims, task)?;
            d.write_csv(&out, &planted_schema())?;
            eprintln!("wrote {} rows to {}", d.row_count(), out.display());
        }
        Command::Serve { out, fold, bind } => {
            let state = failmap_cli::AppState::load(&out, fold)?;
            failmap_cli::serve(state, &bind).await?;
        }
    }
    Ok(())
}
