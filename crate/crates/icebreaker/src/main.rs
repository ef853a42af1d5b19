use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use icebreaker::config::{ModelKind, Settings};
use icebreaker::formats;
use icebreaker::pipeline::{self, Dataset, TrainedModel};
use icebreaker::{Error, Result};
use icebreaker_core::dataset::{generate_synthetic, SplitPart, SynthConfig, VideoId};
use icebreaker_core::evaluation::{DEFAULT_HIT_KS, DEFAULT_RECALL_KS};

/// Cold-start video relevance: synthesize data, train, predict, evaluate.
///
/// Exit status: 0 success, 1 configuration, 2 usage, 3 training divergence,
/// 4 data or format, 5 evaluation (missing predictions).
#[derive(Debug, Parser)]
#[command(name = "icebreaker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded cluster-structured dataset.
    Synth(SynthArgs),
    /// Train a model on the training split.
    Train(TrainArgs),
    /// Rank candidates for every query of a split.
    Predict(PredictArgs),
    /// Score predictions against the relevance lists.
    Eval(EvalArgs),
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    video_dim: Option<usize>,
    #[arg(long)]
    frame_dim: Option<usize>,
    #[arg(long)]
    max_frames: Option<usize>,
    /// Relevant videos per query.
    #[arg(long)]
    relevant: Option<usize>,
    /// Within-cluster noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train, validation and test fractions, e.g. `0.6,0.2,0.2`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split: Option<Vec<f64>>,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Setting override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QuerySplit {
    Val,
    Test,
}

#[derive(Debug, clap::Args)]
struct PredictArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    split: QuerySplit,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    topk: u32,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeSplit {
    Train,
    Val,
    Test,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Predictions CSV.
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset directory supplying relevance lists and splits.
    #[arg(long, required_unless_present = "relevance")]
    data: Option<PathBuf>,
    /// Relevance file, instead of `--data`.
    #[arg(long, conflicts_with = "data")]
    relevance: Option<PathBuf>,
    /// Split file, instead of `--data`.
    #[arg(long, requires = "relevance")]
    splits: Option<PathBuf>,
    /// Only evaluate queries of this split.
    #[arg(long, value_enum)]
    split: Option<ScopeSplit>,
    /// Skip queries without predictions instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIT_KS)]
    hit_ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RECALL_KS)]
    recall_ks: Vec<usize>,
    /// Machine-readable `metric,k,value` report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.to_owned(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let split_fractions = match args.split {
        Some(v) => [v[0], v[1], v[2]],
        None => d.split_fractions,
    };
    let cfg = SynthConfig {
        n_videos: args.videos.unwrap_or(d.n_videos),
        n_clusters: args.clusters.unwrap_or(d.n_clusters),
        video_dim: args.video_dim.unwrap_or(d.video_dim),
        frame_dim: args.frame_dim.unwrap_or(d.frame_dim),
        max_frames: args.max_frames.unwrap_or(d.max_frames),
        relevant_per_query: args.relevant.unwrap_or(d.relevant_per_query),
        cluster_noise_sigma: args.sigma.unwrap_or(d.cluster_noise_sigma),
        seed: args.seed.unwrap_or(d.seed),
        split_fractions,
    };
    let data = Dataset::from(generate_synthetic(&cfg)?);
    data.save(&args.out)?;
    println!(
        "synth: {} videos, {} clusters, sigma {}, seed {} -> {}",
        cfg.n_videos,
        cfg.n_clusters,
        cfg.cluster_noise_sigma,
        cfg.seed,
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &args.config {
        settings.apply_file(path)?;
    }
    for pair in &args.overrides {
        settings.set_pair(pair)?;
    }
    if let Some(m) = args.model {
        settings.model = Some(m);
    }
    if let Some(seed) = args.seed {
        settings.seed = seed;
    }
    let Some(kind) = settings.model else {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "no model selected: pass --model or set `model` in --config",
            )
            .exit();
    };
    let data = Dataset::load(&args.data)?;
    log::info!("training {kind} on {} videos", data.split.train.len());
    let model = pipeline::train(&settings, kind, &data)?;
    model.save(&args.out)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let data = Dataset::load(&args.data)?;
    let part = match args.split {
        QuerySplit::Val => SplitPart::Validation,
        QuerySplit::Test => SplitPart::Test,
    };
    let rankings = pipeline::predict(&model, &data, data.split.part(part), args.topk as usize)?;
    write_output(args.out.as_deref(), &formats::format_predictions(&rankings))
}

fn eval(args: EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.predictions)
        .map_err(|e| Error::Io { path: args.predictions.clone(), source: e })?;
    let preds = formats::parse_predictions(&text)?;
    let (rel_path, split_path) = match &args.data {
        Some(dir) => (dir.join(pipeline::RELEVANCE_FILE), Some(dir.join(pipeline::SPLIT_FILE))),
        None => (args.relevance.clone().expect("clap requires one"), args.splits.clone()),
    };
    let rel = formats::load_relevance(&rel_path)?;
    let scope: Option<BTreeSet<VideoId>> = match args.split {
        None => None,
        Some(s) => {
            let path = split_path.ok_or_else(|| Error::Config("--split needs --data or --splits".into()))?;
            let split = formats::load_split(&path)?;
            let part = match s {
                ScopeSplit::Train => SplitPart::Train,
                ScopeSplit::Val => SplitPart::Validation,
                ScopeSplit::Test => SplitPart::Test,
            };
            Some(split.part(part).clone())
        }
    };
    if args.hit_ks.contains(&0) || args.recall_ks.contains(&0) {
        return Err(Error::Config("K values must be at least 1".into()));
    }
    let report =
        pipeline::evaluate_predictions(&preds, &rel, scope.as_ref(), args.lenient, &args.hit_ks, &args.recall_ks)?;
    print!("{}", formats::format_report_table(&report));
    if let Some(out) = &args.out {
        write_output(Some(out), &formats::format_report_csv(&report))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    pipeline::configure_threads()?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
