//! `seqcf`: train next-vote recommenders on session files, evaluate them on
//! held-out sessions, and print recommendations for a partial history.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 model/catalog mismatch.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqcf::tree::DEFAULT_KAPPA;
use seqcf::{
    corpus_stats, evaluate, parse_sessions, recommend_filtered, train_model, EmConfig, Error, EvalConfig, ModelVariant,
    SessionDataset, TrainConfig, TrainedModel, Transform,
};

const DEFAULT_BINS: usize = 2;
const DEFAULT_HISTORY_LEN: usize = 1;
const DEFAULT_TOP: usize = 10;

#[derive(Parser)]
#[command(name = "seqcf", version, about = "Collaborative filtering as next-vote prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a session file and write the model document.
    Train(TrainArgs),
    /// Score a model on held-out sessions (CF accuracy and mean log-probability).
    Evaluate(EvaluateArgs),
    /// Print the most likely next votes after a partial history of item tokens.
    Recommend(RecommendArgs),
    /// Print corpus statistics of a session file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct Threads {
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
}

#[derive(Args)]
struct TrainArgs {
    /// Session file, one whitespace-separated session per line.
    #[arg(long = "train", value_name = "PATH")]
    train: PathBuf,
    /// Where to write the model document.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "NAME", default_value = "bag", value_parser = ["bag", "bin", "expand", "cluster"])]
    transform: String,
    /// Number of length bins (bin transform; default 2).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    bins: Option<u64>,
    /// Train each bin only on whole sessions of its lengths (bin transform).
    #[arg(long)]
    no_prefix: bool,
    /// Number of lag variables per item (expand transform; default 1).
    #[arg(long, value_name = "L", value_parser = clap::value_parser!(u64).range(1..))]
    history_len: Option<u64>,
    /// Structure prior per leaf, in (0, 1] (tree families; default 0.01).
    #[arg(long, value_name = "F")]
    kappa: Option<f64>,
    /// Number of latent classes (cluster transform; default 4).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    classes: Option<u64>,
    /// Seed for EM initialization (cluster transform; default 0).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Held-out session file; its tokens must be in the model's catalog.
    #[arg(long, value_name = "PATH")]
    test: PathBuf,
    /// Also write the report here: JSON if the name ends in `.json`, else key=value lines.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Half-life of the list-position weight.
    #[arg(long, value_name = "F", default_value_t = seqcf::evaluation::DEFAULT_HALF_LIFE)]
    alpha: f64,
    /// Include per-position rows in the report.
    #[arg(long)]
    per_position: bool,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Number of items to list.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_TOP)]
    top: usize,
    /// Skip items already in the history.
    #[arg(long)]
    exclude_seen: bool,
    /// The votes so far, oldest first.
    #[arg(value_name = "TOKEN")]
    history: Vec<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "train", value_name = "PATH")]
    train: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) => 1,
            Error::CatalogMismatch(_) | Error::MalformedModel(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn set_threads(threads: &Threads) -> CliResult<()> {
    if let Some(n) = threads.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn read_sessions(path: &Path) -> CliResult<SessionDataset> {
    parse_sessions(open(path)?, None).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    TrainedModel::load(open(path)?).map_err(|e| {
        let mut failure = Failure::from(e);
        if failure.code != 2 {
            failure.code = 3;
        }
        failure.message = format!("{}: {}", path.display(), failure.message);
        failure
    })
}

/// Builds the training settings, rejecting flags that do not apply to the transform.
fn train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let transform: Transform = args.transform.parse()?;
    let misplaced = |flag: &str, set: bool, allowed: Transform| {
        if set && transform != allowed {
            Err(Failure::usage(format!("--{flag} applies only to --transform {allowed}")))
        } else {
            Ok(())
        }
    };
    misplaced("bins", args.bins.is_some(), Transform::Bin)?;
    misplaced("no-prefix", args.no_prefix, Transform::Bin)?;
    misplaced("history-len", args.history_len.is_some(), Transform::Expand)?;
    misplaced("classes", args.classes.is_some(), Transform::Cluster)?;
    misplaced("seed", args.seed.is_some(), Transform::Cluster)?;
    if args.kappa.is_some() && transform == Transform::Cluster {
        return Err(Failure::usage("--kappa applies only to the tree families"));
    }
    let config = match transform {
        Transform::Bag => TrainConfig::baseline(),
        Transform::Bin => TrainConfig::binned(args.bins.map_or(DEFAULT_BINS, |b| b as usize), !args.no_prefix),
        Transform::Expand => TrainConfig::expanded(args.history_len.map_or(DEFAULT_HISTORY_LEN, |l| l as usize)),
        Transform::Cluster => {
            let defaults = EmConfig::default();
            TrainConfig::cluster(EmConfig {
                class_count: args.classes.map_or(defaults.class_count, |c| c as usize),
                seed: args.seed.unwrap_or(defaults.seed),
                ..defaults
            })
        }
    }
    .with_kappa(args.kappa.unwrap_or(DEFAULT_KAPPA));
    config.validate()?;
    Ok(config)
}

fn train_summary(model: &TrainedModel) -> String {
    let mut out = format!("transform={}\nitems={}\n", model.config.transform, model.item_count());
    let lengths = match &model.variant {
        ModelVariant::Binned { scheme, .. } => scheme
            .bins
            .iter()
            .map(|b| Some(b.hi.map_or(format!("{}+", b.lo), |hi| format!("{}-{hi}", b.lo))))
            .collect(),
        _ => vec![None; model.forests().len()],
    };
    for (i, ((forest, summary), lengths)) in model.forests().iter().zip(model.summary()).zip(lengths).enumerate() {
        let f = i + 1;
        if let Some(lengths) = lengths {
            out.push_str(&format!("forest.{f}.lengths={lengths}\n"));
        }
        out.push_str(&format!("forest.{f}.cases={}\n", summary.cases));
        out.push_str(&format!("forest.{f}.trees={}\n", forest.trees.len()));
        out.push_str(&format!("forest.{f}.predictors={}\n", forest.space.candidates_for(1).len()));
        out.push_str(&format!("forest.{f}.leaves={}\n", summary.leaves));
    }
    match &model.variant {
        ModelVariant::Cluster { model } => out.push_str(&format!("classes={}\n", model.class_count())),
        _ => out.push_str(&format!("total_leaves={}\n", model.summary().iter().map(|s| s.leaves).sum::<usize>())),
    }
    out
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let config = train_config(&args)?;
    set_threads(&args.threads)?;
    let data = read_sessions(&args.train)?;
    let model = train_model(&data, &config)?;
    model.save(create(&args.model)?)?;
    print!("{}", train_summary(&model));
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let cfg = EvalConfig { alpha: args.alpha, ..EvalConfig::default() };
    cfg.validate()?;
    set_threads(&args.threads)?;
    let model = load_model(&args.model)?;
    let test = parse_sessions(open(&args.test)?, Some(&model.catalog)).map_err(|e| {
        let code = if matches!(e, Error::UnknownToken { .. }) { 3 } else { 2 };
        Failure { code, message: format!("{}: {e}", args.test.display()) }
    })?;
    let report = evaluate(&model, &test, &cfg)?;
    let text = report.to_key_value(args.per_position);
    if let Some(path) = &args.report {
        let body = if path.extension().is_some_and(|e| e == "json") { report.to_json(args.per_position) } else { text.clone() };
        create(path)?.write_all(body.as_bytes()).map_err(Error::from)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_recommend(args: RecommendArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let history = args
        .history
        .iter()
        .map(|token| {
            model.catalog.index_of(token).ok_or_else(|| Failure {
                code: 2,
                message: format!("token {token:?} is not in the model's item catalog"),
            })
        })
        .collect::<CliResult<Vec<usize>>>()?;
    let list = recommend_filtered(&model, &history, args.top, args.exclude_seen)?;
    let mut stdout = io::stdout().lock();
    for (rank, (item, prob)) in list.iter().enumerate() {
        let token = model.catalog.token(*item).expect("ranked items are in the catalog");
        writeln!(stdout, "{} {token} {prob}", rank + 1).map_err(Error::from)?;
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult<()> {
    let stats = corpus_stats(&read_sessions(&args.train)?)?;
    println!("sessions={}", stats.session_count);
    println!("items={}", stats.item_count);
    println!("votes={}", stats.total_votes);
    println!("mean_length={}", stats.mean_length);
    println!("median_length={}", stats.median_length);
    println!("max_length={}", stats.max_length);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("seqcf: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
