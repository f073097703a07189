use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use drift::dataset::load_movielens;
use drift::harness::{
    emit_results, run, DataBundle, Mode, PartitionSpec, RunConfig, ScheduleSpec,
};
use drift::DriftError;

/// Train the federated recommender or its centralized baseline on a
/// MovieLens-format dataset and write a result file.
#[derive(Parser, Debug)]
#[command(name = "drift", version, about)]
struct Args {
    /// Ratings file (u.data tab layout or ratings.dat :: layout)
    #[arg(long)]
    dataset: PathBuf,

    /// Item file (u.item or movies.dat); required for genre partitioning
    #[arg(long)]
    items: Option<PathBuf>,

    /// drift | baseline
    #[arg(long, default_value = "drift")]
    mode: String,

    /// Embedding dimension
    #[arg(long, default_value_t = 16)]
    dim: usize,

    /// Learning rate in (0, 1]
    #[arg(long, default_value_t = 0.05)]
    lr: f64,

    /// Ridge weight added to the pair loss
    #[arg(long, default_value_t = 0.01)]
    reg: f64,

    /// Completed blocks an owner buffers before requesting an update
    #[arg(long, default_value_t = 2)]
    theta: usize,

    #[arg(long, default_value_t = 5)]
    epochs: usize,

    /// Cutoff for MAP@K / NDCG@K
    #[arg(long = "k-eval", default_value_t = 10)]
    k_eval: usize,

    /// genre | kmeans:K | hash:K
    #[arg(long, default_value = "genre")]
    partition: String,

    /// det | threads:N
    #[arg(long, default_value = "det")]
    schedule: String,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Result file path; omit to print the summary only
    #[arg(long)]
    out: Option<PathBuf>,

    /// Fraction of each user's earliest interactions used for training
    #[arg(long = "train-fraction", default_value_t = 0.8)]
    train_fraction: f64,
}

fn parse_mode(s: &str) -> Result<Mode, DriftError> {
    match s {
        "drift" => Ok(Mode::Drift),
        "baseline" => Ok(Mode::Baseline),
        other => Err(DriftError::InvalidArgument(format!(
            "mode must be drift or baseline, got {other:?}"
        ))),
    }
}

fn parse_partition(s: &str) -> Result<PartitionSpec, DriftError> {
    if s == "genre" {
        return Ok(PartitionSpec::Genre);
    }
    let parse_k = |rest: &str| {
        rest.parse::<usize>().map_err(|_| {
            DriftError::InvalidArgument(format!("bad partition count in {s:?}"))
        })
    };
    if let Some(rest) = s.strip_prefix("kmeans:") {
        return Ok(PartitionSpec::KMeans(parse_k(rest)?));
    }
    if let Some(rest) = s.strip_prefix("hash:") {
        return Ok(PartitionSpec::Hash(parse_k(rest)?));
    }
    Err(DriftError::InvalidArgument(format!(
        "partition must be genre, kmeans:K or hash:K, got {s:?}"
    )))
}

fn parse_schedule(s: &str) -> Result<ScheduleSpec, DriftError> {
    if s == "det" {
        return Ok(ScheduleSpec::Deterministic);
    }
    if let Some(rest) = s.strip_prefix("threads:") {
        let n = rest.parse::<usize>().map_err(|_| {
            DriftError::InvalidArgument(format!("bad thread count in {s:?}"))
        })?;
        return Ok(ScheduleSpec::Threads(n));
    }
    Err(DriftError::InvalidArgument(format!(
        "schedule must be det or threads:N, got {s:?}"
    )))
}

fn run_cli(args: Args) -> Result<(), DriftError> {
    let config = RunConfig {
        mode: parse_mode(&args.mode)?,
        dim: args.dim,
        learning_rate: args.lr,
        reg_weight: args.reg,
        theta: args.theta,
        epochs: args.epochs,
        eval_k: args.k_eval,
        partition: parse_partition(&args.partition)?,
        schedule: parse_schedule(&args.schedule)?,
        seed: args.seed,
        track_trajectory: false,
        retain_log_payloads: false,
    };
    config.validate()?;

    let loaded = load_movielens(&args.dataset, args.items.as_deref())?;
    let stream = loaded.interaction_stream()?;
    let (train, test) = drift::dataset::chronological_split(&stream, args.train_fraction)?;
    log::info!(
        "loaded {} interactions: {} users, {} items ({} train / {} test)",
        stream.len(),
        loaded.num_users(),
        loaded.num_items(),
        train.len(),
        test.len()
    );
    let data = DataBundle {
        train,
        test,
        catalog: loaded.catalog.clone(),
        num_users: loaded.num_users(),
        num_items: loaded.num_items(),
    };

    let outcome = run(&config, &data)?;
    for r in &outcome.epochs {
        println!(
            "epoch {:>2}  train_loss {:.6}  test_loss {:.6}  MAP@{} {:.4}  NDCG@{} {:.4}  blocks {}",
            r.epoch, r.train_loss, r.test_loss, config.eval_k, r.map_at_k, config.eval_k,
            r.ndcg_at_k, r.trained_blocks
        );
    }
    let total = outcome.breakdown.total();
    if total.as_nanos() > 0 {
        println!("phase shares of {:.3}s measured:", total.as_secs_f64());
        for (phase, d) in outcome.breakdown.iter() {
            println!(
                "  {:<24} {:>10.3} ms  {:>5.1}%",
                phase.name(),
                d.as_secs_f64() * 1e3,
                100.0 * outcome.breakdown.share(phase)
            );
        }
    }
    if let Some(out) = &args.out {
        emit_results(&outcome, &config, out)?;
        println!("results written to {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run_cli(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drift: {e}");
            ExitCode::FAILURE
        }
    }
}
