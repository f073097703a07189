//! End-to-end training runs and result files.
//!
//! [`run_drift`] replays the training stream through the federation epoch
//! by epoch; [`run_baseline`] is the centralized reference: same block
//! rules, same loss, same update rule, applied immediately per completed
//! block on the undivided stream with no partitioning or encryption.
//! Results go to a flat text file (see RESULTS.md) whose only
//! nondeterministic lines carry a `time.` prefix.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::block::{Block, BlockBuffer};
use crate::dataset::InteractionStream;
use crate::error::{DriftError, Result};
use crate::eval::{evaluate, EvalReport};
use crate::federation::{
    run_epoch_threaded, CosStats, DoStats, Federation, FederationConfig, MessageLog,
    ReprAuditEntry,
};
use crate::loss::{block_gradients, block_loss};
use crate::model::{init_embeddings, EmbeddingStore, GradientBundle};
use crate::partition::{partition_by_tags, partition_hash, partition_kmeans, ItemCatalog};
use crate::timing::{Phase, PhaseClock, TimeBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Drift,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Drift => "drift",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleSpec {
    /// Single-threaded FIFO bus; fully reproducible.
    Deterministic,
    /// Owner threads plus a coordinator thread.
    Threads(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSpec {
    /// One owner per genre tag (needs a tagged catalog).
    Genre,
    /// K-means on item features, k owners.
    KMeans(usize),
    /// Hash fallback, k owners.
    Hash(usize),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub dim: usize,
    pub learning_rate: f64,
    pub reg_weight: f64,
    pub theta: usize,
    pub epochs: usize,
    pub eval_k: usize,
    pub partition: PartitionSpec,
    pub schedule: ScheduleSpec,
    pub seed: u64,
    /// Record a store fingerprint after every update (equivalence tests).
    pub track_trajectory: bool,
    /// Keep full message payloads in the log (security audits).
    pub retain_log_payloads: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Drift,
            dim: 16,
            learning_rate: 0.05,
            reg_weight: 0.01,
            theta: 2,
            epochs: 5,
            eval_k: 10,
            partition: PartitionSpec::Genre,
            schedule: ScheduleSpec::Deterministic,
            seed: 42,
            track_trajectory: false,
            retain_log_payloads: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(DriftError::InvalidArgument(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.theta == 0 {
            return Err(DriftError::InvalidArgument("theta must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(DriftError::InvalidArgument("need at least one epoch".into()));
        }
        if self.dim == 0 {
            return Err(DriftError::InvalidArgument("dim must be at least 1".into()));
        }
        if self.reg_weight < 0.0 {
            return Err(DriftError::InvalidArgument(
                "regularization weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn partition_name(&self) -> String {
        match &self.partition {
            PartitionSpec::Genre => "genre".into(),
            PartitionSpec::KMeans(k) => format!("kmeans:{k}"),
            PartitionSpec::Hash(k) => format!("hash:{k}"),
        }
    }

    pub fn schedule_name(&self) -> String {
        match self.schedule {
            ScheduleSpec::Deterministic => "det".into(),
            ScheduleSpec::Threads(n) => format!("threads:{n}"),
        }
    }
}

/// Prepared train/test streams plus the sizes and catalog a run needs.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: InteractionStream,
    pub test: InteractionStream,
    pub catalog: ItemCatalog,
    pub num_users: usize,
    pub num_items: usize,
}

impl DataBundle {
    /// Split a raw stream chronologically; the catalog defaults to the bare
    /// item id range.
    pub fn from_stream(
        stream: &InteractionStream,
        num_users: usize,
        num_items: usize,
        train_fraction: f64,
    ) -> Result<Self> {
        let (train, test) = crate::dataset::chronological_split(stream, train_fraction)?;
        Ok(DataBundle {
            train,
            test,
            catalog: ItemCatalog::from_ids((0..num_items as u32).collect()),
            num_users,
            num_items,
        })
    }
}

/// Per-epoch training and evaluation record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Mean objective loss (with the configured ridge) over trained blocks.
    pub train_loss: f64,
    pub trained_blocks: u64,
    /// Mean pure ranking loss (no ridge) over blocks built from the test
    /// stream, under the store as of this epoch's end.
    pub test_loss: f64,
    pub map_at_k: f64,
    pub ndcg_at_k: f64,
}

/// Everything a federated run leaves behind for audits.
#[derive(Debug)]
pub struct FederationAudit {
    pub log: MessageLog,
    pub do_stats: Vec<DoStats>,
    pub do_partitions: Vec<Vec<u32>>,
    pub cos_stats: CosStats,
    pub repr_audit: Vec<ReprAuditEntry>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub breakdown: TimeBreakdown,
    pub epochs: Vec<EpochRecord>,
    pub store: EmbeddingStore,
    pub trajectory: Option<Vec<u64>>,
    pub audit: Option<FederationAudit>,
}

fn build_partitions(config: &RunConfig, catalog: &ItemCatalog) -> Result<Vec<Vec<u32>>> {
    match &config.partition {
        PartitionSpec::Genre => partition_by_tags(catalog),
        PartitionSpec::KMeans(k) => partition_kmeans(catalog, *k, config.seed ^ 0x9e37),
        PartitionSpec::Hash(k) => partition_hash(catalog, *k),
    }
}

/// Blocks rebuilt from a held-out stream, used for the test-loss curve.
/// Runs of negatives followed by positives count; at stream end a trainable
/// unfinished block counts too, since no further event will close it.
fn build_eval_blocks(stream: &InteractionStream) -> Vec<Block> {
    let mut buffer = BlockBuffer::new(usize::MAX >> 1).expect("threshold is positive");
    let mut users = std::collections::BTreeSet::new();
    for e in stream.iter() {
        buffer.ingest(e.user_id, e.item_id, e.is_positive);
        users.insert(e.user_id);
    }
    let mut blocks = buffer.drain();
    for u in users {
        if let Some(b) = buffer.active_block(u) {
            if b.is_trainable() {
                blocks.push(b.clone());
            }
        }
    }
    blocks.retain(|b| b.is_trainable());
    blocks
}

fn mean_block_loss(store: &EmbeddingStore, blocks: &[Block]) -> Result<f64> {
    if blocks.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for b in blocks {
        let user = store.user_row(b.user_id)?;
        let pos: Vec<&[f64]> = b
            .positives
            .iter()
            .map(|&i| store.item_row(i))
            .collect::<Result<_>>()?;
        let neg: Vec<&[f64]> = b
            .negatives
            .iter()
            .map(|&i| store.item_row(i))
            .collect::<Result<_>>()?;
        sum += block_loss(user, &pos, &neg, 0.0)?;
    }
    Ok(sum / blocks.len() as f64)
}

fn epoch_eval(
    store: &EmbeddingStore,
    data: &DataBundle,
    config: &RunConfig,
    eval_blocks: &[Block],
    clock: &mut PhaseClock,
    epoch: u32,
    train_loss_sum: f64,
    trained_blocks: u64,
) -> Result<(EpochRecord, EvalReport)> {
    if !store.is_finite() {
        return Err(DriftError::NonFinite(format!(
            "embedding store after epoch {epoch}"
        )));
    }
    let (report, test_loss) = clock.measure(Phase::Evaluation, || -> Result<_> {
        let report = evaluate(store, &data.test, config.eval_k, Some(&data.train))?;
        let test_loss = mean_block_loss(store, eval_blocks)?;
        Ok((report, test_loss))
    })?;
    let train_loss = if trained_blocks > 0 {
        train_loss_sum / trained_blocks as f64
    } else {
        f64::NAN
    };
    let record = EpochRecord {
        epoch,
        train_loss,
        trained_blocks,
        test_loss,
        map_at_k: report.map_at_k,
        ndcg_at_k: report.ndcg_at_k,
    };
    Ok((record, report))
}

/// Train the federated system on `data` per `config`.
pub fn run_drift(config: &RunConfig, data: &DataBundle) -> Result<RunOutcome> {
    config.validate()?;
    if config.mode != Mode::Drift {
        return Err(DriftError::InvalidArgument(
            "run_drift needs mode = drift".into(),
        ));
    }
    let partitions = build_partitions(config, &data.catalog)?;
    let mut store = init_embeddings(data.num_users, data.num_items, config.dim, config.seed)?;
    store.set_learning_rate(config.learning_rate)?;

    let fed_config = FederationConfig {
        threshold: config.theta,
        reg_weight: config.reg_weight,
        key_seed: Some(config.seed ^ 0xd01f),
        retain_payloads: config.retain_log_payloads,
        track_trajectory: config.track_trajectory,
    };
    let mut fed = Federation::new(&fed_config, &partitions, store)?;
    let eval_blocks = build_eval_blocks(&data.test);

    let mut records = Vec::with_capacity(config.epochs);
    let mut last_report = None;
    for epoch in 1..=config.epochs as u32 {
        match config.schedule {
            ScheduleSpec::Deterministic => {
                for e in data.train.iter() {
                    fed.send_interaction(e.user_id, e.item_id, e.is_positive)?;
                    fed.run_to_quiescence()?;
                }
            }
            ScheduleSpec::Threads(n) => {
                run_epoch_threaded(&mut fed, data.train.as_slice(), n)?;
            }
        }
        let (loss_sum, blocks) = fed.end_epoch();
        let snapshot = fed.cos().snapshot();
        let mut clock = std::mem::take(&mut fed.clock);
        let (record, report) = epoch_eval(
            &snapshot,
            data,
            config,
            &eval_blocks,
            &mut clock,
            epoch,
            loss_sum,
            blocks,
        )?;
        fed.clock = clock;
        records.push(record);
        last_report = Some(report);
    }

    let mut report = last_report.expect("at least one epoch ran");
    report.train_loss_curve = records
        .iter()
        .map(|r| (r.epoch, r.train_loss))
        .collect();
    let breakdown = fed.clock.breakdown();
    let audit = FederationAudit {
        log: fed.take_log(),
        do_stats: fed.dos().iter().map(|d| d.stats.clone()).collect(),
        do_partitions: partitions,
        cos_stats: fed.cos().stats.clone(),
        repr_audit: fed.cos().audit.clone(),
    };
    let trajectory = fed.cos().trajectory().map(|t| t.to_vec());
    let store = fed.cos().snapshot();
    Ok(RunOutcome {
        report,
        breakdown,
        epochs: records,
        store,
        trajectory,
        audit: Some(audit),
    })
}

/// The centralized reference trainer: one undivided stream, no owners, no
/// encryption, an update applied the moment a block completes.
pub fn run_baseline(config: &RunConfig, data: &DataBundle) -> Result<RunOutcome> {
    config.validate()?;
    if config.mode != Mode::Baseline {
        return Err(DriftError::InvalidArgument(
            "run_baseline needs mode = baseline".into(),
        ));
    }
    let mut store = init_embeddings(data.num_users, data.num_items, config.dim, config.seed)?;
    store.set_learning_rate(config.learning_rate)?;
    let mut clock = PhaseClock::default();
    let mut trajectory = config.track_trajectory.then(Vec::new);
    let eval_blocks = build_eval_blocks(&data.test);

    let mut records = Vec::with_capacity(config.epochs);
    let mut last_report = None;
    for epoch in 1..=config.epochs as u32 {
        let mut buffer = BlockBuffer::new(1)?;
        let mut loss_sum = 0.0;
        let mut trained: u64 = 0;
        for e in data.train.iter() {
            let complete = clock.measure(Phase::BlockManagement, || {
                buffer.ingest(e.user_id, e.item_id, e.is_positive)
            });
            if !complete {
                continue;
            }
            let blocks = clock.measure(Phase::BlockManagement, || buffer.drain());
            for block in blocks {
                if !block.is_trainable() {
                    continue;
                }
                let bundle = clock.measure(Phase::GradientCompute, || -> Result<_> {
                    let user = store.user_row(block.user_id)?;
                    let positives: Vec<(u32, &[f64])> = block
                        .positives
                        .iter()
                        .map(|&i| Ok((i, store.item_row(i)?)))
                        .collect::<Result<_>>()?;
                    let negatives: Vec<(u32, &[f64])> = block
                        .negatives
                        .iter()
                        .map(|&i| Ok((i, store.item_row(i)?)))
                        .collect::<Result<_>>()?;
                    let frag = block_gradients(
                        block.user_id,
                        user,
                        &positives,
                        &negatives,
                        config.reg_weight,
                    )?;
                    let pos_vecs: Vec<&[f64]> = positives.iter().map(|(_, v)| *v).collect();
                    let neg_vecs: Vec<&[f64]> = negatives.iter().map(|(_, v)| *v).collect();
                    loss_sum += block_loss(user, &pos_vecs, &neg_vecs, config.reg_weight)?;
                    trained += 1;
                    let mut bundle = GradientBundle::new(0);
                    bundle.absorb(frag);
                    Ok(bundle)
                })?;
                if bundle.is_empty() {
                    continue;
                }
                clock.measure(Phase::UpdateApply, || store.apply_gradients(&bundle))?;
                if let Some(t) = &mut trajectory {
                    t.push(store.fingerprint());
                }
            }
        }
        let (record, report) = epoch_eval(
            &store,
            data,
            config,
            &eval_blocks,
            &mut clock,
            epoch,
            loss_sum,
            trained,
        )?;
        records.push(record);
        last_report = Some(report);
    }

    let mut report = last_report.expect("at least one epoch ran");
    report.train_loss_curve = records
        .iter()
        .map(|r| (r.epoch, r.train_loss))
        .collect();
    Ok(RunOutcome {
        report,
        breakdown: clock.breakdown(),
        epochs: records,
        store,
        trajectory,
        audit: None,
    })
}

/// Run whichever mode the config names.
pub fn run(config: &RunConfig, data: &DataBundle) -> Result<RunOutcome> {
    match config.mode {
        Mode::Drift => run_drift(config, data),
        Mode::Baseline => run_baseline(config, data),
    }
}

/// Write the result file: config echo, per-epoch records, phase table.
/// Deterministic except for lines prefixed `time.`.
pub fn emit_results(
    outcome: &RunOutcome,
    config: &RunConfig,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("drift-results/1\n");
    out.push_str("[config]\n");
    out.push_str(&format!("mode = {}\n", config.mode.name()));
    out.push_str(&format!("dim = {}\n", config.dim));
    out.push_str(&format!("learning_rate = {}\n", config.learning_rate));
    out.push_str(&format!("reg_weight = {}\n", config.reg_weight));
    out.push_str(&format!("theta = {}\n", config.theta));
    out.push_str(&format!("epochs = {}\n", config.epochs));
    out.push_str(&format!("eval_k = {}\n", config.eval_k));
    out.push_str(&format!("partition = {}\n", config.partition_name()));
    out.push_str(&format!("schedule = {}\n", config.schedule_name()));
    out.push_str(&format!("seed = {}\n", config.seed));
    out.push_str("[epochs]\n");
    for r in &outcome.epochs {
        out.push_str(&format!(
            "epoch = {} train_loss = {} test_loss = {} map = {} ndcg = {} blocks = {}\n",
            r.epoch, r.train_loss, r.test_loss, r.map_at_k, r.ndcg_at_k, r.trained_blocks
        ));
    }
    out.push_str("[timing]\n");
    for (phase, d) in outcome.breakdown.iter() {
        out.push_str(&format!("time.{}_ns = {}\n", phase.name(), d.as_nanos()));
    }
    out.push_str(&format!(
        "time.total_ns = {}\n",
        outcome.breakdown.total().as_nanos()
    ));
    out.push_str("[meta]\n");
    let wall = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_millis();
    out.push_str(&format!("time.wall_clock_unix_ms = {wall}\n"));
    fs::write(path, out).map_err(|e| DriftError::io(path, e))
}

/// A re-parsed result file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResults {
    pub config: HashMap<String, String>,
    pub epochs: Vec<EpochRecord>,
    /// phase name -> nanoseconds
    pub timing: HashMap<String, u128>,
}

pub fn parse_results(path: &Path) -> Result<ParsedResults> {
    let text = fs::read_to_string(path).map_err(|e| DriftError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let bad = |lineno: usize, reason: &str| DriftError::Parse {
        path: path.to_path_buf(),
        line: lineno + 1,
        reason: reason.into(),
    };
    match lines.next() {
        Some((_, "drift-results/1")) => {}
        _ => return Err(bad(0, "missing result-file magic")),
    }
    let mut section = String::new();
    let mut parsed = ParsedResults::default();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].to_string();
            continue;
        }
        match section.as_str() {
            "config" => {
                let (key, value) = line
                    .split_once(" = ")
                    .ok_or_else(|| bad(lineno, "expected key = value"))?;
                parsed.config.insert(key.to_string(), value.to_string());
            }
            "epochs" => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                // epoch = N train_loss = X test_loss = Y map = M ndcg = D blocks = B
                if fields.len() != 18 {
                    return Err(bad(lineno, "malformed epoch record"));
                }
                let num = |idx: usize| -> Result<f64> {
                    fields[idx]
                        .parse::<f64>()
                        .map_err(|e| bad(lineno, &e.to_string()))
                };
                parsed.epochs.push(EpochRecord {
                    epoch: num(2)? as u32,
                    train_loss: num(5)?,
                    test_loss: num(8)?,
                    map_at_k: num(11)?,
                    ndcg_at_k: num(14)?,
                    trained_blocks: num(17)? as u64,
                });
            }
            "timing" | "meta" => {
                let (key, value) = line
                    .split_once(" = ")
                    .ok_or_else(|| bad(lineno, "expected key = value"))?;
                let ns = value
                    .parse::<u128>()
                    .map_err(|e| bad(lineno, &e.to_string()))?;
                parsed.timing.insert(key.to_string(), ns);
            }
            _ => return Err(bad(lineno, "line outside any section")),
        }
    }
    Ok(parsed)
}
