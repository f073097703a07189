//! End-to-end federated training on a generated corpus.
//!
//! Items are split per genre into one data owner each; users send encrypted
//! interactions to the owners holding the item; owners buffer blocks and
//! push gradients to the coordinator once the threshold is reached.
//!
//! ```bash
//! cargo run --release --example train_federated
//! ```

use drift::dataset::synthetic::{write_movielens_layout, SyntheticSpec};
use drift::dataset::{chronological_split, load_movielens};
use drift::harness::{run_drift, DataBundle, Mode, PartitionSpec, RunConfig, ScheduleSpec};

fn main() -> drift::Result<()> {
    let dir = tempfile_dir()?;
    let (ratings, items) = write_movielens_layout(&dir, &SyntheticSpec::default())?;
    let loaded = load_movielens(&ratings, Some(&items))?;
    let stream = loaded.interaction_stream()?;
    let (train, test) = chronological_split(&stream, 0.8)?;
    println!(
        "{} users, {} items, {} train / {} test interactions",
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

    let config = RunConfig {
        mode: Mode::Drift,
        dim: 16,
        epochs: 4,
        theta: 2,
        partition: PartitionSpec::Genre,
        schedule: ScheduleSpec::Deterministic,
        seed: 42,
        ..Default::default()
    };
    let outcome = run_drift(&config, &data)?;
    for r in &outcome.epochs {
        println!(
            "epoch {}  train_loss {:.4}  test_loss {:.4}  MAP@10 {:.4}  NDCG@10 {:.4}",
            r.epoch, r.train_loss, r.test_loss, r.map_at_k, r.ndcg_at_k
        );
    }
    let audit = outcome.audit.as_ref().unwrap();
    println!(
        "{} owners, {} bundles applied, {} messages on the bus",
        audit.do_partitions.len(),
        audit.cos_stats.bundles_applied,
        audit.log.len()
    );
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn tempfile_dir() -> drift::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("drift-train-federated");
    std::fs::create_dir_all(&dir).map_err(|e| drift::DriftError::io(&dir, e))?;
    Ok(dir)
}
