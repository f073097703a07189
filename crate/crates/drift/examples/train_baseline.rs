//! The centralized reference trainer on the same synthetic corpus as the
//! federated example: identical block rules and loss, one undivided stream,
//! an update per completed block.
//!
//! ```bash
//! cargo run --release --example train_baseline
//! ```

use drift::dataset::synthetic::{write_movielens_layout, SyntheticSpec};
use drift::dataset::{chronological_split, load_movielens};
use drift::harness::{run_baseline, DataBundle, Mode, RunConfig};

fn main() -> drift::Result<()> {
    let dir = std::env::temp_dir().join("drift-train-baseline");
    std::fs::create_dir_all(&dir).map_err(|e| drift::DriftError::io(&dir, e))?;
    let (ratings, items) = write_movielens_layout(&dir, &SyntheticSpec::default())?;
    let loaded = load_movielens(&ratings, Some(&items))?;
    let stream = loaded.interaction_stream()?;
    let (train, test) = chronological_split(&stream, 0.8)?;
    let data = DataBundle {
        train,
        test,
        catalog: loaded.catalog.clone(),
        num_users: loaded.num_users(),
        num_items: loaded.num_items(),
    };

    let config = RunConfig {
        mode: Mode::Baseline,
        dim: 16,
        epochs: 4,
        seed: 42,
        ..Default::default()
    };
    let outcome = run_baseline(&config, &data)?;
    for r in &outcome.epochs {
        println!(
            "epoch {}  train_loss {:.4}  test_loss {:.4}  MAP@10 {:.4}  NDCG@10 {:.4}  blocks {}",
            r.epoch, r.train_loss, r.test_loss, r.map_at_k, r.ndcg_at_k, r.trained_blocks
        );
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
