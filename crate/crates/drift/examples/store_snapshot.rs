//! Persist the embedding store and restore it bit-for-bit.
//!
//! ```bash
//! cargo run --example store_snapshot
//! ```

use std::collections::HashSet;

use drift::model::{init_embeddings, EmbeddingStore};

fn main() -> drift::Result<()> {
    let mut store = init_embeddings(100, 500, 32, 7)?;
    store.set_learning_rate(0.1)?;
    let path = std::env::temp_dir().join("drift-store.bin");
    store.save_snapshot(&path)?;
    let restored = EmbeddingStore::load_snapshot(&path)?;
    println!(
        "restored {}x{} + {}x{} store from {}",
        restored.num_users(),
        restored.dim(),
        restored.num_items(),
        restored.dim(),
        path.display()
    );
    println!("bitwise identical: {}", restored == store);
    println!(
        "top-5 for user 3: {:?}",
        restored.recommend_top_k(3, 5, &HashSet::new())?
    );
    std::fs::remove_file(&path).ok();
    Ok(())
}
