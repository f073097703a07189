//! Write a synthetic MovieLens-layout corpus for the other examples and the
//! CLI.
//!
//! ```bash
//! cargo run --example generate_synthetic -- /tmp/drift-demo
//! cargo run -- --dataset /tmp/drift-demo/u.data --items /tmp/drift-demo/u.item --epochs 3
//! ```

use std::path::PathBuf;

use drift::dataset::synthetic::{write_movielens_layout, SyntheticSpec};

fn main() -> drift::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "/tmp/drift-demo".into())
        .into();
    std::fs::create_dir_all(&dir).map_err(|e| drift::DriftError::io(&dir, e))?;
    let spec = SyntheticSpec::default();
    let (ratings, items) = write_movielens_layout(&dir, &spec)?;
    println!(
        "wrote {} ratings for {} users x {} items ({} genres)",
        spec.num_ratings, spec.num_users, spec.num_items, spec.num_genres
    );
    println!("  ratings: {}", ratings.display());
    println!("  items:   {}", items.display());
    Ok(())
}
