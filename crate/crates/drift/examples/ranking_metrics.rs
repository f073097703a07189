//! MAP@K and NDCG@K on a toy ranking, plus a full store evaluation.
//!
//! ```bash
//! cargo run --example ranking_metrics
//! ```

use std::collections::HashSet;

use drift::dataset::synthetic;
use drift::eval::{average_precision, evaluate, ndcg};
use drift::model::init_embeddings;

fn main() -> drift::Result<()> {
    let ranked = [10u32, 4, 7, 2, 9];
    let relevant: HashSet<u32> = [4, 9].into_iter().collect();
    println!("ranking: {ranked:?}, relevant: {relevant:?}");
    for k in [1, 3, 5] {
        println!(
            "  AP@{k} = {:.4}   NDCG@{k} = {:.4}",
            average_precision(&ranked, &relevant, k),
            ndcg(&ranked, &relevant, k)
        );
    }

    // metrics over a whole store: random embeddings score near chance
    let store = init_embeddings(50, 200, 8, 3)?;
    let test = synthetic::stream(50, 200, 500, 0.7, 11);
    let report = evaluate(&store, &test, 10, None)?;
    println!(
        "random store over {} users: MAP@10 = {:.4}, NDCG@10 = {:.4}",
        report.per_user.as_ref().map(|m| m.len()).unwrap_or(0),
        report.map_at_k,
        report.ndcg_at_k
    );
    Ok(())
}
