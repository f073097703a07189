//! The three item-partitioning strategies and the routing table built from
//! their output.
//!
//! ```bash
//! cargo run --example partitioning
//! ```

use std::collections::{BTreeMap, BTreeSet};

use drift::federation::build_routing_table;
use drift::partition::{
    partition_by_tags, partition_hash, partition_kmeans, write_manifest, ItemCatalog,
};

fn main() -> drift::Result<()> {
    // six items with overlapping genre tags
    let tags: BTreeMap<u32, BTreeSet<String>> = [
        (0, vec!["Action"]),
        (1, vec!["Action", "Comedy"]),
        (2, vec!["Comedy"]),
        (3, vec!["Drama"]),
        (4, vec!["Action", "Drama"]),
        (5, vec!["Comedy", "Drama"]),
    ]
    .into_iter()
    .map(|(id, ts)| (id, ts.into_iter().map(String::from).collect()))
    .collect();

    let catalog = ItemCatalog {
        item_ids: (0..6).collect(),
        features: Some(vec![
            vec![0.1, 0.0],
            vec![0.2, 0.1],
            vec![0.9, 1.0],
            vec![1.0, 0.9],
            vec![0.0, 0.2],
            vec![1.1, 1.1],
        ]),
        genre_tags: Some(tags),
    };

    let by_genre = partition_by_tags(&catalog)?;
    println!("genre partitions (items appear once per tag): {by_genre:?}");

    let by_kmeans = partition_kmeans(&catalog, 2, 7)?;
    println!("k-means partitions (disjoint, feature space):  {by_kmeans:?}");

    let by_hash = partition_hash(&catalog, 3)?;
    println!("hash partitions (id mod k):                    {by_hash:?}");

    let manifest = std::env::temp_dir().join("drift-partitions.txt");
    write_manifest(&by_genre, &manifest)?;
    println!("manifest written to {}", manifest.display());

    let table = build_routing_table(&by_genre, 6)?;
    for item in 0..6 {
        println!("item {item} -> owners {:?}", table.owners(item)?);
    }
    println!("mean owners per item: {:.2}", table.mean_replication());
    Ok(())
}
