//! Splitting an item catalog into per-owner partitions.
//!
//! Three strategies: one partition per genre tag (items with several tags
//! land in several partitions), k-means over item features (disjoint), and
//! a hash fallback when neither tags nor features exist.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{DriftError, Result};

/// The items handed over at setup, with whatever side data the chosen
/// partition strategy needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemCatalog {
    pub item_ids: Vec<u32>,
    pub features: Option<Vec<Vec<f64>>>,
    pub genre_tags: Option<BTreeMap<u32, BTreeSet<String>>>,
}

impl ItemCatalog {
    pub fn from_ids(item_ids: Vec<u32>) -> Self {
        ItemCatalog {
            item_ids,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }
}

/// One partition per distinct tag, ordered by tag name; each item joins the
/// partition of every tag it carries.
pub fn partition_by_tags(catalog: &ItemCatalog) -> Result<Vec<Vec<u32>>> {
    let tags = catalog.genre_tags.as_ref().ok_or_else(|| {
        DriftError::InvalidArgument("tag partitioning requires genre tags".into())
    })?;
    let mut by_tag: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for &item in &catalog.item_ids {
        let item_tags = tags.get(&item).filter(|t| !t.is_empty());
        match item_tags {
            None => return Err(DriftError::Coverage(item)),
            Some(item_tags) => {
                for tag in item_tags {
                    by_tag.entry(tag).or_default().push(item);
                }
            }
        }
    }
    let mut partitions: Vec<Vec<u32>> = by_tag.into_values().collect();
    for p in &mut partitions {
        p.sort_unstable();
    }
    Ok(partitions)
}

/// Lloyd's algorithm with seeded start centroids and hard assignment.
/// Runs until centroids move less than 1e-6 or 100 iterations; an emptied
/// cluster is re-seeded with the point farthest from its assigned centroid.
pub fn partition_kmeans(catalog: &ItemCatalog, k: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    let features = catalog.features.as_ref().ok_or_else(|| {
        DriftError::InvalidArgument("k-means partitioning requires item features".into())
    })?;
    if k == 0 {
        return Err(DriftError::InvalidArgument("k must be at least 1".into()));
    }
    if k > catalog.item_ids.len() {
        return Err(DriftError::InvalidArgument(format!(
            "k = {k} exceeds the {} catalog items",
            catalog.item_ids.len()
        )));
    }
    if features.len() != catalog.item_ids.len() {
        return Err(DriftError::LengthMismatch {
            expected: catalog.item_ids.len(),
            got: features.len(),
        });
    }
    let n = features.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut start: Vec<usize> = (0..n).collect();
    start.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = start[..k].iter().map(|&i| features[i].clone()).collect();
    let mut assignment = vec![0usize; n];

    for _ in 0..100 {
        assign_nearest(features, &centroids, &mut assignment);
        reseed_empty_clusters(features, &centroids, &mut assignment, k);
        let movement = recompute_centroids(features, &assignment, &mut centroids);
        if movement < 1e-6 {
            break;
        }
    }
    assign_nearest(features, &centroids, &mut assignment);
    reseed_empty_clusters(features, &centroids, &mut assignment, k);

    let mut partitions = vec![Vec::new(); k];
    for (idx, &cluster) in assignment.iter().enumerate() {
        partitions[cluster].push(catalog.item_ids[idx]);
    }
    Ok(partitions)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign_nearest(features: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &mut [usize]) {
    for (idx, point) in features.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(point, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[idx] = best;
    }
}

fn reseed_empty_clusters(
    features: &[Vec<f64>],
    centroids: &[Vec<f64>],
    assignment: &mut [usize],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // steal the point farthest from its current centroid
        let farthest = (0..features.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&features[a], &centroids[assignment[a]])
                    .total_cmp(&sq_dist(&features[b], &centroids[assignment[b]]))
            });
        match farthest {
            Some(idx) => assignment[idx] = empty,
            None => return,
        }
    }
}

fn recompute_centroids(
    features: &[Vec<f64>],
    assignment: &[usize],
    centroids: &mut [Vec<f64>],
) -> f64 {
    let dim = features[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (point, &a) in features.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(point) {
            *s += x;
        }
    }
    let mut movement = 0.0f64;
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        for s in &mut sums[c] {
            *s /= counts[c] as f64;
        }
        movement = movement.max(sq_dist(&sums[c], &centroids[c]).sqrt());
        centroids[c] = std::mem::take(&mut sums[c]);
    }
    movement
}

/// Degenerate fallback: item `i` goes to partition `i mod k`.
pub fn partition_hash(catalog: &ItemCatalog, k: usize) -> Result<Vec<Vec<u32>>> {
    if k == 0 {
        return Err(DriftError::InvalidArgument("k must be at least 1".into()));
    }
    let mut partitions = vec![Vec::new(); k];
    for &item in &catalog.item_ids {
        partitions[item as usize % k].push(item);
    }
    Ok(partitions)
}

/// One line per owner: comma-separated item ids.
pub fn write_manifest(partitions: &[Vec<u32>], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in partitions {
        let line: Vec<String> = p.iter().map(|i| i.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DriftError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path).map_err(|e| DriftError::io(path, e))?;
    let mut partitions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            partitions.push(Vec::new());
            continue;
        }
        let mut ids = Vec::new();
        for field in line.split(',') {
            let id = field.trim().parse::<u32>().map_err(|e| DriftError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            ids.push(id);
        }
        partitions.push(ids);
    }
    Ok(partitions)
}
