//! Item to data-owner routing.

use std::collections::HashMap;

use crate::error::{DriftError, Result};

/// For each item, the owners holding it, in ascending owner order.
#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: HashMap<u32, Vec<u32>>,
}

/// Build the table from per-owner item lists. Every owner list must be
/// nonempty and together they must cover item ids `0..num_items`.
pub fn build_routing_table(partitions: &[Vec<u32>], num_items: u32) -> Result<RoutingTable> {
    if partitions.is_empty() {
        return Err(DriftError::InvalidArgument("no partitions given".into()));
    }
    let mut entries: HashMap<u32, Vec<u32>> = HashMap::new();
    for (k, items) in partitions.iter().enumerate() {
        if items.is_empty() {
            return Err(DriftError::InvalidArgument(format!(
                "partition {k} is empty"
            )));
        }
        for &item in items {
            let owners = entries.entry(item).or_default();
            if owners.last() != Some(&(k as u32)) {
                owners.push(k as u32);
            }
        }
    }
    for item in 0..num_items {
        if !entries.contains_key(&item) {
            return Err(DriftError::Coverage(item));
        }
    }
    Ok(RoutingTable { entries })
}

impl RoutingTable {
    pub fn owners(&self, item_id: u32) -> Result<&[u32]> {
        self.entries
            .get(&item_id)
            .map(|v| v.as_slice())
            .ok_or(DriftError::Routing(item_id))
    }

    pub fn num_routed_items(&self) -> usize {
        self.entries.len()
    }

    /// Mean number of owners per item.
    pub fn mean_replication(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let total: usize = self.entries.values().map(|v| v.len()).sum();
        total as f64 / self.entries.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn overlapping_partitions() {
        let table = build_routing_table(&[vec![0, 1], vec![1, 2]], 3).unwrap();
        assert_eq!(table.owners(0).unwrap(), &[0]);
        assert_eq!(table.owners(1).unwrap(), &[0, 1]);
        assert_eq!(table.owners(2).unwrap(), &[1]);
    }

    #[test]
    fn single_owner_holds_everything() {
        let table = build_routing_table(&[vec![0, 1, 2, 3]], 4).unwrap();
        for i in 0..4 {
            assert_eq!(table.owners(i).unwrap(), &[0]);
        }
    }

    #[test]
    fn uncovered_item_is_an_error() {
        let err = build_routing_table(&[vec![0, 2]], 3).unwrap_err();
        assert!(matches!(err, DriftError::Coverage(1)));
    }

    #[test]
    fn empty_partition_rejected() {
        assert!(build_routing_table(&[vec![0], vec![]], 1).is_err());
    }

    #[test]
    fn unknown_item_is_a_routing_error() {
        let table = build_routing_table(&[vec![0]], 1).unwrap();
        assert!(matches!(table.owners(9), Err(DriftError::Routing(9))));
    }

    #[test]
    fn matches_membership_scan_on_random_partitions() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let num_items = 50u32;
        let mut partitions: Vec<Vec<u32>> = (0..5)
            .map(|_| {
                (0..num_items)
                    .filter(|_| rng.gen_bool(0.4))
                    .collect::<Vec<u32>>()
            })
            .collect();
        // patch coverage holes so the build succeeds
        for item in 0..num_items {
            if !partitions.iter().any(|p| p.contains(&item)) {
                partitions[0].push(item);
            }
        }
        for p in &mut partitions {
            p.sort_unstable();
        }
        let table = build_routing_table(&partitions, num_items).unwrap();
        for item in 0..num_items {
            let expected: Vec<u32> = partitions
                .iter()
                .enumerate()
                .filter(|(_, p)| p.contains(&item))
                .map(|(k, _)| k as u32)
                .collect();
            assert_eq!(table.owners(item).unwrap(), expected.as_slice());
        }
    }
}
