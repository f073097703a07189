//! Per-user interaction blocks.
//!
//! A block collects a run of negative interactions followed by a run of
//! positive ones. The first positive closes the negative side; the next
//! negative after that completes the block and opens a fresh one. Completed
//! blocks queue up until the buffer holds at least `threshold` of them, at
//! which point the owner should request a model update and [`BlockBuffer::drain`]
//! the queue.

use std::collections::HashMap;

use crate::error::{DriftError, Result};

/// One user's in-progress or completed interaction block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub user_id: u32,
    pub negatives: Vec<u32>,
    pub positives: Vec<u32>,
    negatives_closed: bool,
}

impl Block {
    fn new(user_id: u32) -> Self {
        Block {
            user_id,
            negatives: Vec::new(),
            positives: Vec::new(),
            negatives_closed: false,
        }
    }

    pub fn negatives_closed(&self) -> bool {
        self.negatives_closed
    }

    /// A block participates in training only when both sides are nonempty.
    pub fn is_trainable(&self) -> bool {
        !self.negatives.is_empty() && !self.positives.is_empty()
    }
}

/// Active blocks per user plus the queue of completed ones.
///
/// The threshold counts completed blocks across all users of this buffer.
#[derive(Debug, Clone)]
pub struct BlockBuffer {
    active: HashMap<u32, Block>,
    saved: Vec<Block>,
    threshold: usize,
}

impl BlockBuffer {
    pub fn new(threshold: usize) -> Result<Self> {
        if threshold == 0 {
            return Err(DriftError::InvalidArgument(
                "block threshold must be at least 1".into(),
            ));
        }
        Ok(BlockBuffer {
            active: HashMap::new(),
            saved: Vec::new(),
            threshold,
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn saved_len(&self) -> usize {
        self.saved.len()
    }

    /// Route one interaction into the user's active block.
    ///
    /// Returns true exactly when the buffer holds at least `threshold`
    /// completed blocks after the operation.
    pub fn ingest(&mut self, user_id: u32, item_id: u32, is_positive: bool) -> bool {
        let block = self
            .active
            .entry(user_id)
            .or_insert_with(|| Block::new(user_id));
        if is_positive {
            block.positives.push(item_id);
            block.negatives_closed = true;
        } else if block.positives.is_empty() {
            block.negatives.push(item_id);
        } else {
            // negative after a positive: the block is complete
            let mut fresh = Block::new(user_id);
            fresh.negatives.push(item_id);
            let done = std::mem::replace(block, fresh);
            self.saved.push(done);
        }
        self.saved.len() >= self.threshold
    }

    /// All completed blocks in completion order; active blocks stay put.
    pub fn drain(&mut self) -> Vec<Block> {
        std::mem::take(&mut self.saved)
    }

    /// Peek at the user's active block, if any.
    pub fn active_block(&self, user_id: u32) -> Option<&Block> {
        self.active.get(&user_id)
    }

    /// Discard every active and saved block (end of an epoch).
    pub fn reset(&mut self) {
        self.active.clear();
        self.saved.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ingest_all(buf: &mut BlockBuffer, events: &[(u32, u32, bool)]) -> Vec<bool> {
        events
            .iter()
            .map(|&(u, i, p)| buf.ingest(u, i, p))
            .collect()
    }

    #[test]
    fn neg_neg_pos_neg_completes_one_block() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 10, false), (0, 11, false), (0, 12, true)]);
        assert_eq!(buf.saved_len(), 0);
        buf.ingest(0, 13, false);
        let saved = buf.drain();
        assert_eq!(saved.len(), 1);
        assert_eq!(saved[0].negatives, vec![10, 11]);
        assert_eq!(saved[0].positives, vec![12]);
        let active = buf.active_block(0).unwrap();
        assert_eq!(active.negatives, vec![13]);
        assert!(active.positives.is_empty());
        assert!(!active.negatives_closed());
    }

    #[test]
    fn leading_positives_accumulate_without_completion() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 1, true), (0, 2, true)]);
        assert_eq!(buf.saved_len(), 0);
        let active = buf.active_block(0).unwrap();
        assert!(active.negatives.is_empty());
        assert_eq!(active.positives, vec![1, 2]);
        assert!(active.negatives_closed());
    }

    #[test]
    fn empty_negative_side_block_is_saved_but_untrainable() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 1, true), (0, 2, false)]);
        let saved = buf.drain();
        assert_eq!(saved.len(), 1);
        assert!(saved[0].negatives.is_empty());
        assert!(!saved[0].is_trainable());
    }

    #[test]
    fn threshold_counts_across_users() {
        let mut buf = BlockBuffer::new(2).unwrap();
        let flags = ingest_all(
            &mut buf,
            &[
                (1, 10, false),
                (1, 11, true),
                (1, 12, false), // completes user 1's block
                (2, 20, false),
                (2, 21, true),
                (2, 22, false), // completes user 2's block, reaches threshold
            ],
        );
        assert_eq!(flags, vec![false, false, false, false, false, true]);
    }

    #[test]
    fn ingest_keeps_reporting_threshold_until_drained() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 1, false), (0, 2, true), (0, 3, false)]);
        assert_eq!(buf.saved_len(), 1);
        // saved is at threshold, so even a plain negative reports true
        assert!(buf.ingest(5, 50, false));
        buf.drain();
        assert!(!buf.ingest(5, 51, false));
    }

    #[test]
    fn drain_empties_and_preserves_completion_order() {
        let mut buf = BlockBuffer::new(10).unwrap();
        // u1 completes, u2 completes, u1 completes again
        ingest_all(
            &mut buf,
            &[
                (1, 1, false),
                (1, 2, true),
                (2, 5, false),
                (2, 6, true),
                (1, 3, false), // u1 block 1 done
                (2, 7, false), // u2 block done
                (1, 4, true),
                (1, 9, false), // u1 block 2 done
            ],
        );
        let saved = buf.drain();
        let users: Vec<u32> = saved.iter().map(|b| b.user_id).collect();
        assert_eq!(users, vec![1, 2, 1]);
        assert_eq!(saved[0].positives, vec![2]);
        assert_eq!(saved[2].negatives, vec![3]);
        assert!(buf.drain().is_empty());
    }

    #[test]
    fn duplicate_items_are_kept() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 7, false), (0, 7, false), (0, 7, true)]);
        let b = buf.active_block(0).unwrap();
        assert_eq!(b.negatives, vec![7, 7]);
        assert_eq!(b.positives, vec![7]);
    }

    #[test]
    fn reset_discards_everything() {
        let mut buf = BlockBuffer::new(1).unwrap();
        ingest_all(&mut buf, &[(0, 1, false), (0, 2, true), (0, 3, false)]);
        buf.reset();
        assert_eq!(buf.saved_len(), 0);
        assert!(buf.active_block(0).is_none());
    }

    #[test]
    fn zero_threshold_rejected() {
        assert!(BlockBuffer::new(0).is_err());
    }

    /// Splits one user's label sequence at every negative-after-positive
    /// boundary; the reference the state machine is checked against.
    fn naive_split(events: &[(u32, bool)]) -> (Vec<(Vec<u32>, Vec<u32>)>, (Vec<u32>, Vec<u32>)) {
        let mut done = Vec::new();
        let mut neg = Vec::new();
        let mut pos = Vec::new();
        for &(item, positive) in events {
            if !positive && !pos.is_empty() {
                done.push((std::mem::take(&mut neg), std::mem::take(&mut pos)));
            }
            if positive {
                pos.push(item);
            } else {
                neg.push(item);
            }
        }
        (done, (neg, pos))
    }

    proptest! {
        /// Concatenating drained blocks plus the active block reproduces each
        /// user's interaction subsequence, and every completed block is a run
        /// of negatives followed by a nonempty run of positives.
        #[test]
        fn reconstruction_and_shape(
            events in proptest::collection::vec((0u32..5, 0u32..50, proptest::bool::ANY), 0..120)
        ) {
            let mut buf = BlockBuffer::new(usize::MAX >> 1).unwrap();
            for &(u, i, p) in &events {
                buf.ingest(u, i, p);
            }
            let mut per_user: HashMap<u32, Vec<(u32, bool)>> = HashMap::new();
            for b in buf.drain() {
                prop_assert!(!b.positives.is_empty());
                let seq = per_user.entry(b.user_id).or_default();
                seq.extend(b.negatives.iter().map(|&i| (i, false)));
                seq.extend(b.positives.iter().map(|&i| (i, true)));
            }
            for u in 0..5u32 {
                if let Some(b) = buf.active_block(u) {
                    let seq = per_user.entry(u).or_default();
                    seq.extend(b.negatives.iter().map(|&i| (i, false)));
                    seq.extend(b.positives.iter().map(|&i| (i, true)));
                }
            }
            for u in 0..5u32 {
                let expected: Vec<(u32, bool)> = events
                    .iter()
                    .filter(|(eu, _, _)| *eu == u)
                    .map(|&(_, i, p)| (i, p))
                    .collect();
                prop_assert_eq!(per_user.remove(&u).unwrap_or_default(), expected);
            }
        }

        /// The state machine agrees with the naive re-scan split.
        #[test]
        fn matches_naive_split_oracle(
            events in proptest::collection::vec((0u32..40, proptest::bool::ANY), 0..80)
        ) {
            let mut buf = BlockBuffer::new(usize::MAX >> 1).unwrap();
            for &(i, p) in &events {
                buf.ingest(3, i, p);
            }
            let (expected_done, (exp_neg, exp_pos)) = naive_split(&events);
            let drained = buf.drain();
            prop_assert_eq!(drained.len(), expected_done.len());
            for (b, (neg, pos)) in drained.iter().zip(&expected_done) {
                prop_assert_eq!(&b.negatives, neg);
                prop_assert_eq!(&b.positives, pos);
            }
            let (act_neg, act_pos) = buf
                .active_block(3)
                .map(|b| (b.negatives.clone(), b.positives.clone()))
                .unwrap_or_default();
            prop_assert_eq!(act_neg, exp_neg);
            prop_assert_eq!(act_pos, exp_pos);
        }
    }
}
