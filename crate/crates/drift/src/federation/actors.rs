//! The two protocol actors.
//!
//! A [`DataOwner`] decrypts interactions for its items, maintains the block
//! buffer, and turns completed blocks into gradient bundles once the
//! coordinator has sent back the rows they need. The [`Cos`] owns the
//! embedding store, answers representation requests from one consistent
//! snapshot and applies gradient bundles serially.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::block::{Block, BlockBuffer};
use crate::channel::{decrypt_interaction, DoKey, EncryptedInteraction};
use crate::error::{DriftError, Result};
use crate::loss::{block_gradients, block_loss};
use crate::model::{EmbeddingStore, GradientBundle};
use crate::timing::{Phase, PhaseClock};

use super::wire::{ReprRequest, ReprReply};

/// Counters a data owner keeps about its own traffic; audits read these.
#[derive(Debug, Clone, Default)]
pub struct DoStats {
    pub decrypt_ok: u64,
    pub auth_failures: u64,
    /// Successful decryptions of items outside this owner's partition.
    /// Correct routing keeps this at zero.
    pub foreign_item_drops: u64,
    pub protocol_errors: u64,
    pub requests_sent: u64,
    pub blocks_trained: u64,
    pub blocks_skipped: u64,
    pub epoch_loss_sum: f64,
    /// Users this owner has seen interact with its items.
    pub seen_users: HashSet<u32>,
}

#[derive(Debug)]
struct PendingUpdate {
    blocks: Vec<Block>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
}

#[derive(Debug)]
pub struct DataOwner {
    pub id: u32,
    key: DoKey,
    items: HashSet<u32>,
    buffer: BlockBuffer,
    reg_weight: f64,
    pending: VecDeque<PendingUpdate>,
    pub stats: DoStats,
}

impl DataOwner {
    pub fn new(
        id: u32,
        key: DoKey,
        items: Vec<u32>,
        threshold: usize,
        reg_weight: f64,
    ) -> Result<Self> {
        if reg_weight < 0.0 {
            return Err(DriftError::InvalidArgument(
                "regularization weight must be nonnegative".into(),
            ));
        }
        Ok(DataOwner {
            id,
            key,
            items: items.into_iter().collect(),
            buffer: BlockBuffer::new(threshold)?,
            reg_weight,
            pending: VecDeque::new(),
            stats: DoStats::default(),
        })
    }

    pub fn holds_item(&self, item_id: u32) -> bool {
        self.items.contains(&item_id)
    }

    pub fn saved_blocks(&self) -> usize {
        self.buffer.saved_len()
    }

    /// Decrypt and ingest one interaction. Returns the representation
    /// request to send when this interaction drove the buffer over its
    /// threshold; tampered or foreign messages are dropped and counted.
    pub fn on_interaction(
        &mut self,
        msg: &EncryptedInteraction,
        clock: &mut PhaseClock,
    ) -> Option<ReprRequest> {
        let decrypted = clock.measure(Phase::Decryption, || decrypt_interaction(&self.key, msg));
        let (user_id, item_id) = match decrypted {
            Ok(pair) => pair,
            Err(_) => {
                self.stats.auth_failures += 1;
                log::warn!("data owner {}: dropped unauthenticated interaction", self.id);
                return None;
            }
        };
        self.stats.decrypt_ok += 1;
        if !self.items.contains(&item_id) {
            self.stats.foreign_item_drops += 1;
            log::warn!(
                "data owner {}: decrypted item {item_id} outside its partition",
                self.id
            );
            return None;
        }
        self.stats.seen_users.insert(user_id);
        let update_required = clock.measure(Phase::BlockManagement, || {
            self.buffer.ingest(user_id, item_id, msg.is_positive)
        });
        if update_required {
            Some(self.request_update(clock))
        } else {
            None
        }
    }

    /// Drain the buffer and build the request covering exactly the distinct
    /// user and item ids of the drained blocks.
    fn request_update(&mut self, clock: &mut PhaseClock) -> ReprRequest {
        let blocks = clock.measure(Phase::BlockManagement, || self.buffer.drain());
        let req = clock.measure(Phase::RepresentationTransfer, || {
            let mut users = BTreeSet::new();
            let mut items = BTreeSet::new();
            for b in &blocks {
                users.insert(b.user_id);
                items.extend(b.negatives.iter().copied());
                items.extend(b.positives.iter().copied());
            }
            let user_ids: Vec<u32> = users.into_iter().collect();
            let item_ids: Vec<u32> = items.into_iter().collect();
            self.pending.push_back(PendingUpdate {
                blocks,
                user_ids: user_ids.clone(),
                item_ids: item_ids.clone(),
            });
            ReprRequest {
                do_id: self.id,
                user_ids,
                item_ids,
            }
        });
        self.stats.requests_sent += 1;
        req
    }

    /// Compute gradients for the oldest pending update against the rows in
    /// `reply`. A reply missing a requested id aborts that update: its
    /// blocks are discarded and counted as a protocol error.
    pub fn on_repr_reply(
        &mut self,
        reply: &ReprReply,
        clock: &mut PhaseClock,
    ) -> Option<GradientBundle> {
        let Some(pending) = self.pending.pop_front() else {
            self.stats.protocol_errors += 1;
            log::warn!("data owner {}: reply without a pending request", self.id);
            return None;
        };
        let rows = clock.measure(Phase::RepresentationTransfer, || {
            index_reply(reply, &pending)
        });
        let (user_rows, item_rows) = match rows {
            Ok(pair) => pair,
            Err(e) => {
                self.stats.protocol_errors += 1;
                log::warn!(
                    "data owner {}: aborting update for {} blocks: {e}",
                    self.id,
                    pending.blocks.len()
                );
                return None;
            }
        };
        let bundle = clock.measure(Phase::GradientCompute, || {
            let mut bundle = GradientBundle::new(self.id);
            for block in &pending.blocks {
                if !block.is_trainable() {
                    self.stats.blocks_skipped += 1;
                    continue;
                }
                let user = user_rows[&block.user_id];
                let positives: Vec<(u32, &[f64])> = block
                    .positives
                    .iter()
                    .map(|i| (*i, item_rows[i]))
                    .collect();
                let negatives: Vec<(u32, &[f64])> = block
                    .negatives
                    .iter()
                    .map(|i| (*i, item_rows[i]))
                    .collect();
                // the unwraps hold: is_trainable guarantees both sides nonempty
                let frag =
                    block_gradients(block.user_id, user, &positives, &negatives, self.reg_weight)
                        .unwrap();
                let pos_vecs: Vec<&[f64]> = positives.iter().map(|(_, v)| *v).collect();
                let neg_vecs: Vec<&[f64]> = negatives.iter().map(|(_, v)| *v).collect();
                let loss = block_loss(user, &pos_vecs, &neg_vecs, self.reg_weight).unwrap();
                self.stats.epoch_loss_sum += loss;
                self.stats.blocks_trained += 1;
                bundle.absorb(frag);
            }
            bundle
        });
        Some(bundle)
    }

    /// Discard active blocks, saved-but-unflushed blocks and any pending
    /// update state; epoch boundaries start clean.
    pub fn end_epoch(&mut self) {
        self.buffer.reset();
        self.pending.clear();
    }

    /// Mean loss over blocks trained since the last call, plus the count.
    pub fn take_epoch_loss(&mut self) -> (f64, u64) {
        let out = (self.stats.epoch_loss_sum, self.stats.blocks_trained);
        self.stats.epoch_loss_sum = 0.0;
        self.stats.blocks_trained = 0;
        out
    }
}

type RowMaps<'a> = (HashMap<u32, &'a [f64]>, HashMap<u32, &'a [f64]>);

fn index_reply<'a>(reply: &'a ReprReply, pending: &PendingUpdate) -> Result<RowMaps<'a>> {
    let user_rows: HashMap<u32, &[f64]> = reply
        .user_rows
        .iter()
        .map(|(id, row)| (*id, row.as_slice()))
        .collect();
    let item_rows: HashMap<u32, &[f64]> = reply
        .item_rows
        .iter()
        .map(|(id, row)| (*id, row.as_slice()))
        .collect();
    for u in &pending.user_ids {
        if !user_rows.contains_key(u) {
            return Err(DriftError::Protocol(format!("reply missing user {u}")));
        }
    }
    for i in &pending.item_ids {
        if !item_rows.contains_key(i) {
            return Err(DriftError::Protocol(format!("reply missing item {i}")));
        }
    }
    Ok((user_rows, item_rows))
}

/// One representation request as the coordinator saw it.
#[derive(Debug, Clone)]
pub struct ReprAuditEntry {
    pub do_id: u32,
    pub user_ids: Vec<u32>,
    pub item_ids: Vec<u32>,
    pub snapshot_tag: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CosStats {
    pub bundles_applied: u64,
    pub bundles_rejected: u64,
    pub requests_served: u64,
    pub requests_rejected: u64,
    /// Interactions wrongly addressed to the coordinator; must stay zero.
    pub interactions_received: u64,
}

/// The coordination server: store owner and update serializer.
#[derive(Debug)]
pub struct Cos {
    store: EmbeddingStore,
    snapshot_counter: u64,
    pub audit: Vec<ReprAuditEntry>,
    pub stats: CosStats,
    trajectory: Option<Vec<u64>>,
}

impl Cos {
    pub fn new(store: EmbeddingStore, track_trajectory: bool) -> Self {
        Cos {
            store,
            snapshot_counter: 0,
            audit: Vec::new(),
            stats: CosStats::default(),
            trajectory: track_trajectory.then(Vec::new),
        }
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    /// Clone of the store for read-only work outside the update path.
    pub fn snapshot(&self) -> EmbeddingStore {
        self.store.clone()
    }

    pub fn into_store(self) -> EmbeddingStore {
        self.store
    }

    /// Store fingerprints after each applied bundle, when tracking is on.
    pub fn trajectory(&self) -> Option<&[u64]> {
        self.trajectory.as_deref()
    }

    /// Serve the requested rows from the current snapshot.
    pub fn on_repr_request(
        &mut self,
        req: &ReprRequest,
        clock: &mut PhaseClock,
    ) -> Result<ReprReply> {
        let reply = clock.measure(Phase::RepresentationTransfer, || -> Result<ReprReply> {
            let mut user_rows = Vec::with_capacity(req.user_ids.len());
            for &u in &req.user_ids {
                user_rows.push((u, self.store.user_row(u)?.to_vec()));
            }
            let mut item_rows = Vec::with_capacity(req.item_ids.len());
            for &i in &req.item_ids {
                item_rows.push((i, self.store.item_row(i)?.to_vec()));
            }
            Ok(ReprReply {
                do_id: req.do_id,
                snapshot_tag: self.snapshot_counter,
                user_rows,
                item_rows,
            })
        })?;
        self.audit.push(ReprAuditEntry {
            do_id: req.do_id,
            user_ids: req.user_ids.clone(),
            item_ids: req.item_ids.clone(),
            snapshot_tag: reply.snapshot_tag,
        });
        self.stats.requests_served += 1;
        Ok(reply)
    }

    /// Apply one bundle atomically; a malformed bundle leaves the store
    /// untouched and is counted as rejected.
    pub fn on_gradient_bundle(
        &mut self,
        bundle: &GradientBundle,
        clock: &mut PhaseClock,
    ) -> Result<()> {
        let applied = clock.measure(Phase::UpdateApply, || self.store.apply_gradients(bundle));
        match applied {
            Ok(()) => {
                self.snapshot_counter += 1;
                self.stats.bundles_applied += 1;
                if let Some(t) = &mut self.trajectory {
                    t.push(self.store.fingerprint());
                }
                Ok(())
            }
            Err(e) => {
                self.stats.bundles_rejected += 1;
                log::warn!("coordinator rejected bundle from owner {}: {e}", bundle.do_id);
                Err(e)
            }
        }
    }
}
