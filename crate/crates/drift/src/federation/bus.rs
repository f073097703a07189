//! Deterministic in-process message bus.
//!
//! Messages are encoded envelopes in one FIFO queue; [`Federation::step`]
//! delivers exactly one and [`Federation::run_to_quiescence`] drains the
//! queue. Per-sender order is the queue order, the whole schedule is
//! reproducible, and every envelope is recorded in the message log before
//! delivery.

use std::collections::VecDeque;

use crate::channel::{encrypt_interaction, gen_key, DoKey};
use crate::error::{DriftError, Result};
use crate::model::EmbeddingStore;
use crate::timing::{Phase, PhaseClock};

use super::actors::{Cos, DataOwner};
use super::msglog::MessageLog;
use super::routing::{build_routing_table, RoutingTable};
use super::wire::{self, Message, KIND_INTERACTION};
use super::{Addr, Role};

#[derive(Debug, Clone)]
pub struct Envelope {
    pub sender: Role,
    pub to: Addr,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct BusStats {
    /// Envelopes whose bytes could not be decoded or whose kind made no
    /// sense for the receiver.
    pub undeliverable: u64,
}

/// Knobs shared by both schedules.
#[derive(Debug, Clone)]
pub struct FederationConfig {
    /// Completed blocks a data owner buffers before requesting an update.
    pub threshold: usize,
    pub reg_weight: f64,
    /// Deterministic keys and zero-based nonces when set.
    pub key_seed: Option<u64>,
    /// Keep full payload bytes in the message log (audits need them).
    pub retain_payloads: bool,
    /// Record a store fingerprint after every applied bundle.
    pub track_trajectory: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            threshold: 2,
            reg_weight: 0.01,
            key_seed: None,
            retain_payloads: true,
            track_trajectory: false,
        }
    }
}

/// All federation parts wired together over the deterministic bus.
#[derive(Debug)]
pub struct Federation {
    pub(crate) table: RoutingTable,
    /// Sender-side encryption contexts, one per data owner key.
    pub(crate) keyring: Vec<DoKey>,
    pub(crate) dos: Vec<DataOwner>,
    pub(crate) cos: Cos,
    queue: VecDeque<Envelope>,
    pub(crate) log: MessageLog,
    pub(crate) clock: PhaseClock,
    pub stats: BusStats,
}

impl Federation {
    /// Build owners, keys and the routing table from per-owner item lists.
    pub fn new(
        config: &FederationConfig,
        partitions: &[Vec<u32>],
        store: EmbeddingStore,
    ) -> Result<Self> {
        let table = build_routing_table(partitions, store.num_items() as u32)?;
        let mut keyring = Vec::with_capacity(partitions.len());
        let mut dos = Vec::with_capacity(partitions.len());
        for (k, items) in partitions.iter().enumerate() {
            let key = gen_key(k as u32, config.key_seed)?;
            keyring.push(key.clone());
            dos.push(DataOwner::new(
                k as u32,
                key,
                items.clone(),
                config.threshold,
                config.reg_weight,
            )?);
        }
        Ok(Federation {
            table,
            keyring,
            dos,
            cos: Cos::new(store, config.track_trajectory),
            queue: VecDeque::new(),
            log: MessageLog::new(config.retain_payloads),
            clock: PhaseClock::default(),
            stats: BusStats::default(),
        })
    }

    pub fn cos(&self) -> &Cos {
        &self.cos
    }

    pub fn dos(&self) -> &[DataOwner] {
        &self.dos
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn clock(&self) -> &PhaseClock {
        &self.clock
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Encrypt one interaction for every owner of the item and enqueue the
    /// messages; the coordinator is never an addressee on this path.
    pub fn send_interaction(&mut self, user_id: u32, item_id: u32, is_positive: bool) -> Result<()> {
        let owners = self.table.owners(item_id)?.to_vec();
        for k in owners {
            let bytes = {
                let keyring = &mut self.keyring;
                self.clock.measure(Phase::Encryption, || -> Result<Vec<u8>> {
                    let enc = encrypt_interaction(
                        &mut keyring[k as usize],
                        user_id,
                        item_id,
                        is_positive,
                    )?;
                    Ok(wire::encode(&Message::Interaction(enc)))
                })?
            };
            self.push(Envelope {
                sender: Role::User,
                to: Addr::Do(k),
                bytes,
            });
        }
        Ok(())
    }

    /// Enqueue an arbitrary envelope (tests use this for tampering and
    /// misdelivery scenarios).
    pub fn inject(&mut self, env: Envelope) {
        self.push(env);
    }

    fn push(&mut self, env: Envelope) {
        self.log.record(env.sender, env.receiver_role(), &env.bytes);
        self.queue.push_back(env);
    }

    /// Deliver the oldest message. Returns false when the queue was empty.
    /// Protocol violations are counted on the respective actor; only a
    /// non-finite update aborts.
    pub fn step(&mut self) -> Result<bool> {
        let Some(env) = self.queue.pop_front() else {
            return Ok(false);
        };
        match env.to {
            Addr::Do(k) => self.deliver_to_owner(k, &env),
            Addr::Cos => self.deliver_to_cos(&env)?,
        }
        Ok(true)
    }

    pub fn run_to_quiescence(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }

    fn deliver_to_owner(&mut self, k: u32, env: &Envelope) {
        let Some(owner) = self.dos.get_mut(k as usize) else {
            self.stats.undeliverable += 1;
            return;
        };
        match wire::decode(&env.bytes) {
            Ok(Message::Interaction(enc)) => {
                if let Some(req) = owner.on_interaction(&enc, &mut self.clock) {
                    let bytes = self
                        .clock
                        .measure(Phase::RepresentationTransfer, || {
                            wire::encode(&Message::ReprRequest(req))
                        });
                    self.push(Envelope {
                        sender: Role::Do(k),
                        to: Addr::Cos,
                        bytes,
                    });
                }
            }
            Ok(Message::ReprReply(reply)) => {
                if let Some(bundle) = owner.on_repr_reply(&reply, &mut self.clock) {
                    if !bundle.is_empty() {
                        let bytes = self.clock.measure(Phase::GradientCompute, || {
                            wire::encode(&Message::Gradients(bundle))
                        });
                        self.push(Envelope {
                            sender: Role::Do(k),
                            to: Addr::Cos,
                            bytes,
                        });
                    }
                }
            }
            Ok(_) => {
                owner.stats.protocol_errors += 1;
            }
            Err(_) if env.bytes.first() == Some(&KIND_INTERACTION) => {
                // mangled beyond parsing: same rejection as a failed tag check
                owner.stats.auth_failures += 1;
            }
            Err(_) => {
                self.stats.undeliverable += 1;
            }
        }
    }

    fn deliver_to_cos(&mut self, env: &Envelope) -> Result<()> {
        match wire::decode(&env.bytes) {
            Ok(Message::ReprRequest(req)) => {
                match self.cos.on_repr_request(&req, &mut self.clock) {
                    Ok(reply) => {
                        let bytes = self.clock.measure(Phase::RepresentationTransfer, || {
                            wire::encode(&Message::ReprReply(reply))
                        });
                        self.push(Envelope {
                            sender: Role::Cos,
                            to: Addr::Do(req.do_id),
                            bytes,
                        });
                    }
                    Err(e) => {
                        self.cos.stats.requests_rejected += 1;
                        log::warn!("coordinator rejected request from owner {}: {e}", req.do_id);
                    }
                }
            }
            Ok(Message::Gradients(bundle)) => {
                match self.cos.on_gradient_bundle(&bundle, &mut self.clock) {
                    Ok(()) => {}
                    // a non-finite value reaching the store is a run-level bug
                    Err(e @ DriftError::NonFinite(_)) => return Err(e),
                    Err(_) => {} // counted by the coordinator
                }
            }
            Ok(Message::Interaction(_)) => {
                // the coordinator must never sit on the interaction path
                self.cos.stats.interactions_received += 1;
            }
            Ok(Message::ReprReply(_)) | Err(_) => {
                self.stats.undeliverable += 1;
            }
        }
        Ok(())
    }

    /// Close out an epoch: discard in-flight blocks and return
    /// `(loss_sum, trained_blocks)` accumulated by the owners.
    pub fn end_epoch(&mut self) -> (f64, u64) {
        debug_assert_eq!(self.queue.len(), 0, "epoch ended with undelivered messages");
        let mut loss_sum = 0.0;
        let mut blocks = 0;
        for owner in &mut self.dos {
            let (sum, n) = owner.take_epoch_loss();
            loss_sum += sum;
            blocks += n;
            owner.end_epoch();
        }
        (loss_sum, blocks)
    }

    /// Hand the message log over (audits) and start a fresh one.
    pub fn take_log(&mut self) -> MessageLog {
        let retain = self.log.retains_payloads();
        std::mem::replace(&mut self.log, MessageLog::new(retain))
    }
}

impl Envelope {
    pub fn receiver_role(&self) -> Role {
        match self.to {
            Addr::Do(k) => Role::Do(k),
            Addr::Cos => Role::Cos,
        }
    }
}
