//! Worker-thread schedule.
//!
//! Data owners are split into contiguous chunks, one chunk per worker
//! thread; each owner is only ever touched by its worker, so actor state
//! stays single-writer. The coordinator runs on its own thread and applies
//! bundles in arrival order. The driver thread plays the users: it
//! encrypts, logs and distributes the epoch's interactions, then quiesces
//! the system with a four-step barrier (owners done, requests served,
//! replies processed, bundles applied).

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;

use crate::channel::encrypt_interaction;
use crate::dataset::Interaction;
use crate::error::{DriftError, Result};
use crate::timing::{Phase, PhaseClock};

use super::bus::{Envelope, Federation};
use super::msglog::MessageLog;
use super::wire::{self, Message, KIND_INTERACTION};
use super::{Addr, Role};

enum WorkerMsg {
    Deliver(Envelope),
    Barrier(Sender<()>),
    Stop,
}

enum CosMsg {
    Deliver(Envelope),
    Barrier(Sender<()>),
    Stop,
}

struct WorkerOutcome {
    clock: PhaseClock,
    undeliverable: u64,
}

/// Run one epoch of the training stream on `n_workers` owner threads plus a
/// coordinator thread. State mutations and statistics land in the same
/// places as under the deterministic bus; only the interleaving differs.
pub fn run_epoch_threaded(
    fed: &mut Federation,
    train: &[Interaction],
    n_workers: usize,
) -> Result<()> {
    if n_workers == 0 {
        return Err(DriftError::InvalidArgument(
            "need at least one worker thread".into(),
        ));
    }
    let Federation {
        ref table,
        ref mut keyring,
        ref mut dos,
        ref mut cos,
        ref mut log,
        ref mut clock,
        ref mut stats,
        ..
    } = *fed;

    let num_dos = dos.len();
    let chunk_size = num_dos.div_ceil(n_workers.min(num_dos));
    // the last chunk may be short, so the spawned count can undershoot
    // the requested worker count
    let n_spawned = num_dos.div_ceil(chunk_size);
    let worker_of = move |do_id: u32| do_id as usize / chunk_size;

    let retain = log.retains_payloads();
    let shared_log = Mutex::new(std::mem::replace(log, MessageLog::new(retain)));

    let mut worker_txs: Vec<Sender<WorkerMsg>> = Vec::new();
    let mut worker_rxs: Vec<Receiver<WorkerMsg>> = Vec::new();
    for _ in 0..n_spawned {
        let (tx, rx) = channel();
        worker_txs.push(tx);
        worker_rxs.push(rx);
    }
    let (cos_tx, cos_rx) = channel::<CosMsg>();

    let mut driver_clock = PhaseClock::default();
    let mut driver_error = None;

    let (worker_outcomes, cos_result) = std::thread::scope(|scope| {
        let mut worker_handles = Vec::new();
        for (chunk_idx, chunk) in dos.chunks_mut(chunk_size).enumerate() {
            let rx = worker_rxs.remove(0);
            let cos_tx = cos_tx.clone();
            let log = &shared_log;
            let chunk_start = chunk_idx * chunk_size;
            worker_handles.push(scope.spawn(move || {
                worker_loop(chunk, chunk_start, rx, cos_tx, log)
            }));
        }

        let cos_handle = {
            let worker_txs = worker_txs.clone();
            let log = &shared_log;
            scope.spawn(move || cos_loop(cos, cos_rx, worker_txs, worker_of, log))
        };

        // play the users: encrypt and distribute the whole epoch
        'outer: for event in train {
            let owners = match table.owners(event.item_id) {
                Ok(o) => o,
                Err(e) => {
                    driver_error = Some(e);
                    break 'outer;
                }
            };
            for &k in owners {
                let encoded = driver_clock.measure(Phase::Encryption, || {
                    encrypt_interaction(
                        &mut keyring[k as usize],
                        event.user_id,
                        event.item_id,
                        event.is_positive,
                    )
                    .map(|enc| wire::encode(&Message::Interaction(enc)))
                });
                let bytes = match encoded {
                    Ok(b) => b,
                    Err(e) => {
                        driver_error = Some(e);
                        break 'outer;
                    }
                };
                shared_log.lock().unwrap().record(Role::User, Role::Do(k), &bytes);
                let env = Envelope {
                    sender: Role::User,
                    to: Addr::Do(k),
                    bytes,
                };
                if worker_txs[worker_of(k)].send(WorkerMsg::Deliver(env)).is_err() {
                    break 'outer; // worker died; the join below surfaces why
                }
            }
        }

        // quiesce: owners drain interactions, coordinator serves requests,
        // owners turn replies into bundles, coordinator applies them
        let barrier_workers = |txs: &[Sender<WorkerMsg>]| -> bool {
            let (ack_tx, ack_rx) = channel();
            for tx in txs {
                if tx.send(WorkerMsg::Barrier(ack_tx.clone())).is_err() {
                    return false;
                }
            }
            drop(ack_tx);
            (0..txs.len()).all(|_| ack_rx.recv().is_ok())
        };
        let barrier_cos = |tx: &Sender<CosMsg>| -> bool {
            let (ack_tx, ack_rx) = channel();
            tx.send(CosMsg::Barrier(ack_tx)).is_ok() && ack_rx.recv().is_ok()
        };
        let _quiesced = barrier_workers(&worker_txs)
            && barrier_cos(&cos_tx)
            && barrier_workers(&worker_txs)
            && barrier_cos(&cos_tx);

        for tx in &worker_txs {
            let _ = tx.send(WorkerMsg::Stop);
        }
        let _ = cos_tx.send(CosMsg::Stop);
        drop(cos_tx);
        drop(worker_txs);

        let outcomes: Vec<WorkerOutcome> = worker_handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect();
        let cos_result = cos_handle.join().expect("coordinator thread panicked");
        (outcomes, cos_result)
    });

    *log = shared_log.into_inner().unwrap();
    clock.merge(&driver_clock);
    for outcome in &worker_outcomes {
        clock.merge(&outcome.clock);
        stats.undeliverable += outcome.undeliverable;
    }
    match cos_result {
        Ok(cos_clock) => clock.merge(&cos_clock),
        Err(e) => return Err(e),
    }
    if let Some(e) = driver_error {
        return Err(e);
    }
    Ok(())
}

fn worker_loop(
    chunk: &mut [super::actors::DataOwner],
    chunk_start: usize,
    rx: Receiver<WorkerMsg>,
    cos_tx: Sender<CosMsg>,
    log: &Mutex<MessageLog>,
) -> WorkerOutcome {
    let mut clock = PhaseClock::default();
    let mut undeliverable = 0u64;
    while let Ok(msg) = rx.recv() {
        match msg {
            WorkerMsg::Stop => break,
            WorkerMsg::Barrier(ack) => {
                let _ = ack.send(());
            }
            WorkerMsg::Deliver(env) => {
                let Addr::Do(k) = env.to else {
                    undeliverable += 1;
                    continue;
                };
                let local = k as usize - chunk_start;
                let Some(owner) = chunk.get_mut(local) else {
                    undeliverable += 1;
                    continue;
                };
                let outbound = match wire::decode(&env.bytes) {
                    Ok(Message::Interaction(enc)) => owner
                        .on_interaction(&enc, &mut clock)
                        .map(|req| {
                            clock.measure(Phase::RepresentationTransfer, || {
                                wire::encode(&Message::ReprRequest(req))
                            })
                        }),
                    Ok(Message::ReprReply(reply)) => owner
                        .on_repr_reply(&reply, &mut clock)
                        .filter(|bundle| !bundle.is_empty())
                        .map(|bundle| {
                            clock.measure(Phase::GradientCompute, || {
                                wire::encode(&Message::Gradients(bundle))
                            })
                        }),
                    Ok(_) => {
                        owner.stats.protocol_errors += 1;
                        None
                    }
                    Err(_) if env.bytes.first() == Some(&KIND_INTERACTION) => {
                        owner.stats.auth_failures += 1;
                        None
                    }
                    Err(_) => {
                        undeliverable += 1;
                        None
                    }
                };
                if let Some(bytes) = outbound {
                    log.lock().unwrap().record(Role::Do(k), Role::Cos, &bytes);
                    let env = Envelope {
                        sender: Role::Do(k),
                        to: Addr::Cos,
                        bytes,
                    };
                    if cos_tx.send(CosMsg::Deliver(env)).is_err() {
                        break; // coordinator gone
                    }
                }
            }
        }
    }
    WorkerOutcome {
        clock,
        undeliverable,
    }
}

fn cos_loop(
    cos: &mut super::actors::Cos,
    rx: Receiver<CosMsg>,
    worker_txs: Vec<Sender<WorkerMsg>>,
    worker_of: impl Fn(u32) -> usize,
    log: &Mutex<MessageLog>,
) -> Result<PhaseClock> {
    let mut clock = PhaseClock::default();
    while let Ok(msg) = rx.recv() {
        match msg {
            CosMsg::Stop => break,
            CosMsg::Barrier(ack) => {
                let _ = ack.send(());
            }
            CosMsg::Deliver(env) => match wire::decode(&env.bytes) {
                Ok(Message::ReprRequest(req)) => {
                    match cos.on_repr_request(&req, &mut clock) {
                        Ok(reply) => {
                            let bytes = clock.measure(Phase::RepresentationTransfer, || {
                                wire::encode(&Message::ReprReply(reply))
                            });
                            log.lock().unwrap().record(
                                Role::Cos,
                                Role::Do(req.do_id),
                                &bytes,
                            );
                            let env = Envelope {
                                sender: Role::Cos,
                                to: Addr::Do(req.do_id),
                                bytes,
                            };
                            let _ = worker_txs[worker_of(req.do_id)]
                                .send(WorkerMsg::Deliver(env));
                        }
                        Err(e) => {
                            cos.stats.requests_rejected += 1;
                            log::warn!(
                                "coordinator rejected request from owner {}: {e}",
                                req.do_id
                            );
                        }
                    }
                }
                Ok(Message::Gradients(bundle)) => {
                    match cos.on_gradient_bundle(&bundle, &mut clock) {
                        Ok(()) => {}
                        Err(e @ DriftError::NonFinite(_)) => return Err(e),
                        Err(_) => {}
                    }
                }
                Ok(Message::Interaction(_)) => {
                    cos.stats.interactions_received += 1;
                }
                Ok(Message::ReprReply(_)) | Err(_) => {
                    log::warn!("coordinator dropped an undeliverable message");
                }
            },
        }
    }
    Ok(clock)
}
