//! A single update cycle on the deterministic bus, one message at a time,
//! with the message log printed at the end.
//!
//! Shows the flow: encrypted interactions fan out to the owners of an item;
//! the second completed block crosses the threshold; the owner asks for
//! representations, the coordinator answers from one snapshot, the gradient
//! bundle comes back and is applied. The coordinator never receives an
//! interaction.
//!
//! ```bash
//! cargo run --example message_flow
//! ```

use drift::federation::{Federation, FederationConfig, Role};
use drift::model::init_embeddings;

fn main() -> drift::Result<()> {
    let store = init_embeddings(3, 4, 8, 1)?;
    let config = FederationConfig {
        threshold: 2,
        reg_weight: 0.01,
        key_seed: Some(99),
        retain_payloads: true,
        track_trajectory: false,
    };
    // owner 0 holds items {0, 1}, owner 1 holds items {1, 2, 3}
    let mut fed = Federation::new(&config, &[vec![0, 1], vec![1, 2, 3]], store)?;

    // user 0: skip 1, click 2, skip 3 -> owner 1 completes block {1 | 2}
    // user 1: skip 2, click 3, skip 1 -> owner 1 completes block {2 | 3},
    // reaching the threshold
    let script = [
        (0u32, 1u32, false),
        (0, 2, true),
        (0, 3, false),
        (1, 2, false),
        (1, 3, true),
        (1, 1, false),
    ];
    for (user, item, positive) in script {
        fed.send_interaction(user, item, positive)?;
        while fed.step()? {
            // one delivery per loop turn; a real run would batch this
        }
    }

    println!("message log ({} messages):", fed.log().len());
    for entry in fed.log().iter() {
        println!(
            "  {:?} -> {:?}  kind {:#04x}  {} bytes",
            entry.sender, entry.receiver, entry.kind, entry.payload_len
        );
    }
    let cos_inbound_interactions = fed
        .log()
        .iter()
        .filter(|e| e.receiver == Role::Cos && e.kind == 0x01)
        .count();
    println!("interactions received by the coordinator: {cos_inbound_interactions}");
    println!(
        "updates applied: {}, representation requests served: {}",
        fed.cos().stats.bundles_applied,
        fed.cos().stats.requests_served
    );
    for owner in fed.dos() {
        println!(
            "owner {}: {} decrypts, {} users seen, {} blocks trained",
            owner.id,
            owner.stats.decrypt_ok,
            owner.stats.seen_users.len(),
            owner.stats.blocks_trained
        );
    }
    Ok(())
}
