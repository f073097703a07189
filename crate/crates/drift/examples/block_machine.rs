//! The interaction-block state machine, event by event.
//!
//! A block is a run of negatives followed by a run of positives; the next
//! negative completes it. The buffer reports when the completed-block count
//! reaches the update threshold.
//!
//! ```bash
//! cargo run --example block_machine
//! ```

use drift::block::BlockBuffer;

fn main() -> drift::Result<()> {
    let mut buffer = BlockBuffer::new(2)?;
    let user = 0;
    let events: &[(u32, bool)] = &[
        (11, false), // skip
        (12, false), // skip
        (13, true),  // click: closes the negative run
        (14, true),  // click
        (15, false), // skip after click: block 1 complete
        (16, true),  // click
        (17, false), // skip after click: block 2 complete -> threshold
    ];
    for &(item, positive) in events {
        let update = buffer.ingest(user, item, positive);
        let active = buffer.active_block(user).unwrap();
        println!(
            "{} item {:>2} | active: neg {:?} pos {:?} | saved blocks: {} | update required: {}",
            if positive { "click" } else { "skip " },
            item,
            active.negatives,
            active.positives,
            buffer.saved_len(),
            update
        );
    }
    println!("\ndrained blocks:");
    for block in buffer.drain() {
        println!(
            "  user {}: negatives {:?} -> positives {:?} (trainable: {})",
            block.user_id,
            block.negatives,
            block.positives,
            block.is_trainable()
        );
    }
    Ok(())
}
