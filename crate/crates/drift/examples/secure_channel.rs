//! Authenticated encryption of interactions: key generation, the wire
//! layout, tamper detection and wrong-key rejection.
//!
//! ```bash
//! cargo run --example secure_channel
//! ```

use drift::channel::{decrypt_interaction, encrypt_interaction, gen_key, EncryptedInteraction};

fn main() -> drift::Result<()> {
    let mut key_a = gen_key(0, None)?;
    let key_b = gen_key(1, None)?;
    println!("owner 0 key: {} bytes", key_a.key_bytes().len());

    let msg = encrypt_interaction(&mut key_a, 7, 13, true)?;
    let wire = msg.to_bytes();
    println!(
        "encrypted (user 7, item 13): {} bytes on the wire, positive flag in clear = {}",
        wire.len(),
        wire[wire.len() - 1]
    );

    let (user, item) = decrypt_interaction(&key_a, &msg)?;
    println!("owner 0 decrypts: user {user}, item {item}");

    match decrypt_interaction(&key_b, &msg) {
        Err(e) => println!("owner 1 (wrong key) is rejected: {e}"),
        Ok(_) => unreachable!("a foreign key must not decrypt"),
    }

    let mut tampered = wire.clone();
    tampered[18] ^= 0x01; // one ciphertext bit
    let parsed = EncryptedInteraction::from_bytes(&tampered)?;
    match decrypt_interaction(&key_a, &parsed) {
        Err(e) => println!("one flipped bit is rejected: {e}"),
        Ok(_) => unreachable!("tampering must not pass authentication"),
    }

    // fresh nonce per message: same plaintext, different ciphertext
    let again = encrypt_interaction(&mut key_a, 7, 13, true)?;
    println!(
        "same plaintext re-encrypted: ciphertexts differ = {}",
        again.ciphertext != msg.ciphertext
    );
    Ok(())
}
