//! Binary message encoding for the federation bus.
//!
//! Every message is `[kind: u8][payload_len: u32 BE][payload]`. Integers are
//! big-endian; vector entries are IEEE-754 f64 bit patterns, big-endian.
//! The full layout of each kind is documented in PROTOCOL.md; the encrypted
//! interaction payload is the bit-exact wire form from [`crate::channel`].

use crate::channel::EncryptedInteraction;
use crate::error::{DriftError, Result};
use crate::model::GradientBundle;

pub const KIND_INTERACTION: u8 = 0x01;
pub const KIND_REPR_REQUEST: u8 = 0x02;
pub const KIND_REPR_REPLY: u8 = 0x03;
pub const KIND_GRADIENT_BUNDLE: u8 = 0x04;

/// Ask the coordinator for the current rows of these users and items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReprRequest {
    pub do_id: u32,
    pub user_ids: Vec<u32>,
    pub item_ids: Vec<u32>,
}

/// The requested rows, all read from one store snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprReply {
    pub do_id: u32,
    pub snapshot_tag: u64,
    pub user_rows: Vec<(u32, Vec<f64>)>,
    pub item_rows: Vec<(u32, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Interaction(EncryptedInteraction),
    ReprRequest(ReprRequest),
    ReprReply(ReprReply),
    Gradients(GradientBundle),
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Interaction(_) => KIND_INTERACTION,
            Message::ReprRequest(_) => KIND_REPR_REQUEST,
            Message::ReprReply(_) => KIND_REPR_REPLY,
            Message::Gradients(_) => KIND_GRADIENT_BUNDLE,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(kind: u8) -> Self {
        // reserve the header; the length slot is patched in finish()
        Writer {
            buf: vec![kind, 0, 0, 0, 0],
        }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    fn id_list(&mut self, ids: &[u32]) {
        self.u32(ids.len() as u32);
        for &id in ids {
            self.u32(id);
        }
    }

    fn rows(&mut self, rows: &[(u32, Vec<f64>)]) {
        self.u32(rows.len() as u32);
        for (id, row) in rows {
            self.u32(*id);
            for &x in row {
                self.f64(x);
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let len = (self.buf.len() - 5) as u32;
        self.buf[1..5].copy_from_slice(&len.to_be_bytes());
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DriftError::Codec("message truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id_list(&mut self) -> Result<Vec<u32>> {
        let n = self.checked_count(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    fn rows(&mut self, dim: usize) -> Result<Vec<(u32, Vec<f64>)>> {
        let n = self.checked_count(4 + dim * 8)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let id = self.u32()?;
            let row = (0..dim).map(|_| self.f64()).collect::<Result<Vec<f64>>>()?;
            out.push((id, row));
        }
        Ok(out)
    }

    /// A declared element count, sanity-bounded by the remaining bytes.
    fn checked_count(&mut self, min_elem_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n * min_elem_size.max(1) > self.buf.len() - self.pos {
            return Err(DriftError::Codec("declared count exceeds payload".into()));
        }
        Ok(n)
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(DriftError::Codec(format!(
                "{} trailing bytes after message",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    match msg {
        Message::Interaction(enc) => {
            let mut w = Writer::new(KIND_INTERACTION);
            w.bytes(&enc.to_bytes());
            w.finish()
        }
        Message::ReprRequest(req) => {
            let mut w = Writer::new(KIND_REPR_REQUEST);
            w.u32(req.do_id);
            w.id_list(&req.user_ids);
            w.id_list(&req.item_ids);
            w.finish()
        }
        Message::ReprReply(reply) => {
            let dim = reply
                .user_rows
                .first()
                .or(reply.item_rows.first())
                .map(|(_, row)| row.len())
                .unwrap_or(0);
            let mut w = Writer::new(KIND_REPR_REPLY);
            w.u32(reply.do_id);
            w.u64(reply.snapshot_tag);
            w.u32(dim as u32);
            w.rows(&reply.user_rows);
            w.rows(&reply.item_rows);
            w.finish()
        }
        Message::Gradients(bundle) => {
            let dim = bundle
                .user_grads
                .first()
                .or(bundle.item_grads.first())
                .map(|(_, g)| g.len())
                .unwrap_or(0);
            let mut w = Writer::new(KIND_GRADIENT_BUNDLE);
            w.u32(bundle.do_id);
            w.u32(dim as u32);
            w.rows(&bundle.user_grads);
            w.rows(&bundle.item_grads);
            w.finish()
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < 5 {
        return Err(DriftError::Codec("message shorter than header".into()));
    }
    let kind = bytes[0];
    let declared = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
    let payload = &bytes[5..];
    if payload.len() != declared {
        return Err(DriftError::Codec(format!(
            "length prefix {declared} does not match payload {}",
            payload.len()
        )));
    }
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let msg = match kind {
        KIND_INTERACTION => Message::Interaction(EncryptedInteraction::from_bytes(payload)?),
        KIND_REPR_REQUEST => {
            let do_id = r.u32()?;
            let user_ids = r.id_list()?;
            let item_ids = r.id_list()?;
            r.done()?;
            Message::ReprRequest(ReprRequest {
                do_id,
                user_ids,
                item_ids,
            })
        }
        KIND_REPR_REPLY => {
            let do_id = r.u32()?;
            let snapshot_tag = r.u64()?;
            let dim = r.u32()? as usize;
            let user_rows = r.rows(dim)?;
            let item_rows = r.rows(dim)?;
            r.done()?;
            Message::ReprReply(ReprReply {
                do_id,
                snapshot_tag,
                user_rows,
                item_rows,
            })
        }
        KIND_GRADIENT_BUNDLE => {
            let do_id = r.u32()?;
            let dim = r.u32()? as usize;
            let user_grads = r.rows(dim)?;
            let item_grads = r.rows(dim)?;
            r.done()?;
            Message::Gradients(GradientBundle {
                do_id,
                user_grads,
                item_grads,
            })
        }
        other => return Err(DriftError::Codec(format!("unknown message kind {other:#04x}"))),
    };
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{encrypt_interaction, gen_key};
    use proptest::prelude::*;

    #[test]
    fn interaction_round_trip_preserves_wire_bytes() {
        let mut key = gen_key(3, Some(1)).unwrap();
        let enc = encrypt_interaction(&mut key, 10, 20, true).unwrap();
        let msg = Message::Interaction(enc.clone());
        let bytes = encode(&msg);
        assert_eq!(bytes[0], KIND_INTERACTION);
        assert_eq!(&bytes[5..], enc.to_bytes().as_slice());
        assert_eq!(decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn unknown_kind_rejected() {
        let err = decode(&[0x09, 0, 0, 0, 0]).unwrap_err();
        assert!(matches!(err, DriftError::Codec(_)));
    }

    #[test]
    fn length_prefix_must_match() {
        let msg = Message::ReprRequest(ReprRequest {
            do_id: 1,
            user_ids: vec![2],
            item_ids: vec![3, 4],
        });
        let mut bytes = encode(&msg);
        bytes[4] ^= 0x02;
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn truncation_is_detected() {
        let msg = Message::ReprReply(ReprReply {
            do_id: 0,
            snapshot_tag: 9,
            user_rows: vec![(1, vec![0.5, -0.25])],
            item_rows: vec![(2, vec![1.0, 2.0]), (3, vec![3.0, 4.0])],
        });
        let bytes = encode(&msg);
        for cut in [bytes.len() - 1, bytes.len() - 7, 6] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut} decoded");
        }
    }

    proptest! {
        #[test]
        fn request_and_bundle_round_trip(
            do_id in 0u32..100,
            users in proptest::collection::vec(0u32..5000, 0..20),
            items in proptest::collection::vec(0u32..5000, 0..30),
            grads in proptest::collection::vec(
                (0u32..5000, proptest::collection::vec(-1e6f64..1e6, 4)), 0..10),
        ) {
            let req = Message::ReprRequest(ReprRequest {
                do_id,
                user_ids: users,
                item_ids: items,
            });
            prop_assert_eq!(decode(&encode(&req)).unwrap(), req);

            let bundle = Message::Gradients(GradientBundle {
                do_id,
                user_grads: grads.clone(),
                item_grads: grads,
            });
            prop_assert_eq!(decode(&encode(&bundle)).unwrap(), bundle);
        }
    }
}
