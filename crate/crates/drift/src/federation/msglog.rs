//! Append-only record of every message crossing the bus.
//!
//! The log exists so that the protocol's visibility claims are checkable:
//! audits scan who received what. Sender, receiver, kind and length are
//! always recorded; payload bytes are kept only when retention is on, since
//! long runs would otherwise hold the whole traffic in memory.

use super::Role;

#[derive(Debug, Clone)]
pub struct LogEntry {
    pub sender: Role,
    pub receiver: Role,
    pub kind: u8,
    pub payload_len: usize,
    /// Full encoded message, when retention is enabled.
    pub payload: Option<Vec<u8>>,
}

#[derive(Debug, Default)]
pub struct MessageLog {
    entries: Vec<LogEntry>,
    retain_payloads: bool,
}

impl MessageLog {
    pub fn new(retain_payloads: bool) -> Self {
        MessageLog {
            entries: Vec::new(),
            retain_payloads,
        }
    }

    pub fn record(&mut self, sender: Role, receiver: Role, bytes: &[u8]) {
        self.entries.push(LogEntry {
            sender,
            receiver,
            kind: bytes.first().copied().unwrap_or(0),
            payload_len: bytes.len(),
            payload: self.retain_payloads.then(|| bytes.to_vec()),
        });
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LogEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retains_payloads(&self) -> bool {
        self.retain_payloads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_metadata_and_optionally_payload() {
        let mut log = MessageLog::new(false);
        log.record(Role::User, Role::Do(2), &[0x01, 0, 0, 0, 1, 0xAA]);
        assert_eq!(log.len(), 1);
        let e = &log.iter().next().unwrap();
        assert_eq!(e.kind, 0x01);
        assert_eq!(e.payload_len, 6);
        assert!(e.payload.is_none());

        let mut log = MessageLog::new(true);
        log.record(Role::Do(1), Role::Cos, &[0x04, 0, 0, 0, 0]);
        assert_eq!(log.iter().next().unwrap().payload.as_deref(), Some(&[0x04, 0, 0, 0, 0][..]));
    }
}
