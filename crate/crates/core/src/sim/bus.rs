//! Simulated message transport with a full delivery log.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::balancer::wire::{Message, MIGRATION_PAYLOAD_OFFSET};
use crate::MachineId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Node {
    Central,
    Worker(MachineId),
}

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("worker {from} may not send {kind} to worker {to}")]
    Isolation {
        from: MachineId,
        to: MachineId,
        kind: &'static str,
    },
    #[error("corruption probability {0} outside [0, 1]")]
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub time_us: u64,
    pub seq: u64,
    pub from: Node,
    pub to: Node,
    pub kind: &'static str,
    pub len: usize,
    pub corrupted: bool,
}

/// Flips one payload byte of a migration packet with a fixed probability.
#[derive(Debug, Clone)]
pub struct PacketCorruption {
    probability: f64,
    rng: ChaCha8Rng,
    limit: Option<u64>,
    pub injected: u64,
}

impl PacketCorruption {
    pub fn new(probability: f64, seed: u64) -> Result<Self, BusError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(BusError::Probability(probability));
        }
        Ok(Self {
            probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
            limit: None,
            injected: 0,
        })
    }

    /// Stops corrupting after `limit` injections.
    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    fn apply(&mut self, payload: &mut [u8]) -> bool {
        if payload.is_empty()
            || self.limit.is_some_and(|l| self.injected >= l)
            || !self.rng.gen_bool(self.probability)
        {
            return false;
        }
        let i = self.rng.gen_range(0..payload.len());
        payload[i] ^= self.rng.gen_range(1..=255u8);
        self.injected += 1;
        true
    }
}

/// Only the migration protocol may cross between workers.
fn worker_to_worker_allowed(m: &Message) -> bool {
    matches!(m, Message::MigrationData { .. } | Message::RetransmitRequest { .. })
}

#[derive(Debug, Default)]
pub struct Bus {
    log: Vec<LogEntry>,
    seq: u64,
    fault: Option<PacketCorruption>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_fault(&mut self, fault: Option<PacketCorruption>) {
        self.fault = fault;
    }

    pub fn fault(&self) -> Option<&PacketCorruption> {
        self.fault.as_ref()
    }

    /// Encodes, logs and delivers `msg`; returns the bytes as received.
    pub fn send(
        &mut self,
        time_us: u64,
        from: Node,
        to: Node,
        msg: &Message,
    ) -> Result<Vec<u8>, BusError> {
        if let (Node::Worker(a), Node::Worker(b)) = (from, to) {
            if !worker_to_worker_allowed(msg) {
                return Err(BusError::Isolation {
                    from: a,
                    to: b,
                    kind: msg.kind(),
                });
            }
        }
        let mut bytes = msg.encode();
        let mut corrupted = false;
        if let (Message::MigrationData { .. }, Some(f)) = (msg, self.fault.as_mut()) {
            corrupted = f.apply(&mut bytes[MIGRATION_PAYLOAD_OFFSET..]);
        }
        self.log.push(LogEntry {
            time_us,
            seq: self.seq,
            from,
            to,
            kind: msg.kind(),
            len: bytes.len(),
            corrupted,
        });
        self.seq += 1;
        Ok(bytes)
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Worker-to-worker entries; all of them belong to migrations.
    pub fn worker_edges(&self) -> impl Iterator<Item = &LogEntry> {
        self.log
            .iter()
            .filter(|e| matches!((e.from, e.to), (Node::Worker(_), Node::Worker(_))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workers_cannot_chat() {
        let mut bus = Bus::new();
        let m = Message::SwitchComplete {
            shard: 1,
            machine: 0,
            time_us: 0,
        };
        assert!(bus.send(0, Node::Worker(0), Node::Central, &m).is_ok());
        assert!(matches!(
            bus.send(0, Node::Worker(0), Node::Worker(1), &m),
            Err(BusError::Isolation { .. })
        ));
        let d = Message::MigrationData {
            shard: 1,
            attempt: 0,
            crc: Some(0),
            payload: vec![1],
        };
        assert!(bus.send(0, Node::Worker(0), Node::Worker(1), &d).is_ok());
        assert_eq!(bus.worker_edges().count(), 1);
    }

    #[test]
    fn corruption_touches_only_payload() {
        let mut bus = Bus::new();
        bus.set_fault(Some(PacketCorruption::new(1.0, 3).unwrap()));
        let d = Message::MigrationData {
            shard: 9,
            attempt: 0,
            crc: Some(77),
            payload: vec![0; 64],
        };
        let got = bus.send(0, Node::Worker(0), Node::Worker(1), &d).unwrap();
        let Message::MigrationData { shard, crc, payload, .. } = Message::decode(&got).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!((shard, crc), (9, Some(77)));
        assert_eq!(payload.iter().filter(|&&b| b != 0).count(), 1);
        assert!(PacketCorruption::new(1.5, 0).is_err());
    }
}
