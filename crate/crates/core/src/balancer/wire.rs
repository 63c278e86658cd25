//! Fixed little-endian layouts for every message on the simulated bus.
//!
//! ```text
//! LoadReport        01 machine:u32 time_us:u64 load:f64 n:u32 (shard:u32 u_cpu:f64 comm:f64 mem:f64)*n
//! RoutingUpdate     02 version:u64 n:u16 (shard:u32 machine:u32 min:2f64 max:2f64 count:u64)*n
//! MigrationData     03 shard:u32 attempt:u16 has_crc:u8 crc:u32 len:u32 payload
//! RetransmitRequest 04 shard:u32 attempt:u16
//! SwitchComplete    05 shard:u32 machine:u32 time_us:u64
//! ```

use thiserror::Error;

use super::LoadSample;
use crate::embed::{Mbr, MbrSummary};
use crate::{MachineId, ShardId};

/// Bytes per shard entry in a routing update.
pub const ROUTING_ENTRY_BYTES: usize = 4 + 4 + 32 + 8;
/// Offset of the payload inside an encoded `MigrationData`.
pub const MIGRATION_PAYLOAD_OFFSET: usize = 1 + 4 + 2 + 1 + 4 + 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message tag {0}")]
    Tag(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingEntry {
    pub shard: ShardId,
    pub machine: MachineId,
    pub summary: MbrSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    LoadReport {
        machine: MachineId,
        time_us: u64,
        load: f64,
        samples: Vec<LoadSample>,
    },
    RoutingUpdate {
        version: u64,
        entries: Vec<RoutingEntry>,
    },
    MigrationData {
        shard: ShardId,
        attempt: u16,
        /// Present on the first transmission only.
        crc: Option<u32>,
        payload: Vec<u8>,
    },
    RetransmitRequest {
        shard: ShardId,
        attempt: u16,
    },
    SwitchComplete {
        shard: ShardId,
        machine: MachineId,
        time_us: u64,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::LoadReport { .. } => "LoadReport",
            Message::RoutingUpdate { .. } => "RoutingUpdate",
            Message::MigrationData { .. } => "MigrationData",
            Message::RetransmitRequest { .. } => "RetransmitRequest",
            Message::SwitchComplete { .. } => "SwitchComplete",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        match self {
            Message::LoadReport {
                machine,
                time_us,
                load,
                samples,
            } => {
                b.push(1);
                b.extend_from_slice(&machine.to_le_bytes());
                b.extend_from_slice(&time_us.to_le_bytes());
                b.extend_from_slice(&load.to_le_bytes());
                b.extend_from_slice(&(samples.len() as u32).to_le_bytes());
                for s in samples {
                    b.extend_from_slice(&s.shard.to_le_bytes());
                    b.extend_from_slice(&s.u_cpu.to_le_bytes());
                    b.extend_from_slice(&s.comm.to_le_bytes());
                    b.extend_from_slice(&s.mem_ratio.to_le_bytes());
                }
            }
            Message::RoutingUpdate { version, entries } => {
                b.push(2);
                b.extend_from_slice(&version.to_le_bytes());
                b.extend_from_slice(&(entries.len() as u16).to_le_bytes());
                for e in entries {
                    b.extend_from_slice(&e.shard.to_le_bytes());
                    b.extend_from_slice(&e.machine.to_le_bytes());
                    let m = e.summary.mbr;
                    for v in [m.min[0], m.min[1], m.max[0], m.max[1]] {
                        b.extend_from_slice(&v.to_le_bytes());
                    }
                    b.extend_from_slice(&e.summary.entry_count.to_le_bytes());
                }
            }
            Message::MigrationData {
                shard,
                attempt,
                crc,
                payload,
            } => {
                b.push(3);
                b.extend_from_slice(&shard.to_le_bytes());
                b.extend_from_slice(&attempt.to_le_bytes());
                b.push(crc.is_some() as u8);
                b.extend_from_slice(&crc.unwrap_or(0).to_le_bytes());
                b.extend_from_slice(&(payload.len() as u32).to_le_bytes());
                b.extend_from_slice(payload);
            }
            Message::RetransmitRequest { shard, attempt } => {
                b.push(4);
                b.extend_from_slice(&shard.to_le_bytes());
                b.extend_from_slice(&attempt.to_le_bytes());
            }
            Message::SwitchComplete {
                shard,
                machine,
                time_us,
            } => {
                b.push(5);
                b.extend_from_slice(&shard.to_le_bytes());
                b.extend_from_slice(&machine.to_le_bytes());
                b.extend_from_slice(&time_us.to_le_bytes());
            }
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        let mut r = Cursor { b: bytes, p: 0 };
        let tag = r.u8()?;
        let msg = match tag {
            1 => {
                let machine = r.u32()?;
                let time_us = r.u64()?;
                let load = r.f64()?;
                let n = r.u32()? as usize;
                let mut samples = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    samples.push(LoadSample {
                        shard: r.u32()?,
                        u_cpu: r.f64()?,
                        comm: r.f64()?,
                        mem_ratio: r.f64()?,
                        time_us,
                    });
                }
                Message::LoadReport {
                    machine,
                    time_us,
                    load,
                    samples,
                }
            }
            2 => {
                let version = r.u64()?;
                let n = r.u16()? as usize;
                let mut entries = Vec::with_capacity(n);
                for _ in 0..n {
                    let shard = r.u32()?;
                    let machine = r.u32()?;
                    let mbr = Mbr {
                        min: [r.f64()?, r.f64()?],
                        max: [r.f64()?, r.f64()?],
                    };
                    let entry_count = r.u64()?;
                    entries.push(RoutingEntry {
                        shard,
                        machine,
                        summary: MbrSummary {
                            shard,
                            mbr,
                            entry_count,
                        },
                    });
                }
                Message::RoutingUpdate { version, entries }
            }
            3 => {
                let shard = r.u32()?;
                let attempt = r.u16()?;
                let has = r.u8()? != 0;
                let crc = r.u32()?;
                let len = r.u32()? as usize;
                let payload = r.take(len)?.to_vec();
                Message::MigrationData {
                    shard,
                    attempt,
                    crc: has.then_some(crc),
                    payload,
                }
            }
            4 => Message::RetransmitRequest {
                shard: r.u32()?,
                attempt: r.u16()?,
            },
            5 => Message::SwitchComplete {
                shard: r.u32()?,
                machine: r.u32()?,
                time_us: r.u64()?,
            },
            t => return Err(WireError::Tag(t)),
        };
        if r.p != bytes.len() {
            return Err(WireError::Trailing(bytes.len() - r.p));
        }
        Ok(msg)
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    p: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let s = self.b.get(self.p..self.p + n).ok_or(WireError::Truncated)?;
        self.p += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(shard: ShardId) -> RoutingEntry {
        RoutingEntry {
            shard,
            machine: 2,
            summary: MbrSummary {
                shard,
                mbr: Mbr {
                    min: [0.1, 0.2],
                    max: [0.8, 0.6],
                },
                entry_count: 321,
            },
        }
    }

    #[test]
    fn every_kind_round_trips() {
        let msgs = vec![
            Message::LoadReport {
                machine: 1,
                time_us: 500_000,
                load: 0.41,
                samples: vec![LoadSample {
                    shard: 3,
                    u_cpu: 0.5,
                    comm: 2.0,
                    mem_ratio: 0.1,
                    time_us: 500_000,
                }],
            },
            Message::RoutingUpdate {
                version: 9,
                entries: vec![entry(4), entry(5)],
            },
            Message::MigrationData {
                shard: 4,
                attempt: 0,
                crc: Some(0xdead_beef),
                payload: vec![1, 2, 3],
            },
            Message::MigrationData {
                shard: 4,
                attempt: 1,
                crc: None,
                payload: vec![],
            },
            Message::RetransmitRequest { shard: 4, attempt: 1 },
            Message::SwitchComplete {
                shard: 4,
                machine: 2,
                time_us: 7,
            },
        ];
        for m in msgs {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn routing_entry_is_small() {
        let one = Message::RoutingUpdate {
            version: 1,
            entries: vec![entry(0)],
        };
        assert_eq!(one.encode().len(), 1 + 8 + 2 + ROUTING_ENTRY_BYTES);
        assert!(one.encode().len() < 1024);
    }

    #[test]
    fn payload_offset_matches_layout() {
        let m = Message::MigrationData {
            shard: 1,
            attempt: 0,
            crc: Some(5),
            payload: vec![0xAB; 4],
        };
        let b = m.encode();
        assert_eq!(&b[MIGRATION_PAYLOAD_OFFSET..], &[0xAB; 4]);
        assert_eq!(Message::decode(&b[..b.len() - 1]), Err(WireError::Truncated));
    }
}
