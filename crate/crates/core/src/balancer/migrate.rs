//! Batch hot migration with CRC32 verification.
//!
//! The source keeps serving a shard until the central node publishes the new
//! route; the source copy is freed only after the target has served for
//! [`SWITCH_DWELL_US`].

use serde::Serialize;

use super::crc32;
use super::wire::{Message, RoutingEntry};
use crate::embed::MbrSummary;
use crate::sim::bus::{Bus, BusError, Node};
use crate::{MachineId, ShardId};

/// Transmissions allowed per shard before the migration is rolled back.
pub const RETRY_BUDGET: u16 = 100;
pub const SWITCH_DWELL_US: u64 = 100_000;
/// Simulated link: fixed latency plus bytes over bandwidth.
pub const LINK_LATENCY_US: u64 = 50;
pub const LINK_BYTES_PER_US: u64 = 1_000;

/// Authoritative shard → machine map with the summary of each shard's index.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    pub version: u64,
    owner: Vec<MachineId>,
    summaries: Vec<MbrSummary>,
}

impl RoutingTable {
    pub fn new(owner: Vec<MachineId>, summaries: Vec<MbrSummary>) -> Self {
        assert_eq!(owner.len(), summaries.len());
        Self {
            version: 0,
            owner,
            summaries,
        }
    }

    pub fn owner(&self, shard: ShardId) -> MachineId {
        self.owner[shard as usize]
    }

    pub fn owners(&self) -> &[MachineId] {
        &self.owner
    }

    pub fn summary(&self, shard: ShardId) -> &MbrSummary {
        &self.summaries[shard as usize]
    }

    pub fn summaries(&self) -> &[MbrSummary] {
        &self.summaries
    }

    pub fn shard_count(&self) -> usize {
        self.owner.len()
    }

    /// Applies a routing update atomically; stale versions are ignored.
    pub fn apply(&mut self, version: u64, entries: &[RoutingEntry]) -> bool {
        if version <= self.version {
            return false;
        }
        for e in entries {
            self.owner[e.shard as usize] = e.machine;
            self.summaries[e.shard as usize] = e.summary;
        }
        self.version = version;
        true
    }
}

/// Where migrated shards are unpacked and freed.
pub trait ShardHost {
    fn machine_count(&self) -> usize;
    /// Serialized shard payload held by `machine`.
    fn export(&self, machine: MachineId, shard: ShardId) -> Vec<u8>;
    /// Installs a verified payload as a temporary copy on `machine`.
    fn install(&mut self, machine: MachineId, shard: ShardId, payload: &[u8]) -> Result<MbrSummary, String>;
    /// Drops `machine`'s copy of `shard`.
    fn release(&mut self, machine: MachineId, shard: ShardId);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MigrationTask {
    pub shard: ShardId,
    pub source: MachineId,
    pub target: MachineId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferOutcome {
    pub shard: ShardId,
    pub source: MachineId,
    pub target: MachineId,
    pub converged: bool,
    pub transmissions: u16,
    pub source_crc: u32,
    pub received_crc: u32,
    #[serde(skip)]
    pub received: Option<Vec<u8>>,
    pub finished_us: u64,
}

fn link_time(len: usize) -> u64 {
    LINK_LATENCY_US + len as u64 / LINK_BYTES_PER_US
}

/// Checksum, transmission and verification for one shard. The first packet
/// carries the source checksum; on mismatch the target asks again and the
/// source resends only the data, until a match or the budget runs out.
pub fn transfer(
    task: &MigrationTask,
    payload: &[u8],
    bus: &mut Bus,
    start_us: u64,
    budget: u16,
) -> Result<TransferOutcome, BusError> {
    let crc = crc32(payload);
    let (src, dst) = (Node::Worker(task.source), Node::Worker(task.target));
    let mut t = start_us;
    let mut expected = None;
    let mut last_crc = 0;
    for attempt in 0..budget {
        let msg = Message::MigrationData {
            shard: task.shard,
            attempt,
            crc: (attempt == 0).then_some(crc),
            payload: payload.to_vec(),
        };
        let wire = bus.send(t, src, dst, &msg)?;
        t += link_time(wire.len());
        let Ok(Message::MigrationData { crc: got_crc, payload: got, .. }) = Message::decode(&wire) else {
            unreachable!("faults only touch the payload region");
        };
        if let Some(c) = got_crc {
            expected = Some(c);
        }
        last_crc = crc32(&got);
        if Some(last_crc) == expected {
            return Ok(TransferOutcome {
                shard: task.shard,
                source: task.source,
                target: task.target,
                converged: true,
                transmissions: attempt + 1,
                source_crc: crc,
                received_crc: last_crc,
                received: Some(got),
                finished_us: t,
            });
        }
        if attempt + 1 < budget {
            let req = Message::RetransmitRequest {
                shard: task.shard,
                attempt: attempt + 1,
            };
            let w = bus.send(t, dst, src, &req)?;
            t += link_time(w.len());
        }
    }
    Ok(TransferOutcome {
        shard: task.shard,
        source: task.source,
        target: task.target,
        converged: false,
        transmissions: budget,
        source_crc: crc,
        received_crc: last_crc,
        received: None,
        finished_us: t,
    })
}

/// Central node publishes new owners plus index summaries to every worker.
pub fn broadcast_switch(
    routing: &mut RoutingTable,
    entries: Vec<RoutingEntry>,
    bus: &mut Bus,
    machines: usize,
    time_us: u64,
) -> Result<u64, BusError> {
    let version = routing.version + 1;
    let msg = Message::RoutingUpdate { version, entries };
    for k in 0..machines {
        bus.send(time_us, Node::Central, Node::Worker(k as MachineId), &msg)?;
    }
    if let Message::RoutingUpdate { entries, .. } = &msg {
        routing.apply(version, entries);
    }
    Ok(version)
}

/// Target reports a healthy dwell; the source frees its copy.
pub fn complete_switch(
    task: &MigrationTask,
    host: &mut dyn ShardHost,
    bus: &mut Bus,
    time_us: u64,
) -> Result<(), BusError> {
    let msg = Message::SwitchComplete {
        shard: task.shard,
        machine: task.target,
        time_us,
    };
    bus.send(time_us, Node::Worker(task.target), Node::Central, &msg)?;
    host.release(task.source, task.shard);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigrationReport {
    pub outcomes: Vec<TransferOutcome>,
    pub switched: Vec<ShardId>,
    /// Shards whose transfer exhausted the budget; the source stays authoritative.
    pub aborted: Vec<ShardId>,
    pub broadcasts: usize,
    pub routing_version: u64,
    pub switch_us: u64,
    pub release_us: u64,
}

/// Runs all five phases for one batch back to back. A batch shares one
/// routing broadcast.
pub fn hot_migrate(
    batch: &[MigrationTask],
    host: &mut dyn ShardHost,
    routing: &mut RoutingTable,
    bus: &mut Bus,
    start_us: u64,
) -> Result<MigrationReport, BusError> {
    let mut outcomes = Vec::with_capacity(batch.len());
    let mut t = start_us;
    for task in batch {
        let payload = host.export(task.source, task.shard);
        let o = transfer(task, &payload, bus, start_us, RETRY_BUDGET)?;
        t = t.max(o.finished_us);
        outcomes.push(o);
    }
    let mut entries = Vec::new();
    let mut switched = Vec::new();
    let mut aborted = Vec::new();
    for (task, o) in batch.iter().zip(&mut outcomes) {
        let installed = o
            .received
            .as_deref()
            .map(|bytes| host.install(task.target, task.shard, bytes));
        match installed {
            Some(Ok(summary)) => {
                entries.push(RoutingEntry {
                    shard: task.shard,
                    machine: task.target,
                    summary,
                });
                switched.push(task.shard);
            }
            Some(Err(e)) => {
                log::warn!("shard {}: install failed ({e}), rolled back", task.shard);
                o.converged = false;
                aborted.push(task.shard);
            }
            None => {
                log::warn!("shard {}: retry budget exhausted, rolled back", task.shard);
                aborted.push(task.shard);
            }
        }
    }
    let mut broadcasts = 0;
    if !entries.is_empty() {
        broadcast_switch(routing, entries, bus, host.machine_count(), t)?;
        broadcasts = 1;
    }
    let release = t + SWITCH_DWELL_US;
    for task in batch.iter().filter(|task| switched.contains(&task.shard)) {
        complete_switch(task, host, bus, release)?;
    }
    Ok(MigrationReport {
        outcomes,
        switched,
        aborted,
        broadcasts,
        routing_version: routing.version,
        switch_us: t,
        release_us: release,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::embed::Mbr;
    use crate::sim::bus::PacketCorruption;

    /// Hosts raw byte blobs per (machine, shard).
    struct MemHost {
        machines: usize,
        store: BTreeMap<(MachineId, ShardId), Vec<u8>>,
    }

    impl ShardHost for MemHost {
        fn machine_count(&self) -> usize {
            self.machines
        }
        fn export(&self, machine: MachineId, shard: ShardId) -> Vec<u8> {
            self.store[&(machine, shard)].clone()
        }
        fn install(&mut self, machine: MachineId, shard: ShardId, payload: &[u8]) -> Result<MbrSummary, String> {
            self.store.insert((machine, shard), payload.to_vec());
            Ok(summary(shard))
        }
        fn release(&mut self, machine: MachineId, shard: ShardId) {
            self.store.remove(&(machine, shard));
        }
    }

    fn summary(shard: ShardId) -> MbrSummary {
        MbrSummary {
            shard,
            mbr: Mbr { min: [0.0; 2], max: [1.0; 2] },
            entry_count: 1,
        }
    }

    fn setup(shards: u32) -> (MemHost, RoutingTable) {
        let mut store = BTreeMap::new();
        for s in 0..shards {
            store.insert((0, s), (0..500u32).map(|i| (i * 7 + s) as u8).collect());
        }
        let routing = RoutingTable::new(vec![0; shards as usize], (0..shards).map(summary).collect());
        (MemHost { machines: 3, store }, routing)
    }

    #[test]
    fn clean_transfer_moves_ownership() {
        let (mut host, mut routing) = setup(2);
        let mut bus = Bus::new();
        let original = host.export(0, 1);
        let task = MigrationTask { shard: 1, source: 0, target: 2 };
        let r = hot_migrate(&[task], &mut host, &mut routing, &mut bus, 0).unwrap();
        assert_eq!(r.switched, vec![1]);
        assert_eq!(r.outcomes[0].transmissions, 1);
        assert_eq!(routing.owner(1), 2);
        assert_eq!(host.export(2, 1), original);
        assert!(!host.store.contains_key(&(0, 1)));
        assert_eq!(r.release_us - r.switch_us, SWITCH_DWELL_US);
    }

    #[test]
    fn first_packet_corrupted_means_one_retransmission() {
        let (host, _) = setup(1);
        let payload = host.export(0, 0);
        let mut bus = Bus::new();
        bus.set_fault(Some(PacketCorruption::new(1.0, 5).unwrap().with_limit(1)));
        let task = MigrationTask { shard: 0, source: 0, target: 1 };
        let o = transfer(&task, &payload, &mut bus, 0, RETRY_BUDGET).unwrap();
        assert!(o.converged);
        assert_eq!(o.transmissions, 2);
        assert_eq!(o.received.as_deref(), Some(payload.as_slice()));
        let kinds: Vec<_> = bus.log().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, ["MigrationData", "RetransmitRequest", "MigrationData"]);
    }

    #[test]
    fn saturated_corruption_rolls_back() {
        let (mut host, mut routing) = setup(1);
        let mut bus = Bus::new();
        bus.set_fault(Some(PacketCorruption::new(1.0, 2).unwrap()));
        let task = MigrationTask { shard: 0, source: 0, target: 1 };
        let r = hot_migrate(&[task], &mut host, &mut routing, &mut bus, 0).unwrap();
        assert_eq!(r.aborted, vec![0]);
        assert_eq!(r.outcomes[0].transmissions, RETRY_BUDGET);
        assert_eq!(routing.owner(0), 0);
        assert_eq!(routing.version, 0);
        assert!(host.store.contains_key(&(0, 0)));
        assert!(!host.store.contains_key(&(1, 0)));
    }

    #[test]
    fn batch_shares_one_broadcast() {
        let (mut host, mut routing) = setup(5);
        let mut bus = Bus::new();
        let batch: Vec<_> = (0..5).map(|s| MigrationTask { shard: s, source: 0, target: 1 }).collect();
        let r = hot_migrate(&batch, &mut host, &mut routing, &mut bus, 0).unwrap();
        assert_eq!(r.broadcasts, 1);
        let updates: Vec<_> = bus.log().iter().filter(|e| e.kind == "RoutingUpdate").collect();
        assert_eq!(updates.len(), host.machines);
        assert_eq!(routing.version, 1);
    }

    #[test]
    fn stale_update_is_ignored() {
        let (_, mut routing) = setup(1);
        let e = RoutingEntry { shard: 0, machine: 2, summary: summary(0) };
        assert!(routing.apply(1, std::slice::from_ref(&e)));
        assert!(!routing.apply(1, &[RoutingEntry { machine: 1, ..e }]));
        assert_eq!(routing.owner(0), 2);
    }
}
