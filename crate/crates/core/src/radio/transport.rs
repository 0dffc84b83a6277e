//! Per-UE packet queues drained by scheduler grants.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Direction, Rnti, TtiAllocation, UeContext};
use crate::apps::{Command, Feedback};
use crate::rng::{named_stream, StreamRng};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Feedback(Feedback),
    Command(Command),
    /// Operator actuation command, identified by its emission sequence.
    Actuation { seq: u64 },
    Video,
    Opaque,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub bytes: u32,
    pub remaining: u32,
    pub enqueued_at: SimTime,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivered {
    pub rnti: Rnti,
    pub direction: Direction,
    pub packet: Packet,
    pub served_tti: u64,
    pub delivered_at: SimTime,
}

impl Delivered {
    pub fn delay(&self) -> SimTime {
        self.delivered_at - self.packet.enqueued_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkImpairment {
    pub loss_p: f64,
    pub processing_delay_s: f64,
    pub retransmit_delay_ttis: u64,
}

impl Default for LinkImpairment {
    fn default() -> Self {
        LinkImpairment {
            loss_p: 0.0,
            processing_delay_s: 1e-3,
            retransmit_delay_ttis: 8,
        }
    }
}

#[derive(Debug, Default)]
struct UeQueue {
    packets: VecDeque<Packet>,
    queued_bytes: u64,
    retx: Vec<(u64, Packet)>,
    retx_bytes: u64,
    enqueued_bytes: u64,
    delivered_bytes: u64,
}

/// Byte accounting for one (UE, direction) queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueLedger {
    pub enqueued: u64,
    pub delivered: u64,
    pub queued: u64,
    pub retransmitting: u64,
}

impl QueueLedger {
    pub fn balanced(&self) -> bool {
        self.enqueued == self.delivered + self.queued + self.retransmitting
    }
}

pub struct Transport {
    queues: BTreeMap<(Rnti, Direction), UeQueue>,
    loss_streams: BTreeMap<(Rnti, Direction), StreamRng>,
    seed: u64,
    next_id: u64,
}

impl Transport {
    pub fn new(seed: u64) -> Self {
        Transport {
            queues: BTreeMap::new(),
            loss_streams: BTreeMap::new(),
            seed,
            next_id: 0,
        }
    }

    pub fn enqueue(
        &mut self,
        rnti: Rnti,
        dir: Direction,
        bytes: u32,
        now: SimTime,
        payload: Payload,
    ) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let q = self.queues.entry((rnti, dir)).or_default();
        q.packets.push_back(Packet {
            id,
            bytes,
            remaining: bytes,
            enqueued_at: now,
            payload,
        });
        q.queued_bytes += u64::from(bytes);
        q.enqueued_bytes += u64::from(bytes);
        id
    }

    /// Moves retransmissions due at `tti` back to the head of their queues,
    /// oldest first.
    pub fn requeue_due(&mut self, tti: u64) {
        for q in self.queues.values_mut() {
            if q.retx.iter().all(|(due, _)| *due > tti) {
                continue;
            }
            let mut due: Vec<(u64, Packet)> = Vec::new();
            q.retx.retain(|(at, p)| {
                if *at <= tti {
                    due.push((*at, p.clone()));
                    false
                } else {
                    true
                }
            });
            due.sort_by_key(|(at, p)| (*at, p.id));
            for (_, p) in due.into_iter().rev() {
                let b = u64::from(p.remaining);
                q.retx_bytes -= b;
                q.queued_bytes += b;
                q.packets.push_front(p);
            }
        }
    }

    pub fn ledger(&self, rnti: Rnti, dir: Direction) -> QueueLedger {
        self.queues
            .get(&(rnti, dir))
            .map(|q| QueueLedger {
                enqueued: q.enqueued_bytes,
                delivered: q.delivered_bytes,
                queued: q.queued_bytes,
                retransmitting: q.retx_bytes,
            })
            .unwrap_or_default()
    }

    pub fn ledgers(&self) -> impl Iterator<Item = ((Rnti, Direction), QueueLedger)> + '_ {
        self.queues.keys().map(|&(r, d)| ((r, d), self.ledger(r, d)))
    }

    /// Sum of remaining bytes actually held in the FIFO (for audits).
    pub fn fifo_bytes(&self, rnti: Rnti, dir: Direction) -> u64 {
        self.queues
            .get(&(rnti, dir))
            .map(|q| q.packets.iter().map(|p| u64::from(p.remaining)).sum())
            .unwrap_or(0)
    }

    pub fn queued_bytes(&self, rnti: Rnti, dir: Direction) -> u64 {
        self.queues.get(&(rnti, dir)).map_or(0, |q| q.queued_bytes)
    }

    /// Copies queue depths into the scheduler's view of the UE.
    pub fn sync_ue(&self, ue: &mut UeContext) {
        for dir in Direction::BOTH {
            *ue.queue_bytes_mut(dir) = self.queued_bytes(ue.rnti, dir);
        }
    }

    /// Drains head-of-line packets with the bits granted in `allocation`.
    ///
    /// A packet completing in TTI `k` is delivered at the end of the TTI plus
    /// the processing delay. With loss probability `p`, every packet served
    /// in this TTI independently loses that service and waits
    /// `retransmit_delay_ttis` before rejoining the head of its queue.
    pub fn transport_step(
        &mut self,
        allocation: &TtiAllocation,
        tti_start: SimTime,
        tti_duration: SimTime,
        link: &LinkImpairment,
    ) -> Vec<Delivered> {
        let dir = allocation.direction;
        let tti = allocation.tti_index;
        let delivered_at = tti_start + tti_duration + SimTime::from_secs_f64(link.processing_delay_s);

        let mut budgets: BTreeMap<Rnti, u64> = BTreeMap::new();
        for g in &allocation.grants {
            *budgets.entry(g.rnti).or_default() += u64::from(g.bits_served / 8);
        }

        let mut out = Vec::new();
        for (rnti, mut budget) in budgets {
            let Some(q) = self.queues.get_mut(&(rnti, dir)) else {
                continue;
            };
            // (remaining before this TTI, bytes drained now) for each touched packet.
            let mut touched: Vec<(u32, u32)> = Vec::new();
            for p in q.packets.iter_mut() {
                if budget == 0 {
                    break;
                }
                let take = u64::from(p.remaining).min(budget) as u32;
                touched.push((p.remaining, take));
                p.remaining -= take;
                budget -= u64::from(take);
            }

            let mut keep_front = Vec::new();
            for (before, take) in touched {
                let mut p = q.packets.pop_front().expect("touched packets are at the head");
                let lost = link.loss_p > 0.0 && {
                    let seed = self.seed;
                    let rng = self
                        .loss_streams
                        .entry((rnti, dir))
                        .or_insert_with(|| named_stream(seed, &format!("link/{}/{}", rnti, dir.as_str())));
                    rng.random::<f64>() < link.loss_p
                };
                q.queued_bytes -= u64::from(take);
                if lost {
                    p.remaining = before;
                    q.queued_bytes -= u64::from(p.remaining - take);
                    q.retx_bytes += u64::from(p.remaining);
                    q.retx.push((tti + link.retransmit_delay_ttis, p));
                    continue;
                }
                q.delivered_bytes += u64::from(take);
                if p.remaining == 0 {
                    out.push(Delivered {
                        rnti,
                        direction: dir,
                        packet: p,
                        served_tti: tti,
                        delivered_at,
                    });
                } else {
                    keep_front.push(p);
                }
            }
            for p in keep_front.into_iter().rev() {
                q.packets.push_front(p);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{Grant, SliceId};

    const TTI: SimTime = SimTime::from_millis(1);

    fn alloc(tti: u64, rnti: u16, prbs: u32, bits: u32) -> TtiAllocation {
        TtiAllocation {
            tti_index: tti,
            direction: Direction::Ul,
            grants: (0..prbs)
                .map(|i| Grant {
                    prb_index: i,
                    slice_id: SliceId(1),
                    rnti: Rnti(rnti),
                    bits_served: bits,
                })
                .collect(),
            quotas: Vec::new(),
        }
    }

    fn start(tti: u64) -> SimTime {
        SimTime::from_millis(tti)
    }

    #[test]
    fn small_packet_delivered_after_tti_and_processing() {
        let mut t = Transport::new(1);
        t.enqueue(Rnti(7), Direction::Ul, 32, start(0), Payload::Opaque);
        let out = t.transport_step(&alloc(0, 7, 1, 600), start(0), TTI, &LinkImpairment::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].delay(), SimTime::from_millis(2));
        assert!(t.ledger(Rnti(7), Direction::Ul).balanced());
    }

    #[test]
    fn single_loss_delays_by_retransmit_interval() {
        let mut t = Transport::new(1);
        t.enqueue(Rnti(7), Direction::Ul, 32, start(0), Payload::Opaque);
        let lossy = LinkImpairment {
            loss_p: 1.0,
            ..LinkImpairment::default()
        };
        assert!(t.transport_step(&alloc(0, 7, 1, 600), start(0), TTI, &lossy).is_empty());
        let ledger = t.ledger(Rnti(7), Direction::Ul);
        assert_eq!(ledger.retransmitting, 32);
        assert!(ledger.balanced());

        let clean = LinkImpairment::default();
        let mut delivered = None;
        for tti in 1..=20 {
            t.requeue_due(tti);
            let out = t.transport_step(&alloc(tti, 7, 1, 600), start(tti), TTI, &clean);
            if let Some(d) = out.into_iter().next() {
                delivered = Some(d);
                break;
            }
        }
        let d = delivered.unwrap();
        assert_eq!(d.served_tti, 8);
        assert_eq!(d.delay(), SimTime::from_millis(2 + 8));
    }

    #[test]
    fn large_packet_completes_when_last_byte_drains() {
        let mut t = Transport::new(1);
        t.enqueue(Rnti(7), Direction::Ul, 200, start(0), Payload::Opaque);
        let link = LinkImpairment::default();
        // 75 bytes per TTI: 75, 150, 200.
        assert!(t.transport_step(&alloc(0, 7, 1, 600), start(0), TTI, &link).is_empty());
        assert_eq!(t.queued_bytes(Rnti(7), Direction::Ul), 125);
        assert!(t.transport_step(&alloc(1, 7, 1, 600), start(1), TTI, &link).is_empty());
        let out = t.transport_step(&alloc(2, 7, 1, 600), start(2), TTI, &link);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].delivered_at, SimTime::from_millis(4));
        assert!(t.ledger(Rnti(7), Direction::Ul).balanced());
    }

    #[test]
    fn fifo_order_is_preserved_without_loss() {
        let mut t = Transport::new(1);
        for _ in 0..6 {
            t.enqueue(Rnti(7), Direction::Ul, 40, start(0), Payload::Opaque);
        }
        let out = t.transport_step(&alloc(0, 7, 3, 600), start(0), TTI, &LinkImpairment::default());
        let ids: Vec<u64> = out.iter().map(|d| d.packet.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        // 225 bytes of budget: five whole packets plus 25 bytes of the sixth.
        assert_eq!(t.queued_bytes(Rnti(7), Direction::Ul), 15);
        assert_eq!(t.fifo_bytes(Rnti(7), Direction::Ul), 15);
    }
}
