//! Two-level PRB scheduling.
//!
//! Each TTI the grid is first partitioned into integer per-slice quotas
//! (deficit carryover plus largest remainder), then each slice serves its
//! backlogged UEs round-robin, one PRB at a time. Quota a slice cannot use,
//! together with PRBs no slice is entitled to, is re-offered to slices that
//! still have backlog.
//!
//! PRB indices are laid out in settlement order: the first slice owns indices
//! `0..q1`, the next `q1..q1+q2`, and so on, with unentitled PRBs at the top of
//! the grid. Lent PRBs are handed out in ascending index order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CellConfig, Direction, Rnti, SliceDescriptor, SliceId, UeContext};

const SNAP: f64 = 1e-9;

/// Fractional PRBs owed to (or by) each slice, per direction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeficitAccounts {
    carry: BTreeMap<(SliceId, Direction), f64>,
}

impl DeficitAccounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn carryover(&self, slice: SliceId, dir: Direction) -> f64 {
        self.carry.get(&(slice, dir)).copied().unwrap_or(0.0)
    }

    pub fn set_carryover(&mut self, slice: SliceId, dir: Direction, value: f64) {
        self.carry.insert((slice, dir), value);
    }

    pub fn forget_slice(&mut self, slice: SliceId) {
        self.carry.retain(|(id, _), _| *id != slice);
    }
}

/// Integer PRB quotas for one TTI. Updates the carryover of every slice.
pub fn slice_prb_quota(
    slices: &[SliceDescriptor],
    prb_count: u32,
    deficits: &mut DeficitAccounts,
    dir: Direction,
) -> BTreeMap<SliceId, u32> {
    let refs: Vec<&SliceDescriptor> = slices.iter().collect();
    settle_quotas(&refs, prb_count, deficits, dir)
        .into_iter()
        .collect()
}

/// Quotas in settlement order.
fn settle_quotas(
    slices: &[&SliceDescriptor],
    prb_count: u32,
    deficits: &mut DeficitAccounts,
    dir: Direction,
) -> Vec<(SliceId, u32)> {
    let mut order: Vec<&SliceDescriptor> = slices.to_vec();
    order.sort_by(|a, b| a.settlement_cmp(b));

    let mut quota: Vec<u32> = Vec::with_capacity(order.len());
    let mut residual: Vec<f64> = Vec::with_capacity(order.len());
    for slice in &order {
        let entitlement =
            slice.share(dir) * f64::from(prb_count) + deficits.carryover(slice.slice_id, dir);
        let mut q = entitlement.floor().max(0.0);
        let mut rem = entitlement - q;
        if rem > 1.0 - SNAP {
            q += 1.0;
            rem = 0.0;
        } else if rem.abs() < SNAP {
            rem = 0.0;
        }
        quota.push(q as u32);
        residual.push(rem);
    }

    let mut assigned: u32 = quota.iter().sum();
    // Unreachable with valid shares; keeps the grid bound unconditional.
    let mut trim = order.len();
    while assigned > prb_count && trim > 0 {
        trim -= 1;
        let take = quota[trim].min(assigned - prb_count);
        quota[trim] -= take;
        residual[trim] += f64::from(take);
        assigned -= take;
    }

    let mut eligible: Vec<usize> = (0..order.len()).filter(|&i| residual[i] > 0.0).collect();
    eligible.sort_by(|&a, &b| residual[b].total_cmp(&residual[a]).then(a.cmp(&b)));
    for i in eligible {
        if assigned >= prb_count {
            break;
        }
        quota[i] += 1;
        residual[i] -= 1.0;
        assigned += 1;
    }

    order
        .iter()
        .zip(quota.iter().zip(residual.iter()))
        .map(|(slice, (&q, &rem))| {
            deficits.set_carryover(slice.slice_id, dir, rem);
            (slice.slice_id, q)
        })
        .collect()
}

/// How a slice orders its own UEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraSliceOrder {
    RoundRobin,
    /// UEs with `control_priority_flag` strictly before the rest, round-robin
    /// within each class.
    ControlFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledSlice {
    pub descriptor: SliceDescriptor,
    pub order: IntraSliceOrder,
}

impl ScheduledSlice {
    pub fn round_robin(descriptor: SliceDescriptor) -> Self {
        ScheduledSlice {
            descriptor,
            order: IntraSliceOrder::RoundRobin,
        }
    }
}

/// Fate of PRBs no slice is entitled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnallocatedPrbs {
    /// Offered to backlogged slices like idle quota.
    Lend,
    /// Held back; never granted.
    Reserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub prb_index: u32,
    pub slice_id: SliceId,
    pub rnti: Rnti,
    pub bits_served: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceQuota {
    pub slice_id: SliceId,
    pub quota: u32,
    pub granted: u32,
    /// PRBs needed to clear the slice's backlog at the start of the TTI.
    pub demand_prbs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtiAllocation {
    pub tti_index: u64,
    pub direction: Direction,
    /// Sorted by `prb_index`.
    pub grants: Vec<Grant>,
    /// In settlement order.
    pub quotas: Vec<SliceQuota>,
}

impl TtiAllocation {
    pub fn granted_to(&self, slice: SliceId) -> u32 {
        self.grants.iter().filter(|g| g.slice_id == slice).count() as u32
    }

    pub fn bits_for(&self, rnti: Rnti) -> u64 {
        self.grants
            .iter()
            .filter(|g| g.rnti == rnti)
            .map(|g| u64::from(g.bits_served))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    deficits: DeficitAccounts,
    cursors: BTreeMap<(SliceId, Direction, u8), Rnti>,
    unallocated: UnallocatedPrbs,
}

struct Pending {
    rnti: Rnti,
    slice: SliceId,
    control: bool,
    bytes_left: u64,
    bytes_per_prb: u64,
    bits_per_prb: u32,
}

impl Pending {
    fn backlogged(&self) -> bool {
        self.bytes_left > 0 && self.bytes_per_prb > 0
    }
}

impl Scheduler {
    pub fn new(unallocated: UnallocatedPrbs) -> Self {
        Scheduler {
            deficits: DeficitAccounts::new(),
            cursors: BTreeMap::new(),
            unallocated,
        }
    }

    pub fn deficits(&self) -> &DeficitAccounts {
        &self.deficits
    }

    pub fn unallocated(&self) -> UnallocatedPrbs {
        self.unallocated
    }

    /// Drops carryover and cursors of a removed slice.
    pub fn forget_slice(&mut self, slice: SliceId) {
        self.deficits.forget_slice(slice);
        self.cursors.retain(|(id, _, _), _| *id != slice);
    }

    /// Last UE served per (slice, direction, class); class 0 is the control
    /// class for [`IntraSliceOrder::ControlFirst`] slices.
    pub fn cursor(&self, slice: SliceId, dir: Direction, class: u8) -> Option<Rnti> {
        self.cursors.get(&(slice, dir, class)).copied()
    }

    pub fn allocate_tti(
        &mut self,
        cell: &CellConfig,
        slices: &[ScheduledSlice],
        ues: &mut [UeContext],
        tti_index: u64,
        dir: Direction,
    ) -> TtiAllocation {
        let descriptors: Vec<&SliceDescriptor> = slices.iter().map(|s| &s.descriptor).collect();
        let quotas = settle_quotas(&descriptors, cell.prb_count, &mut self.deficits, dir);

        let mut pending: Vec<Pending> = ues
            .iter()
            .map(|ue| {
                let bits = cell.bits_per_prb(ue.cqi(dir));
                Pending {
                    rnti: ue.rnti,
                    slice: ue.scheduling_slice(),
                    control: ue.control_priority_flag,
                    bytes_left: ue.queue_bytes(dir),
                    bytes_per_prb: u64::from(bits / 8),
                    bits_per_prb: bits,
                }
            })
            .collect();
        pending.sort_by_key(|p| p.rnti);

        let order_of = |id: SliceId| {
            slices
                .iter()
                .find(|s| s.descriptor.slice_id == id)
                .map(|s| s.order)
                .unwrap_or(IntraSliceOrder::RoundRobin)
        };

        let mut summary: Vec<SliceQuota> = quotas
            .iter()
            .map(|&(slice_id, quota)| SliceQuota {
                slice_id,
                quota,
                granted: 0,
                demand_prbs: pending
                    .iter()
                    .filter(|p| p.slice == slice_id && p.bytes_per_prb > 0)
                    .map(|p| p.bytes_left.div_ceil(p.bytes_per_prb))
                    .sum::<u64>()
                    .min(u64::from(u32::MAX)) as u32,
            })
            .collect();

        let mut grants = Vec::new();
        let mut free = Vec::new();
        let mut next_index = 0u32;
        for (slot, &(slice_id, quota)) in quotas.iter().enumerate() {
            let order = order_of(slice_id);
            for _ in 0..quota {
                let idx = next_index;
                next_index += 1;
                match self.pick(&mut pending, slice_id, order, dir) {
                    Some(g) => {
                        grants.push(Grant {
                            prb_index: idx,
                            slice_id,
                            rnti: g.0,
                            bits_served: g.1,
                        });
                        summary[slot].granted += 1;
                    }
                    None => free.push(idx),
                }
            }
        }
        if self.unallocated == UnallocatedPrbs::Lend {
            free.extend(next_index..cell.prb_count);
        }

        let mut free = free.into_iter().peekable();
        for (slot, &(slice_id, _)) in quotas.iter().enumerate() {
            let order = order_of(slice_id);
            while let Some(&idx) = free.peek() {
                let Some(g) = self.pick(&mut pending, slice_id, order, dir) else {
                    break;
                };
                free.next();
                grants.push(Grant {
                    prb_index: idx,
                    slice_id,
                    rnti: g.0,
                    bits_served: g.1,
                });
                summary[slot].granted += 1;
            }
        }
        grants.sort_by_key(|g| g.prb_index);

        for ue in ues.iter_mut() {
            let bytes: u64 = grants
                .iter()
                .filter(|g| g.rnti == ue.rnti)
                .map(|g| u64::from(g.bits_served / 8))
                .sum();
            let queue = ue.queue_bytes_mut(dir);
            *queue = queue.saturating_sub(bytes);
        }

        TtiAllocation {
            tti_index,
            direction: dir,
            grants,
            quotas: summary,
        }
    }

    /// Serves one PRB inside `slice`, advancing its round-robin cursor.
    fn pick(
        &mut self,
        pending: &mut [Pending],
        slice: SliceId,
        order: IntraSliceOrder,
        dir: Direction,
    ) -> Option<(Rnti, u32)> {
        let classes: &[(u8, Option<bool>)] = match order {
            IntraSliceOrder::RoundRobin => &[(0, None)],
            IntraSliceOrder::ControlFirst => &[(0, Some(true)), (1, Some(false))],
        };
        for &(class, control) in classes {
            let in_class =
                |p: &Pending| p.slice == slice && control.is_none_or(|c| p.control == c) && p.backlogged();
            let cursor = self.cursors.get(&(slice, dir, class)).copied();
            // `pending` is sorted by RNTI: next after the cursor, else wrap.
            let chosen = pending
                .iter()
                .position(|p| in_class(p) && cursor.is_none_or(|c| p.rnti > c))
                .or_else(|| pending.iter().position(in_class));
            if let Some(i) = chosen {
                let p = &mut pending[i];
                p.bytes_left = p.bytes_left.saturating_sub(p.bytes_per_prb);
                self.cursors.insert((slice, dir, class), p.rnti);
                return Some((p.rnti, p.bits_per_prb));
            }
        }
        None
    }
}
