//! Shared helpers for integration tests: an independent reference PRB
//! allocator and random instance generation.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slicenet_core::radio::{
    CellConfig, CqiTable, Direction, IntraSliceOrder, RbAvailability, Rnti, ScheduledSlice, SliceDescriptor, SliceId,
    UeContext,
};

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RefSlice {
    pub id: u32,
    pub share: f64,
    pub priority: i32,
    pub high: bool,
    pub control_first: bool,
}

#[derive(Debug, Clone)]
pub struct RefUe {
    pub rnti: u16,
    pub slice: u32,
    pub control: bool,
    pub bytes: u64,
    pub bits_per_prb: u32,
}

/// State the reference carries between TTIs.
#[derive(Debug, Clone, Default)]
pub struct RefState {
    pub carry: BTreeMap<u32, f64>,
    /// (slice, class) → last served rnti.
    pub cursor: BTreeMap<(u32, u8), u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefOutcome {
    /// (prb index, slice, rnti, bits), ascending index.
    pub grants: Vec<(u32, u32, u16, u32)>,
    /// slice → quota.
    pub quotas: BTreeMap<u32, u32>,
}

fn rank(s: &RefSlice) -> (u8, i64, u32) {
    (if s.high { 0 } else { 1 }, -(s.priority as i64), s.id)
}

/// One TTI in one direction, executed PRB by PRB.
pub fn reference_tti(prb: u32, slices: &[RefSlice], ues: &mut [RefUe], lend_tail: bool, st: &mut RefState) -> RefOutcome {
    let mut order: Vec<&RefSlice> = slices.iter().collect();
    order.sort_by_key(|s| rank(s));

    // Quotas: floor of entitlement, then one extra PRB per slice by largest
    // positive remainder while the grid has room.
    let mut quotas: Vec<(u32, u32, f64)> = Vec::new();
    for s in &order {
        let e = s.share * prb as f64 + st.carry.get(&s.id).copied().unwrap_or(0.0);
        let mut q = if e > 0.0 { e.floor() } else { 0.0 };
        let mut r = e - q;
        if r > 1.0 - SNAP {
            q += 1.0;
            r = 0.0;
        }
        if r.abs() < SNAP {
            r = 0.0;
        }
        quotas.push((s.id, q as u32, r));
    }
    let mut used: u32 = quotas.iter().map(|q| q.1).sum();
    assert!(used <= prb, "valid shares never oversubscribe");
    let mut extra_given = vec![false; quotas.len()];
    loop {
        if used >= prb {
            break;
        }
        let mut best: Option<usize> = None;
        for i in 0..quotas.len() {
            if extra_given[i] || quotas[i].2 <= 0.0 {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if quotas[i].2 > quotas[b].2 => best = Some(i),
                _ => {}
            }
        }
        let Some(i) = best else { break };
        extra_given[i] = true;
        quotas[i].1 += 1;
        quotas[i].2 -= 1.0;
        used += 1;
    }
    for &(id, _, r) in &quotas {
        st.carry.insert(id, r);
    }

    let mut by_rnti: Vec<usize> = (0..ues.len()).collect();
    by_rnti.sort_by_key(|&i| ues[i].rnti);
    let control_first: BTreeMap<u32, bool> = slices.iter().map(|s| (s.id, s.control_first)).collect();

    let serve = |slice: u32, ues: &mut [RefUe], st: &mut RefState| -> Option<(u16, u32)> {
        let classes: Vec<(u8, Option<bool>)> = if control_first[&slice] {
            vec![(0, Some(true)), (1, Some(false))]
        } else {
            vec![(0, None)]
        };
        for (class, want) in classes {
            let candidates: Vec<usize> = by_rnti
                .iter()
                .copied()
                .filter(|&i| {
                    let u = &ues[i];
                    u.slice == slice && want.is_none_or(|c| u.control == c) && u.bytes > 0 && u.bits_per_prb / 8 > 0
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let after = st.cursor.get(&(slice, class)).copied();
            let pick = candidates
                .iter()
                .copied()
                .find(|&i| after.is_none_or(|c| ues[i].rnti > c))
                .unwrap_or(candidates[0]);
            let u = &mut ues[pick];
            u.bytes = u.bytes.saturating_sub(u64::from(u.bits_per_prb / 8));
            st.cursor.insert((slice, class), u.rnti);
            return Some((u.rnti, u.bits_per_prb));
        }
        None
    };

    let mut grants = Vec::new();
    let mut free = Vec::new();
    let mut idx = 0u32;
    for &(id, q, _) in &quotas {
        for _ in 0..q {
            match serve(id, ues, st) {
                Some((r, b)) => grants.push((idx, id, r, b)),
                None => free.push(idx),
            }
            idx += 1;
        }
    }
    if lend_tail {
        free.extend(idx..prb);
    }
    for f in free {
        for &(id, _, _) in &quotas {
            if let Some((r, b)) = serve(id, ues, st) {
                grants.push((f, id, r, b));
                break;
            }
        }
    }
    grants.sort();
    RefOutcome {
        grants,
        quotas: quotas.iter().map(|&(id, q, _)| (id, q)).collect(),
    }
}

/// A random small instance: cell, slices and UEs in both representations.
#[derive(Debug, Clone)]
pub struct Instance {
    pub prb: u32,
    pub lend_tail: bool,
    pub slices: Vec<RefSlice>,
    pub ues: Vec<RefUe>,
    pub cqi: BTreeMap<u16, u8>,
}

impl Instance {
    pub fn random(rng: &mut impl Rng) -> Self {
        let prb = rng.random_range(1..=10);
        let n_slices = rng.random_range(1..=3);
        // Shares on a 0.05 grid so they sum to at most 1.
        let mut left = 20u32;
        let mut slices = Vec::new();
        for i in 0..n_slices {
            let units = rng.random_range(0..=left);
            left -= units;
            slices.push(RefSlice {
                id: i as u32 + 1,
                share: f64::from(units) * 0.05,
                priority: rng.random_range(0..3),
                high: rng.random_bool(0.5),
                control_first: rng.random_bool(0.3),
            });
        }
        let table = CqiTable::linear_default();
        let n_ues = rng.random_range(0..=4);
        let mut ues = Vec::new();
        let mut cqi = BTreeMap::new();
        let mut rntis: Vec<u16> = (1..=12).collect();
        for _ in 0..n_ues {
            let pos = rng.random_range(0..rntis.len());
            let rnti = rntis.remove(pos);
            let c: u8 = rng.random_range(0..=15);
            cqi.insert(rnti, c);
            ues.push(RefUe {
                rnti,
                slice: rng.random_range(1..=n_slices as u32),
                control: rng.random_bool(0.5),
                bytes: if rng.random_bool(0.3) { 0 } else { rng.random_range(1..400) },
                bits_per_prb: table.bits(c),
            });
        }
        Instance {
            prb,
            lend_tail: rng.random_bool(0.5),
            slices,
            ues,
            cqi,
        }
    }

    pub fn cell(&self) -> CellConfig {
        CellConfig::new(10e6, 15e3, Some(self.prb), 1e-3, CqiTable::linear_default()).unwrap()
    }

    pub fn scheduled(&self) -> Vec<ScheduledSlice> {
        self.slices
            .iter()
            .map(|s| ScheduledSlice {
                descriptor: SliceDescriptor {
                    slice_id: SliceId(s.id),
                    label: format!("s{}", s.id),
                    dl_share: s.share,
                    ul_share: s.share,
                    priority: s.priority,
                    rb_availability: if s.high { RbAvailability::High } else { RbAvailability::Low },
                },
                order: if s.control_first {
                    IntraSliceOrder::ControlFirst
                } else {
                    IntraSliceOrder::RoundRobin
                },
            })
            .collect()
    }

    pub fn contexts(&self) -> Vec<UeContext> {
        self.ues
            .iter()
            .map(|u| {
                let mut c = UeContext::new(Rnti(u.rnti), "001010000000001", Some(SliceId(u.slice)));
                c.cqi_dl = self.cqi[&u.rnti];
                c.cqi_ul = self.cqi[&u.rnti];
                c.control_priority_flag = u.control;
                c.dl_queue_bytes = u.bytes;
                c
            })
            .collect()
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs one instance for `ttis` TTIs (refilling queues between TTIs) through
/// both allocators; returns the first mismatch.
pub fn compare_instance(inst: &Instance, ttis: u64, rng: &mut impl Rng) -> Result<(), String> {
    use slicenet_core::radio::{Scheduler, UnallocatedPrbs};
    let cell = inst.cell();
    let scheduled = inst.scheduled();
    let mut sched = Scheduler::new(if inst.lend_tail {
        UnallocatedPrbs::Lend
    } else {
        UnallocatedPrbs::Reserve
    });
    let mut ctx = inst.contexts();
    let mut refs = inst.ues.clone();
    let mut st = RefState::default();
    for tti in 0..ttis {
        if tti > 0 {
            for (c, r) in ctx.iter_mut().zip(refs.iter_mut()) {
                let add = if rng.random_bool(0.5) { rng.random_range(0..200) } else { 0 };
                c.dl_queue_bytes += add;
                r.bytes += add;
            }
        }
        let got = sched.allocate_tti(&cell, &scheduled, &mut ctx, tti, Direction::Dl);
        let want = reference_tti(inst.prb, &inst.slices, &mut refs, inst.lend_tail, &mut st);
        let got_grants: Vec<(u32, u32, u16, u32)> = got
            .grants
            .iter()
            .map(|g| (g.prb_index, g.slice_id.0, g.rnti.0, g.bits_served))
            .collect();
        let got_quotas: BTreeMap<u32, u32> = got.quotas.iter().map(|q| (q.slice_id.0, q.quota)).collect();
        if got_grants != want.grants || got_quotas != want.quotas {
            return Err(format!(
                "tti {tti}: {inst:?}\n got grants {got_grants:?} quotas {got_quotas:?}\nwant grants {:?} quotas {:?}",
                want.grants, want.quotas
            ));
        }
        for (c, r) in ctx.iter().zip(refs.iter()) {
            if c.dl_queue_bytes != r.bytes {
                return Err(format!("tti {tti}: queue of rnti {} is {} want {}", r.rnti, c.dl_queue_bytes, r.bytes));
            }
        }
        for s in &inst.slices {
            let c = sched.deficits().carryover(SliceId(s.id), Direction::Dl);
            if (c - st.carry[&s.id]).abs() > 1e-12 {
                return Err(format!("tti {tti}: carryover of slice {} is {c} want {}", s.id, st.carry[&s.id]));
            }
        }
    }
    Ok(())
}

/// A stats report where each listed slice had the given downlink utilisation.
pub fn synthetic_report(start: f64, len: f64, util: &[(u32, f64)]) -> slicenet_core::StatsReport {
    use slicenet_core::control::{DirectionStats, SliceStats};
    let ttis = (len * 1000.0).round() as u64;
    slicenet_core::StatsReport {
        window_start: start,
        window_end: start + len,
        ues: Vec::new(),
        slices: util
            .iter()
            .map(|&(id, u)| {
                let quota = ttis * 10;
                let used = (u * quota as f64).round() as u64;
                SliceStats {
                    slice_id: SliceId(id),
                    dl: DirectionStats {
                        utilization: used as f64 / quota as f64,
                        prbs_used: used,
                        prbs_quota: quota,
                        prbs_granted: used,
                        share: 0.0,
                        ttis,
                    },
                    ul: DirectionStats::default(),
                }
            })
            .collect(),
    }
}

pub fn descriptor(id: u32, share: f64) -> SliceDescriptor {
    SliceDescriptor {
        slice_id: SliceId(id),
        label: format!("s{id}"),
        dl_share: share,
        ul_share: share,
        priority: 0,
        rb_availability: RbAvailability::Low,
    }
}
