//! Slotted random-access channel.
//!
//! Preamble indices `0..p_c` form the contention pool and `p_c..p` the
//! contention-free pool. Contention-free preambles are reallocated in
//! ascending order, so a device that has reallocated `beta` of them draws
//! uniformly from `0..p_c + beta`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::analytics::{self, PreambleSplit};
use crate::error::Result;

/// Periodic contention-free schedule handed out by the base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    t_min: u64,
    /// Slot offset of each device within the period.
    offset: Vec<u32>,
    /// Position of each device's preamble in the contention-free pool.
    slot_preamble: Vec<u32>,
    /// Members of each offset group.
    groups: Vec<Vec<u32>>,
}

impl Schedule {
    pub fn t_min(&self) -> u64 {
        self.t_min
    }

    pub fn offset(&self, device: usize) -> u32 {
        self.offset[device]
    }

    /// Index of the device's preamble within the contention-free pool.
    pub fn free_index(&self, device: usize) -> u32 {
        self.slot_preamble[device]
    }

    pub fn group(&self, offset: u64) -> &[u32] {
        &self.groups[offset as usize]
    }

    /// Devices whose scheduled slot is `slot`.
    pub fn due(&self, slot: u64) -> &[u32] {
        self.group(slot % self.t_min)
    }

    pub fn is_due(&self, device: usize, slot: u64) -> bool {
        slot % self.t_min == self.offset[device] as u64
    }

    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }
}

/// Splits `n` devices into `T_min` groups of at most `p_f` after a uniform
/// shuffle, giving each member of a group a distinct contention-free preamble.
pub fn build_schedule<R: Rng + ?Sized>(n: usize, p_f: u32, rng: &mut R) -> Result<Schedule> {
    let t_min = analytics::min_period(n.max(1) as u64, p_f)?;
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let mut offset = vec![0u32; n];
    let mut slot_preamble = vec![0u32; n];
    let mut groups = vec![Vec::new(); t_min as usize];
    for (rank, &dev) in order.iter().enumerate() {
        let g = rank / p_f as usize;
        offset[dev as usize] = g as u32;
        slot_preamble[dev as usize] = (rank % p_f as usize) as u32;
        groups[g].push(dev);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    Ok(Schedule {
        t_min,
        offset,
        slot_preamble,
        groups,
    })
}

/// How a device currently uses the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelRole {
    /// Holds an unsent critical message.
    pub critical: bool,
    /// Contention-free preambles this device believes are reallocated.
    pub beta: u32,
}

/// Channel configuration shared by every device in a run.
#[derive(Debug, Clone)]
pub struct RachState {
    pub split: PreambleSplit,
    pub schedule: Schedule,
}

impl RachState {
    /// Global index of the device's own contention-free preamble.
    pub fn assigned_preamble(&self, device: usize) -> u32 {
        self.split.p_c() + self.schedule.free_index(device)
    }

    /// The preamble the device transmits on in `slot`, if any.
    pub fn device_intent<R: Rng + ?Sized>(
        &self,
        device: usize,
        role: ChannelRole,
        slot: u64,
        rng: &mut R,
    ) -> Option<u32> {
        let due = self.schedule.is_due(device, slot);
        let beta = role.beta.min(self.split.p_f());
        if role.critical {
            if due {
                return Some(self.assigned_preamble(device));
            }
            return Some(rng.random_range(0..self.split.p_c() + beta));
        }
        (due && self.schedule.free_index(device) >= beta).then(|| self.assigned_preamble(device))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotOutcome {
    /// `(device, preamble)` pairs that were alone on their preamble.
    pub successes: Vec<(u32, u32)>,
    /// Preambles with two or more users.
    pub collisions: Vec<u32>,
    /// Intents lost to collisions.
    pub collided_intents: usize,
}

/// A preamble succeeds iff exactly one device used it.
pub fn resolve_slot(intents: &[(u32, u32)]) -> SlotOutcome {
    let mut by_preamble: Vec<(u32, u32)> = intents.iter().map(|&(d, p)| (p, d)).collect();
    by_preamble.sort_unstable();
    let mut out = SlotOutcome::default();
    let mut i = 0;
    while i < by_preamble.len() {
        let p = by_preamble[i].0;
        let n = by_preamble[i..].iter().take_while(|x| x.0 == p).count();
        if n == 1 {
            out.successes.push((by_preamble[i].1, p));
        } else {
            out.collisions.push(p);
            out.collided_intents += n;
        }
        i += n;
    }
    out.successes.sort_unstable();
    out
}
