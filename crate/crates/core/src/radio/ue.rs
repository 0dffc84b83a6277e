use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Direction, SliceId, SHARED_POOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rnti(pub u16);

impl fmt::Display for Rnti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeContext {
    pub rnti: Rnti,
    pub imsi: String,
    /// `None` when the cell runs without slices.
    pub slice_id: Option<SliceId>,
    pub cqi_dl: u8,
    pub cqi_ul: u8,
    pub dl_queue_bytes: u64,
    pub ul_queue_bytes: u64,
    pub control_priority_flag: bool,
}

impl UeContext {
    pub fn new(rnti: Rnti, imsi: impl Into<String>, slice_id: Option<SliceId>) -> Self {
        UeContext {
            rnti,
            imsi: imsi.into(),
            slice_id,
            cqi_dl: 15,
            cqi_ul: 15,
            dl_queue_bytes: 0,
            ul_queue_bytes: 0,
            control_priority_flag: false,
        }
    }

    pub fn cqi(&self, dir: Direction) -> u8 {
        match dir {
            Direction::Dl => self.cqi_dl,
            Direction::Ul => self.cqi_ul,
        }
    }

    pub fn queue_bytes(&self, dir: Direction) -> u64 {
        match dir {
            Direction::Dl => self.dl_queue_bytes,
            Direction::Ul => self.ul_queue_bytes,
        }
    }

    pub fn queue_bytes_mut(&mut self, dir: Direction) -> &mut u64 {
        match dir {
            Direction::Dl => &mut self.dl_queue_bytes,
            Direction::Ul => &mut self.ul_queue_bytes,
        }
    }

    /// Slice the scheduler serves this UE from.
    pub fn scheduling_slice(&self) -> SliceId {
        self.slice_id.unwrap_or(SHARED_POOL)
    }
}

/// IMSIs are 6 to 15 decimal digits.
pub fn valid_imsi(imsi: &str) -> bool {
    (6..=15).contains(&imsi.len()) && imsi.bytes().all(|b| b.is_ascii_digit())
}
