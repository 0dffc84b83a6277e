//! Cell resource grid, slice/UE state and the two-level PRB scheduler.

mod cell;
pub mod scheduler;
mod slice;
pub mod transport;
mod ue;

use serde::{Deserialize, Serialize};

pub use cell::{derive_prb_count, CellConfig, CellError, CqiTable, CQI_LEVELS};
pub use scheduler::{
    slice_prb_quota, DeficitAccounts, Grant, IntraSliceOrder, ScheduledSlice, Scheduler,
    SliceQuota, TtiAllocation, UnallocatedPrbs,
};
pub use slice::{share_sum, RbAvailability, SliceDescriptor, SliceId, SHARED_POOL, SHARE_EPSILON};
pub use transport::{Delivered, LinkImpairment, Packet, Payload, Transport};
pub use ue::{valid_imsi, Rnti, UeContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Dl,
    Ul,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Dl, Direction::Ul];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Dl => "dl",
            Direction::Ul => "ul",
        }
    }
}
