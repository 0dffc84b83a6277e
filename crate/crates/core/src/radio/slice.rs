use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Direction;

/// Tolerance for share sums so that e.g. 0.05 + 0.95 is accepted as exactly 1.
pub const SHARE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceId(pub u32);

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Id used for the implicit shared pool when slicing is disabled.
pub const SHARED_POOL: SliceId = SliceId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RbAvailability {
    /// Settled first, wins remainder ties, never lends quota while backlogged.
    High,
    /// Settled after High slices; idle quota is lent to backlogged slices.
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDescriptor {
    pub slice_id: SliceId,
    pub label: String,
    pub dl_share: f64,
    pub ul_share: f64,
    pub priority: i32,
    pub rb_availability: RbAvailability,
}

impl SliceDescriptor {
    pub fn share(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Dl => self.dl_share,
            Direction::Ul => self.ul_share,
        }
    }

    /// Field-level checks that do not depend on other slices.
    pub fn validate(&self) -> Result<(), String> {
        if self.slice_id == SHARED_POOL {
            return Err("slice_id 0 is reserved for the shared pool".into());
        }
        if self.label.trim().is_empty() {
            return Err("label must not be empty".into());
        }
        if self.label.len() > 64 {
            return Err("label longer than 64 bytes".into());
        }
        for (name, share) in [("dl_share", self.dl_share), ("ul_share", self.ul_share)] {
            if !(0.0..=1.0).contains(&share) {
                return Err(format!("{name} must lie in [0, 1], got {share}"));
            }
        }
        Ok(())
    }

    /// Settlement order: High availability first, then descending priority,
    /// then ascending id.
    pub fn settlement_cmp(&self, other: &SliceDescriptor) -> Ordering {
        let rank = |a: RbAvailability| match a {
            RbAvailability::High => 0,
            RbAvailability::Low => 1,
        };
        rank(self.rb_availability)
            .cmp(&rank(other.rb_availability))
            .then(other.priority.cmp(&self.priority))
            .then(self.slice_id.cmp(&other.slice_id))
    }
}

/// Sum of shares in one direction.
pub fn share_sum<'a>(slices: impl IntoIterator<Item = &'a SliceDescriptor>, dir: Direction) -> f64 {
    slices.into_iter().map(|s| s.share(dir)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(id: u32, avail: RbAvailability, priority: i32) -> SliceDescriptor {
        SliceDescriptor {
            slice_id: SliceId(id),
            label: format!("s{id}"),
            dl_share: 0.1,
            ul_share: 0.1,
            priority,
            rb_availability: avail,
        }
    }

    #[test]
    fn settlement_order() {
        let mut v = [
            slice(3, RbAvailability::Low, 9),
            slice(2, RbAvailability::High, 1),
            slice(1, RbAvailability::Low, 9),
            slice(4, RbAvailability::High, 5),
        ];
        v.sort_by(|a, b| a.settlement_cmp(b));
        let ids: Vec<u32> = v.iter().map(|s| s.slice_id.0).collect();
        assert_eq!(ids, vec![4, 2, 1, 3]);
    }

    #[test]
    fn descriptor_json_shape() {
        let s = SliceDescriptor {
            slice_id: SliceId(1),
            label: "control".into(),
            dl_share: 0.05,
            ul_share: 0.05,
            priority: 10,
            rb_availability: RbAvailability::High,
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"slice_id":1,"label":"control","dl_share":0.05,"ul_share":0.05,"priority":10,"rb_availability":"high"}"#
        );
    }

    #[test]
    fn rejects_out_of_range_share() {
        let mut s = slice(1, RbAvailability::High, 0);
        s.ul_share = 1.5;
        assert!(s.validate().is_err());
        s.ul_share = 0.5;
        s.label = " ".into();
        assert!(s.validate().is_err());
    }
}
