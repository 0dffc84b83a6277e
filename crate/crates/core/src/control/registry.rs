use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{share_sum, Direction, Rnti, SliceDescriptor, SliceId, SHARE_EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("slice {0} already exists")]
    DuplicateSliceId(SliceId),
    #[error("unknown slice {0}")]
    UnknownSliceId(SliceId),
    #[error("{direction:?} shares would sum to {total:.4} (> 1)")]
    ShareSumExceeded { direction: Direction, total: f64 },
    #[error("slice {slice_id} still hosts UEs {ues:?}")]
    SliceNonEmpty { slice_id: SliceId, ues: Vec<Rnti> },
    #[error("unknown rnti {0}")]
    UnknownRnti(Rnti),
    #[error("invalid slice descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("slicing is disabled in baseline mode")]
    SlicingDisabled,
}

impl ControlError {
    pub fn code(&self) -> &'static str {
        match self {
            ControlError::DuplicateSliceId(_) => "DuplicateSliceId",
            ControlError::UnknownSliceId(_) => "UnknownSliceId",
            ControlError::ShareSumExceeded { .. } => "ShareSumExceeded",
            ControlError::SliceNonEmpty { .. } => "SliceNonEmpty",
            ControlError::UnknownRnti(_) => "UnknownRnti",
            ControlError::InvalidDescriptor(_) => "InvalidDescriptor",
            ControlError::SlicingDisabled => "SlicingDisabled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceCommand {
    Create { descriptor: SliceDescriptor },
    Update { descriptor: SliceDescriptor },
    Delete { slice_id: SliceId },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceRegistry {
    slices: BTreeMap<SliceId, SliceDescriptor>,
}

impl SliceRegistry {
    /// Builds a registry by creating each slice in turn.
    pub fn from_slices(slices: &[SliceDescriptor]) -> Result<Self, ControlError> {
        let mut reg = SliceRegistry::default();
        let none = BTreeMap::new();
        for s in slices {
            reg.apply(
                &SliceCommand::Create {
                    descriptor: s.clone(),
                },
                &none,
            )?;
        }
        Ok(reg)
    }

    pub fn get(&self, id: SliceId) -> Option<&SliceDescriptor> {
        self.slices.get(&id)
    }

    pub fn contains(&self, id: SliceId) -> bool {
        self.slices.contains_key(&id)
    }

    pub fn slices(&self) -> impl Iterator<Item = &SliceDescriptor> {
        self.slices.values()
    }

    pub fn to_vec(&self) -> Vec<SliceDescriptor> {
        self.slices.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Checks the whole slice set: per-slice fields and share sums.
    pub fn validate(&self) -> Result<(), ControlError> {
        for s in self.slices.values() {
            s.validate().map_err(ControlError::InvalidDescriptor)?;
        }
        for dir in Direction::BOTH {
            let total = share_sum(self.slices.values(), dir);
            if total > 1.0 + SHARE_EPSILON {
                return Err(ControlError::ShareSumExceeded { direction: dir, total });
            }
        }
        Ok(())
    }

    /// Applies a command against the full post-command slice set; on error
    /// the registry is left untouched.
    pub fn apply(
        &mut self,
        command: &SliceCommand,
        bindings: &BTreeMap<Rnti, Option<SliceId>>,
    ) -> Result<(), ControlError> {
        let mut next = self.slices.clone();
        match command {
            SliceCommand::Create { descriptor } => {
                if next.contains_key(&descriptor.slice_id) {
                    return Err(ControlError::DuplicateSliceId(descriptor.slice_id));
                }
                next.insert(descriptor.slice_id, descriptor.clone());
            }
            SliceCommand::Update { descriptor } => {
                if !next.contains_key(&descriptor.slice_id) {
                    return Err(ControlError::UnknownSliceId(descriptor.slice_id));
                }
                next.insert(descriptor.slice_id, descriptor.clone());
            }
            SliceCommand::Delete { slice_id } => {
                if !next.contains_key(slice_id) {
                    return Err(ControlError::UnknownSliceId(*slice_id));
                }
                let ues: Vec<Rnti> = bindings
                    .iter()
                    .filter(|(_, s)| **s == Some(*slice_id))
                    .map(|(r, _)| *r)
                    .collect();
                if !ues.is_empty() {
                    return Err(ControlError::SliceNonEmpty {
                        slice_id: *slice_id,
                        ues,
                    });
                }
                next.remove(slice_id);
            }
        }
        let candidate = SliceRegistry { slices: next };
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }
}
