use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub const CQI_LEVELS: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("bandwidth and subcarrier spacing must be positive (got {bandwidth_hz} Hz, {subcarrier_spacing_hz} Hz)")]
    NonPositiveInput {
        bandwidth_hz: f64,
        subcarrier_spacing_hz: f64,
    },
    #[error("{bandwidth_hz} Hz at {subcarrier_spacing_hz} Hz spacing does not fit a single resource block")]
    NoResourceBlocks {
        bandwidth_hz: f64,
        subcarrier_spacing_hz: f64,
    },
    #[error("explicit prb_count must be at least 1")]
    ZeroPrbs,
    #[error("tti duration must be positive")]
    NonPositiveTti,
    #[error("CQI table must have {CQI_LEVELS} entries, got {0}")]
    CqiTableLength(usize),
    #[error("CQI table must be non-decreasing (index {0})")]
    CqiTableNotMonotonic(usize),
    #[error("unknown cell preset {0:?}")]
    UnknownPreset(String),
}

/// Number of 12-subcarrier resource blocks that fit in 90% of the channel.
pub fn derive_prb_count(bandwidth_hz: f64, subcarrier_spacing_hz: f64) -> Result<u32, CellError> {
    if !(bandwidth_hz > 0.0) || !(subcarrier_spacing_hz > 0.0) {
        return Err(CellError::NonPositiveInput {
            bandwidth_hz,
            subcarrier_spacing_hz,
        });
    }
    // Tolerate representation error so exact fits (e.g. 200 kHz / 15 kHz) are not lost.
    let prbs = (0.9 * bandwidth_hz / (12.0 * subcarrier_spacing_hz) + 1e-9).floor();
    if prbs < 1.0 {
        return Err(CellError::NoResourceBlocks {
            bandwidth_hz,
            subcarrier_spacing_hz,
        });
    }
    Ok(prbs as u32)
}

/// Bits carried by one PRB in one TTI, indexed by CQI 1..=15.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CqiTable(Vec<u32>);

impl CqiTable {
    pub fn new(bits: Vec<u32>) -> Result<Self, CellError> {
        if bits.len() != CQI_LEVELS {
            return Err(CellError::CqiTableLength(bits.len()));
        }
        if let Some(i) = bits.windows(2).position(|w| w[1] < w[0]) {
            return Err(CellError::CqiTableNotMonotonic(i + 1));
        }
        Ok(CqiTable(bits))
    }

    /// CQI 15 carries 600 bits, falling linearly to 40 bits at CQI 1.
    pub fn linear_default() -> Self {
        CqiTable((1..=CQI_LEVELS as u32).map(|cqi| 40 * cqi).collect())
    }

    /// Out-of-range indices clamp to the nearest valid CQI.
    pub fn bits(&self, cqi: u8) -> u32 {
        let idx = (cqi.clamp(1, CQI_LEVELS as u8) - 1) as usize;
        self.0[idx]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl Default for CqiTable {
    fn default() -> Self {
        CqiTable::linear_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub prb_count: u32,
    pub tti_duration_s: f64,
    pub cqi_table: CqiTable,
}

impl CellConfig {
    /// Builds a cell, deriving the PRB count unless an explicit override is given.
    pub fn new(
        bandwidth_hz: f64,
        subcarrier_spacing_hz: f64,
        prb_override: Option<u32>,
        tti_duration_s: f64,
        cqi_table: CqiTable,
    ) -> Result<Self, CellError> {
        let prb_count = match prb_override {
            Some(0) => return Err(CellError::ZeroPrbs),
            Some(n) => n,
            None => derive_prb_count(bandwidth_hz, subcarrier_spacing_hz)?,
        };
        if !(tti_duration_s > 0.0) {
            return Err(CellError::NonPositiveTti);
        }
        Ok(CellConfig {
            bandwidth_hz,
            subcarrier_spacing_hz,
            prb_count,
            tti_duration_s,
            cqi_table,
        })
    }

    /// `lte10`: 10 MHz at 15 kHz. `nr80`: 80 MHz at 30 kHz. Both use a 1 ms TTI.
    pub fn preset(name: &str) -> Result<Self, CellError> {
        match name {
            "lte10" => CellConfig::new(10e6, 15e3, None, 1e-3, CqiTable::default()),
            "nr80" => CellConfig::new(80e6, 30e3, None, 1e-3, CqiTable::default()),
            other => Err(CellError::UnknownPreset(other.to_string())),
        }
    }

    pub fn tti(&self) -> SimTime {
        SimTime::from_secs_f64(self.tti_duration_s)
    }

    pub fn bits_per_prb(&self, cqi: u8) -> u32 {
        self.cqi_table.bits(cqi)
    }
}
