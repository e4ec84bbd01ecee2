//! Antenna optimization as an episodic environment, with hill-climbing and
//! cross-entropy baselines.
//!
//! Every evaluation simulates the same window of ticks against one shared
//! world, so two configurations are compared under identical trajectories,
//! sessions, shadowing and fading.

mod env;
mod search;

pub use env::{Env, EnvConfig, EnvInfo, EnvTransition, Evaluation};
pub use search::{cross_entropy, hill_climb, write_progress_csv, CemConfig, ProgressRow, SearchResult, PROGRESS_CSV_HEADER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::KpiRow;
use crate::orchestrator::SimError;
use crate::scenario::{BeamConfig, RewardWeights, ScenarioError, AZIMUTH_OFFSET_RANGE, H_BEAMWIDTHS, TILT_RANGE, V_BEAMWIDTHS};

/// Largest azimuth or tilt change one action may request, degrees.
pub const MAX_DELTA_DEG: i32 = 2;

/// Per-metric reward scales: coverage pct-pt, RSRP dB, SINR dB, DL and UL
/// in units of 10 Mbps.
pub const REWARD_SCALES: [f64; 5] = [1.0, 1.0, 1.0, 10.0, 10.0];

/// Stand-ins for averages that are undefined because nobody is attached.
pub const RSRP_FLOOR_DBM: f64 = -140.0;
pub const SINR_FLOOR_DB: f64 = -10.0;

/// Min-max ranges for the KPI part of the state.
pub const STATE_RSRP_RANGE: (f64, f64) = (-140.0, -40.0);
pub const STATE_SINR_RANGE: (f64, f64) = (-10.0, 30.0);
pub const STATE_DL_MAX_MBPS: f64 = 1000.0;
pub const STATE_UL_MAX_MBPS: f64 = 100.0;

/// Side of the user-density histogram.
pub const DENSITY_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is done")]
    EpisodeDone,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid optimizer parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Requested change to one beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamAction {
    /// Index into the horizontal beamwidth choices.
    pub h_index: usize,
    /// Index into the vertical beamwidth choices.
    pub v_index: usize,
    pub azimuth_delta: i32,
    pub tilt_delta: i32,
    pub active: bool,
}

/// One action entry per beam, in scenario beam order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub beams: Vec<BeamAction>,
}

impl ActionSpec {
    /// The action that leaves `configs` unchanged.
    pub fn noop(configs: &[BeamConfig]) -> Self {
        Self {
            beams: configs
                .iter()
                .map(|b| BeamAction {
                    h_index: b.h_index().unwrap_or(0),
                    v_index: b.v_index().unwrap_or(0),
                    azimuth_delta: 0,
                    tilt_delta: 0,
                    active: b.active,
                })
                .collect(),
        }
    }

    pub fn validate(&self, n_beams: usize) -> Result<(), OptError> {
        if self.beams.len() != n_beams {
            return Err(OptError::InvalidAction(format!("{} beam actions for {n_beams} beams", self.beams.len())));
        }
        for (i, a) in self.beams.iter().enumerate() {
            if a.h_index >= H_BEAMWIDTHS.len() {
                return Err(OptError::InvalidAction(format!("beams[{i}].h_index {} out of range", a.h_index)));
            }
            if a.v_index >= V_BEAMWIDTHS.len() {
                return Err(OptError::InvalidAction(format!("beams[{i}].v_index {} out of range", a.v_index)));
            }
            for (name, d) in [("azimuth_delta", a.azimuth_delta), ("tilt_delta", a.tilt_delta)] {
                if d.abs() > MAX_DELTA_DEG {
                    return Err(OptError::InvalidAction(format!("beams[{i}].{name} {d} outside ±{MAX_DELTA_DEG}")));
                }
            }
        }
        Ok(())
    }
}

/// A delta that hit a parameter bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clamp {
    pub beam: usize,
    pub field: ClampField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampField {
    Azimuth,
    Tilt,
}

/// Concrete beam configurations for an action, plus the clamps applied.
pub fn apply_action(configs: &[BeamConfig], action: &ActionSpec) -> Result<(Vec<BeamConfig>, Vec<Clamp>), OptError> {
    action.validate(configs.len())?;
    let mut clamps = Vec::new();
    let out = configs
        .iter()
        .zip(&action.beams)
        .enumerate()
        .map(|(i, (b, a))| {
            let mut n = b.clone();
            n.h_beamwidth_deg = H_BEAMWIDTHS[a.h_index];
            n.v_beamwidth_deg = V_BEAMWIDTHS[a.v_index];
            n.active = a.active;
            let az = b.azimuth_offset_deg + a.azimuth_delta as f64;
            n.azimuth_offset_deg = az.clamp(AZIMUTH_OFFSET_RANGE.0, AZIMUTH_OFFSET_RANGE.1);
            if n.azimuth_offset_deg != az {
                clamps.push(Clamp {
                    beam: i,
                    field: ClampField::Azimuth,
                });
            }
            let tilt = b.tilt_deg + a.tilt_delta as f64;
            n.tilt_deg = tilt.clamp(TILT_RANGE.0, TILT_RANGE.1);
            if n.tilt_deg != tilt {
                clamps.push(Clamp {
                    beam: i,
                    field: ClampField::Tilt,
                });
            }
            n
        })
        .collect();
    Ok((out, clamps))
}

/// `[coverage, rsrp, sinr, dl, ul]` with undefined averages floored.
pub fn metric_vector(k: &KpiRow) -> [f64; 5] {
    [
        k.coverage_pct,
        k.avg_rsrp_dbm.unwrap_or(RSRP_FLOOR_DBM),
        k.avg_sinr_db.unwrap_or(SINR_FLOOR_DB),
        k.dl_mbps,
        k.ul_mbps,
    ]
}

/// Weighted, scaled improvement of `kpis` over `baseline`.
pub fn compute_reward(kpis: &KpiRow, baseline: &KpiRow, weights: &RewardWeights) -> f64 {
    let (m, b, w) = (metric_vector(kpis), metric_vector(baseline), weights.as_array());
    (0..5).map(|i| w[i] * (m[i] - b[i]) / REWARD_SCALES[i]).sum()
}

fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Five entries per beam, all in [0, 1].
pub fn beam_features(b: &BeamConfig) -> [f64; 5] {
    [
        b.h_index().unwrap_or(0) as f64 / (H_BEAMWIDTHS.len() - 1) as f64,
        b.v_index().unwrap_or(0) as f64 / (V_BEAMWIDTHS.len() - 1) as f64,
        unit(b.azimuth_offset_deg, AZIMUTH_OFFSET_RANGE.0, AZIMUTH_OFFSET_RANGE.1),
        unit(b.tilt_deg, TILT_RANGE.0, TILT_RANGE.1),
        if b.active { 1.0 } else { 0.0 },
    ]
}

/// KPI entries of the state, all in [0, 1].
pub fn kpi_features(k: &KpiRow) -> [f64; 5] {
    let m = metric_vector(k);
    [
        unit(m[0], 0.0, 100.0),
        unit(m[1], STATE_RSRP_RANGE.0, STATE_RSRP_RANGE.1),
        unit(m[2], STATE_SINR_RANGE.0, STATE_SINR_RANGE.1),
        unit(m[3], 0.0, STATE_DL_MAX_MBPS),
        unit(m[4], 0.0, STATE_UL_MAX_MBPS),
    ]
}

/// Length of the state vector for `n_beams` beams.
pub fn state_len(n_beams: usize) -> usize {
    5 * n_beams + DENSITY_BINS * DENSITY_BINS + 5
}
