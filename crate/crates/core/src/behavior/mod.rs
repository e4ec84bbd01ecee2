//! User behavior emulator: raw-data ingest, trajectory preprocessing, the
//! sequence VAE, post-processing onto the map, generation quality metrics,
//! traffic clustering and session generation, plus synthetic corpora.

pub mod cluster;
pub mod evaluate;
pub mod ingest;
pub mod population;
pub mod postprocess;
pub mod preprocess;
pub mod synth;
pub mod traffic;
pub mod vae;

use thiserror::Error;

use crate::scenario::{CellToken, Point, ScenarioError};
use netsim_neural::NeuralError;

pub use cluster::{cluster_app_actions, kmeans, silhouette, ActionCluster, AppActionClusters, AppClusters, KMeans};
pub use evaluate::{evaluate_generation, js_divergence, kl_divergence, random_walk, GenerationReport};
pub use ingest::{ingest_cell_load_csv, ingest_mobility_csv, ingest_packet_csv, Projection};
pub use population::{build_population, Population};
pub use postprocess::UserTrack;
pub use postprocess::{postprocess_trajectories, PostConfig};
pub use preprocess::{expand_to_fixes, preprocess, split_days};
pub use traffic::{build_preference_vectors, generate_traffic, PreferenceVector, ServiceSession, TrafficConfig};
pub use vae::{generate_trajectories, train_trajectory_vae, GenConfig, TrajectoryVae, VaeConfig};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {need} sequences, got {got}")]
    TooFewSequences { need: usize, got: usize },
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("preference vectors have {got} apps, clusters have {expected}")]
    MismatchedApps { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One geolocated measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityFix {
    pub user_id: u64,
    pub timestamp_s: f64,
    pub position: Point,
    pub altitude_m: Option<f64>,
}

/// One visit: a grid cell entered at `arrival_s` and occupied for `stay_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub token: CellToken,
    pub arrival_s: f64,
    /// Hour of day of the arrival, `0..24`.
    pub hour: u8,
    pub stay_s: f64,
}

pub fn hour_of_day(t_s: f64) -> u8 {
    ((t_s.rem_euclid(SECONDS_PER_DAY) / 3600.0).floor() as u8).min(23)
}

impl TrajectoryStep {
    pub fn new(token: CellToken, arrival_s: f64, stay_s: f64) -> Self {
        Self {
            token,
            arrival_s,
            hour: hour_of_day(arrival_s),
            stay_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySequence {
    pub user_id: u64,
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Ul,
    Dl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub user_id: u64,
    pub timestamp_s: f64,
    pub app_label: Option<String>,
    pub packet_len_bytes: u32,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLoadRecord {
    pub cell_id: u64,
    pub interval_start_s: f64,
    pub traffic_mb: f64,
    pub user_count: u32,
}
