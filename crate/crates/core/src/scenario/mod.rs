//! World model: grid, terrain, roads, sites and beams, simulation constants.
//!
//! A [`Scenario`] is immutable once loaded and validated. Distances are in
//! meters on a local plane, powers in dBm, angles in degrees and carrier
//! frequencies in GHz.

mod config;
mod geometry;

pub use config::{parse_scenario, parse_scenario_str, BeamOverride, OverrideFile};
pub use geometry::{cell_center, cell_index, los_check};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type SiteId = u32;
pub type BeamId = u32;

/// Allowed horizontal beamwidths in degrees.
pub const H_BEAMWIDTHS: [f64; 6] = [15.0, 30.0, 45.0, 65.0, 90.0, 110.0];
/// Allowed vertical beamwidths in degrees.
pub const V_BEAMWIDTHS: [f64; 3] = [6.0, 12.0, 25.0];
pub const AZIMUTH_OFFSET_RANGE: (f64, f64) = (-60.0, 60.0);
pub const TILT_RANGE: (f64, f64) = (-2.0, 15.0);

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("{field} = {value} is out of range (allowed: {bounds})")]
    OutOfRange { field: String, value: f64, bounds: String },
    #[error("malformed syntax at line {line}: {msg}")]
    MalformedSyntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("point ({x}, {y}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn out_of_range(field: impl Into<String>, value: f64, bounds: impl Into<String>) -> ScenarioError {
    ScenarioError::OutOfRange {
        field: field.into(),
        value,
        bounds: bounds.into(),
    }
}

fn check_range(field: &str, v: f64, lo: f64, hi: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(out_of_range(field, v, format!("[{lo}, {hi}]")))
    }
}

/// Planar point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Row-major grid cell index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellToken(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoGrid {
    /// Lower-left corner.
    pub origin: Point,
    pub width_m: f64,
    pub height_m: f64,
    pub resolution_m: f64,
    /// Per-cell elevation, row-major; absent means flat ground at 0 m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain_height: Option<Vec<f64>>,
    /// Geographic reference of the grid center, used to project lat/lon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_lon: Option<f64>,
}

impl GeoGrid {
    pub fn flat(origin: Point, width_m: f64, height_m: f64, resolution_m: f64) -> Self {
        Self {
            origin,
            width_m,
            height_m,
            resolution_m,
            terrain_height: None,
            ref_lat: None,
            ref_lon: None,
        }
    }

    pub fn cols(&self) -> usize {
        (self.width_m / self.resolution_m).ceil() as usize
    }

    pub fn rows(&self) -> usize {
        (self.height_m / self.resolution_m).ceil() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn center(&self) -> Point {
        Point::new(self.origin.x + self.width_m / 2.0, self.origin.y + self.height_m / 2.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.origin.x && p.y >= self.origin.y && p.x <= self.origin.x + self.width_m && p.y <= self.origin.y + self.height_m
    }

    /// Clamps a point into the grid rectangle.
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.origin.x, self.origin.x + self.width_m),
            p.y.clamp(self.origin.y, self.origin.y + self.height_m),
        )
    }

    pub fn is_valid_token(&self, t: CellToken) -> bool {
        t.0 < self.cell_count()
    }

    /// Ground elevation of the cell containing `p` (0 outside terrain data).
    pub fn terrain_at(&self, p: Point) -> f64 {
        match &self.terrain_height {
            None => 0.0,
            Some(h) => cell_index(self, self.clamp(p)).map(|t| h[t.0]).unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.resolution_m > 0.0 && self.resolution_m.is_finite()) {
            return Err(out_of_range("grid.resolution_m", self.resolution_m, "> 0"));
        }
        if !(self.width_m >= self.resolution_m && self.width_m.is_finite()) {
            return Err(out_of_range("grid.width_m", self.width_m, ">= resolution_m"));
        }
        if !(self.height_m >= self.resolution_m && self.height_m.is_finite()) {
            return Err(out_of_range("grid.height_m", self.height_m, ">= resolution_m"));
        }
        if let Some(h) = &self.terrain_height {
            if h.len() != self.cell_count() {
                return Err(ScenarioError::Invalid(format!(
                    "grid.terrain_height has {} values, grid has {} cells",
                    h.len(),
                    self.cell_count()
                )));
            }
            if let Some(v) = h.iter().find(|v| !v.is_finite()) {
                return Err(out_of_range("grid.terrain_height", *v, "finite"));
            }
        }
        if let Some(lat) = self.ref_lat {
            check_range("grid.ref_lat", lat, -90.0, 90.0)?;
        }
        if let Some(lon) = self.ref_lon {
            check_range("grid.ref_lon", lon, -180.0, 180.0)?;
        }
        Ok(())
    }
}

/// Undirected road network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RoadGraph {
    pub nodes: Vec<Point>,
    /// `(a, b, length_m)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl RoadGraph {
    /// Builds a graph with Euclidean edge lengths.
    pub fn from_edges(nodes: Vec<Point>, pairs: &[(usize, usize)]) -> Self {
        let edges = pairs.iter().map(|&(a, b)| (a, b, nodes[a].dist(nodes[b]))).collect();
        Self { nodes, edges }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (i, &(a, b, len)) in self.edges.iter().enumerate() {
            if a >= self.nodes.len() || b >= self.nodes.len() {
                return Err(ScenarioError::Invalid(format!("roads.edges[{i}] references a missing node")));
            }
            let d = self.nodes[a].dist(self.nodes[b]);
            if (d - len).abs() > 1e-6 {
                return Err(out_of_range(format!("roads.edges[{i}].length"), len, format!("{d} +/- 1e-6")));
            }
        }
        Ok(())
    }
}

/// One steerable sub-beam of a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_id: BeamId,
    pub h_beamwidth_deg: f64,
    pub v_beamwidth_deg: f64,
    #[serde(default)]
    pub azimuth_offset_deg: f64,
    #[serde(default)]
    pub tilt_deg: f64,
    #[serde(default = "default_true")]
    pub active: bool,
    #[serde(default = "default_g_max")]
    pub g_max_dbi: f64,
}

fn default_true() -> bool {
    true
}

fn default_g_max() -> f64 {
    17.0
}

impl BeamConfig {
    pub fn new(beam_id: BeamId, h_beamwidth_deg: f64, v_beamwidth_deg: f64) -> Self {
        Self {
            beam_id,
            h_beamwidth_deg,
            v_beamwidth_deg,
            azimuth_offset_deg: 0.0,
            tilt_deg: 0.0,
            active: true,
            g_max_dbi: default_g_max(),
        }
    }

    pub fn h_index(&self) -> Option<usize> {
        H_BEAMWIDTHS.iter().position(|&w| w == self.h_beamwidth_deg)
    }

    pub fn v_index(&self) -> Option<usize> {
        V_BEAMWIDTHS.iter().position(|&w| w == self.v_beamwidth_deg)
    }

    pub fn validate(&self, ctx: &str) -> Result<(), ScenarioError> {
        if self.h_index().is_none() {
            return Err(out_of_range(
                format!("{ctx}.h_beamwidth_deg"),
                self.h_beamwidth_deg,
                format!("{H_BEAMWIDTHS:?}"),
            ));
        }
        if self.v_index().is_none() {
            return Err(out_of_range(
                format!("{ctx}.v_beamwidth_deg"),
                self.v_beamwidth_deg,
                format!("{V_BEAMWIDTHS:?}"),
            ));
        }
        check_range(
            &format!("{ctx}.azimuth_offset_deg"),
            self.azimuth_offset_deg,
            AZIMUTH_OFFSET_RANGE.0,
            AZIMUTH_OFFSET_RANGE.1,
        )?;
        check_range(&format!("{ctx}.tilt_deg"), self.tilt_deg, TILT_RANGE.0, TILT_RANGE.1)?;
        check_range(&format!("{ctx}.g_max_dbi"), self.g_max_dbi, -10.0, 40.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub site_id: SiteId,
    pub position: Point,
    pub antenna_height_m: f64,
    pub mechanical_azimuth_deg: f64,
    pub mechanical_downtilt_deg: f64,
    pub tx_power_dbm: f64,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub n_prb: u32,
    #[serde(rename = "beam")]
    pub beams: Vec<BeamConfig>,
}

impl Site {
    pub fn beam(&self, id: BeamId) -> Option<&BeamConfig> {
        self.beams.iter().find(|b| b.beam_id == id)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ctx = format!("site[{}]", self.site_id);
        check_range(&format!("{ctx}.antenna_height_m"), self.antenna_height_m, 0.0, 500.0)?;
        let az = self.mechanical_azimuth_deg;
        if !(az.is_finite() && (0.0..360.0).contains(&az)) {
            return Err(out_of_range(format!("{ctx}.mechanical_azimuth_deg"), az, "[0, 360)"));
        }
        check_range(&format!("{ctx}.mechanical_downtilt_deg"), self.mechanical_downtilt_deg, -10.0, 30.0)?;
        check_range(&format!("{ctx}.tx_power_dbm"), self.tx_power_dbm, 0.0, 60.0)?;
        check_range(&format!("{ctx}.carrier_ghz"), self.carrier_ghz, 0.1, 100.0)?;
        check_range(&format!("{ctx}.bandwidth_mhz"), self.bandwidth_mhz, 0.1, 2000.0)?;
        if self.n_prb == 0 {
            return Err(out_of_range(format!("{ctx}.n_prb"), 0.0, "> 0"));
        }
        if self.beams.is_empty() {
            return Err(ScenarioError::Invalid(format!("{ctx} has no beams")));
        }
        for (i, b) in self.beams.iter().enumerate() {
            b.validate(&format!("{ctx}.beam[{}]", b.beam_id))?;
            if self.beams[..i].iter().any(|o| o.beam_id == b.beam_id) {
                return Err(ScenarioError::Invalid(format!("{ctx} repeats beam_id {}", b.beam_id)));
            }
        }
        Ok(())
    }
}

/// Scheduler used by the base-station emulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Pf,
    Rr,
}

/// Simulation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConstants {
    pub noise_figure_db: f64,
    pub kpi_tick_s: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub decorrelation_m: f64,
    pub coverage_rsrp_threshold_dbm: f64,
    pub coverage_sinr_threshold_db: f64,
    pub max_se_bps_hz: f64,
    pub ue_tx_power_dbm: f64,
    pub ue_height_m: f64,
    /// Rician K-factor for LOS links in dB; `inf` gives a pure LOS tap.
    pub rician_k_db: f64,
    pub scheduler: SchedulerKind,
    pub pf_alpha: f64,
    pub overhead: f64,
}

impl Default for SimConstants {
    fn default() -> Self {
        Self {
            noise_figure_db: 9.0,
            kpi_tick_s: 1.0,
            shadow_sigma_los_db: 4.0,
            shadow_sigma_nlos_db: 6.0,
            decorrelation_m: 50.0,
            coverage_rsrp_threshold_dbm: -105.0,
            coverage_sinr_threshold_db: -3.0,
            max_se_bps_hz: 7.8,
            ue_tx_power_dbm: 23.0,
            ue_height_m: 1.5,
            rician_k_db: 10.0,
            scheduler: SchedulerKind::Pf,
            pf_alpha: 0.1,
            overhead: 0.14,
        }
    }
}

impl SimConstants {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_range("sim.noise_figure_db", self.noise_figure_db, 0.0, 30.0)?;
        check_range("sim.kpi_tick_s", self.kpi_tick_s, 1e-3, 3600.0)?;
        check_range("sim.shadow_sigma_los_db", self.shadow_sigma_los_db, 0.0, 20.0)?;
        check_range("sim.shadow_sigma_nlos_db", self.shadow_sigma_nlos_db, 0.0, 20.0)?;
        check_range("sim.decorrelation_m", self.decorrelation_m, 1e-3, 1e5)?;
        check_range("sim.coverage_rsrp_threshold_dbm", self.coverage_rsrp_threshold_dbm, -180.0, 0.0)?;
        check_range("sim.coverage_sinr_threshold_db", self.coverage_sinr_threshold_db, -50.0, 50.0)?;
        check_range("sim.max_se_bps_hz", self.max_se_bps_hz, 0.1, 30.0)?;
        check_range("sim.ue_tx_power_dbm", self.ue_tx_power_dbm, -40.0, 40.0)?;
        check_range("sim.ue_height_m", self.ue_height_m, 0.0, 300.0)?;
        if !(self.rician_k_db == f64::INFINITY || (-30.0..=60.0).contains(&self.rician_k_db)) {
            return Err(out_of_range("sim.rician_k_db", self.rician_k_db, "[-30, 60] or inf"));
        }
        check_range("sim.pf_alpha", self.pf_alpha, 1e-6, 1.0)?;
        check_range("sim.overhead", self.overhead, 0.0, 0.99)?;
        Ok(())
    }
}

/// Multi-objective reward weights, normalized to sum to one at load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub coverage: f64,
    pub rsrp: f64,
    pub sinr: f64,
    pub dl: f64,
    pub ul: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            coverage: 0.2,
            rsrp: 0.2,
            sinr: 0.2,
            dl: 0.2,
            ul: 0.2,
        }
    }
}

impl RewardWeights {
    pub const COVERAGE: RewardWeights = RewardWeights {
        coverage: 1.0,
        rsrp: 0.0,
        sinr: 0.0,
        dl: 0.0,
        ul: 0.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.coverage, self.rsrp, self.sinr, self.dl, self.ul]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            coverage: a[0],
            rsrp: a[1],
            sinr: a[2],
            dl: a[3],
            ul: a[4],
        }
    }

    /// Validates and rescales so the weights sum to one.
    pub fn normalized(&self) -> Result<Self, ScenarioError> {
        let a = self.as_array();
        let names = ["coverage", "rsrp", "sinr", "dl", "ul"];
        for (n, v) in names.iter().zip(a) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(out_of_range(format!("reward.{n}"), v, ">= 0"));
            }
        }
        let s: f64 = a.iter().sum();
        if s <= 0.0 {
            return Err(ScenarioError::Invalid("reward weights are all zero".into()));
        }
        Ok(Self::from_array(a.map(|v| v / s)))
    }
}

/// How simulated users move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MobilityKind {
    Static,
    #[default]
    Walk,
    Commute,
}

/// Circular area that attracts users: `[x, y, radius_m, weight]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Hotspot {
    pub center: Point,
    pub radius_m: f64,
    pub weight: f64,
}

impl From<[f64; 4]> for Hotspot {
    fn from(a: [f64; 4]) -> Self {
        Self {
            center: Point::new(a[0], a[1]),
            radius_m: a[2],
            weight: a[3],
        }
    }
}

impl From<Hotspot> for [f64; 4] {
    fn from(h: Hotspot) -> Self {
        [h.center.x, h.center.y, h.radius_m, h.weight]
    }
}

/// Simulated user population and its default service model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationConfig {
    pub n_users: usize,
    pub mobility: MobilityKind,
    /// Mean stay in a grid cell for the walk model, seconds.
    pub mean_stay_s: f64,
    pub walk_speed_mps: f64,
    /// Empty means users are spread uniformly over the grid.
    pub hotspots: Vec<Hotspot>,
    /// Every user always has a session with unbounded demand.
    pub full_buffer: bool,
    pub session_rate_per_s: f64,
    pub session_duration_s: f64,
    pub dl_demand_bps: f64,
    pub ul_demand_bps: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_users: 50,
            mobility: MobilityKind::Walk,
            mean_stay_s: 120.0,
            walk_speed_mps: 1.5,
            hotspots: Vec::new(),
            full_buffer: false,
            session_rate_per_s: 1.0 / 300.0,
            session_duration_s: 120.0,
            dl_demand_bps: 20e6,
            ul_demand_bps: 5e6,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_range("population.mean_stay_s", self.mean_stay_s, 1.0, 1e7)?;
        check_range("population.walk_speed_mps", self.walk_speed_mps, 0.01, 50.0)?;
        check_range("population.session_rate_per_s", self.session_rate_per_s, 0.0, 10.0)?;
        check_range("population.session_duration_s", self.session_duration_s, 1e-3, 1e7)?;
        check_range("population.dl_demand_bps", self.dl_demand_bps, 1.0, 1e12)?;
        check_range("population.ul_demand_bps", self.ul_demand_bps, 1.0, 1e12)?;
        for (i, h) in self.hotspots.iter().enumerate() {
            check_range(&format!("population.hotspots[{i}].radius_m"), h.radius_m, 0.0, 1e6)?;
            check_range(&format!("population.hotspots[{i}].weight"), h.weight, 0.0, 1e6)?;
        }
        if !self.hotspots.is_empty() && self.hotspots.iter().all(|h| h.weight == 0.0) {
            return Err(ScenarioError::Invalid("population.hotspots all have zero weight".into()));
        }
        Ok(())
    }
}

/// Complete simulation world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub grid: GeoGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roads: Option<RoadGraph>,
    #[serde(default)]
    pub sim: SimConstants,
    #[serde(default)]
    pub reward: RewardWeights,
    #[serde(default)]
    pub population: PopulationConfig,
    #[serde(rename = "site")]
    pub sites: Vec<Site>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.grid.validate()?;
        if let Some(r) = &self.roads {
            r.validate()?;
        }
        self.sim.validate()?;
        self.reward.normalized()?;
        self.population.validate()?;
        if self.sites.is_empty() {
            return Err(ScenarioError::MissingField("site".into()));
        }
        for (i, s) in self.sites.iter().enumerate() {
            s.validate()?;
            if !self.grid.contains(s.position) {
                return Err(ScenarioError::OutOfBounds {
                    x: s.position.x,
                    y: s.position.y,
                });
            }
            if self.sites[..i].iter().any(|o| o.site_id == s.site_id) {
                return Err(ScenarioError::Invalid(format!("repeated site_id {}", s.site_id)));
            }
        }
        Ok(())
    }

    pub fn site(&self, id: SiteId) -> Option<&Site> {
        self.sites.iter().find(|s| s.site_id == id)
    }

    pub fn beam_mut(&mut self, site: SiteId, beam: BeamId) -> Option<&mut BeamConfig> {
        self.sites
            .iter_mut()
            .find(|s| s.site_id == site)
            .and_then(|s| s.beams.iter_mut().find(|b| b.beam_id == beam))
    }

    /// Every `(site index, beam index)` in site-then-beam order.
    pub fn beam_refs(&self) -> Vec<BeamRef> {
        let mut out = Vec::new();
        for (si, s) in self.sites.iter().enumerate() {
            for bi in 0..s.beams.len() {
                out.push(BeamRef { site: si, beam: bi });
            }
        }
        out
    }

    pub fn n_beams(&self) -> usize {
        self.sites.iter().map(|s| s.beams.len()).sum()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always serializable")
    }
}

/// Positional reference to a beam inside a [`Scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BeamRef {
    pub site: usize,
    pub beam: usize,
}
