//! Base-station emulator: serving selection, RSRP and SINR per user,
//! PRB scheduling, throughput, and KPI aggregation.

pub mod coverage;
pub mod kpi;
pub mod scheduler;

pub use coverage::{coverage_map, write_coverage_csv, CoverageCell};
pub use kpi::{aggregate_kpis, write_kpi_csv, write_summary_row, CellKpi, KpiReport, KpiRow, KPI_CSV_HEADER};
pub use scheduler::{rate_per_prb, schedule, user_throughput, SchedUser};

use thiserror::Error;

use crate::exec::Exec;
use crate::radio::ChannelMatrix;
use crate::scenario::{BeamId, BeamRef, Scenario, ScenarioError, SiteId};

/// Range RSRP reports are clamped to, dBm.
pub const RSRP_REPORT_RANGE: (f64, f64) = (-180.0, -20.0);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("no link between beam {beam} and user {user}")]
    UnknownLink { beam: usize, user: usize },
    #[error("no active beam in the scenario")]
    NoActiveBeam,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Transmit power per resource element, dBm.
pub fn per_re_power_dbm(tx_power_dbm: f64, n_prb: u32) -> f64 {
    tx_power_dbm - 10.0 * (12.0 * n_prb as f64).log10()
}

/// Reference-signal received power; excludes small-scale fading.
pub fn rsrp_dbm(tx_power_dbm: f64, n_prb: u32, coupling_loss_db: f64) -> f64 {
    per_re_power_dbm(tx_power_dbm, n_prb) - coupling_loss_db
}

/// Thermal noise in one 15 kHz resource element, dBm.
pub fn noise_per_re_dbm(noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * 15e3f64.log10() + noise_figure_db
}

pub fn sinr_db_linear(signal_mw: f64, interference_mw: f64, noise_mw: f64) -> f64 {
    10.0 * (signal_mw / (interference_mw + noise_mw)).log10()
}

/// F4 payload for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub user: usize,
    /// Index into the channel matrix beam list.
    pub serving: usize,
    pub site_id: SiteId,
    pub beam_id: BeamId,
    /// Clamped to [`RSRP_REPORT_RANGE`].
    pub rsrp_dbm: f64,
    pub sinr_db: f64,
    pub ul_sinr_db: f64,
}

fn beam_active(scn: &Scenario, b: BeamRef) -> bool {
    scn.sites[b.site].beams[b.beam].active
}

fn beam_key(scn: &Scenario, b: BeamRef) -> (SiteId, BeamId) {
    let s = &scn.sites[b.site];
    (s.site_id, s.beams[b.beam].beam_id)
}

/// Unclamped RSRP of every link, beam-major like the matrix.
pub fn rsrp_matrix(scn: &Scenario, m: &ChannelMatrix) -> Vec<f64> {
    let n = m.n_users;
    (0..m.budgets.len())
        .map(|i| {
            let s = &scn.sites[m.beams[i / n].site];
            rsrp_dbm(s.tx_power_dbm, s.n_prb, m.budgets[i].coupling_loss_db)
        })
        .collect()
}

/// Strongest active beam for `user`; ties go to the lower `(site_id, beam_id)`.
pub fn select_serving(scn: &Scenario, beams: &[BeamRef], rsrp: &[f64], n_users: usize, user: usize) -> Result<usize, NetError> {
    let mut best: Option<usize> = None;
    for (bi, &b) in beams.iter().enumerate() {
        if !beam_active(scn, b) {
            continue;
        }
        let v = rsrp[bi * n_users + user];
        best = match best {
            None => Some(bi),
            Some(cur) => {
                let cv = rsrp[cur * n_users + user];
                if v > cv || (v == cv && beam_key(scn, b) < beam_key(scn, beams[cur])) {
                    Some(bi)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.ok_or(NetError::NoActiveBeam)
}

/// Received per-RE power of `beam` at `user` including fading, mW.
pub fn received_re_mw(scn: &Scenario, m: &ChannelMatrix, beam: usize, user: usize) -> f64 {
    let s = &scn.sites[m.beams[beam].site];
    dbm_to_mw(per_re_power_dbm(s.tx_power_dbm, s.n_prb)) * m.coeff(beam, user).norm_sqr()
}

/// Downlink SINR with every other active beam as a full-buffer interferer.
pub fn compute_sinr(scn: &Scenario, m: &ChannelMatrix, serving: usize, user: usize) -> Result<f64, NetError> {
    if serving >= m.n_beams() || user >= m.n_users {
        return Err(NetError::UnknownLink { beam: serving, user });
    }
    let s = received_re_mw(scn, m, serving, user);
    let i: f64 = (0..m.n_beams())
        .filter(|&b| b != serving && beam_active(scn, m.beams[b]))
        .map(|b| received_re_mw(scn, m, b, user))
        .sum();
    let n = dbm_to_mw(noise_per_re_dbm(scn.sim.noise_figure_db));
    Ok(sinr_db_linear(s, i, n))
}

/// Uplink SNR towards the serving beam: the user's power spread over the
/// carrier, same coupling and fading, no uplink interference.
pub fn compute_ul_sinr(scn: &Scenario, m: &ChannelMatrix, serving: usize, user: usize) -> Result<f64, NetError> {
    if serving >= m.n_beams() || user >= m.n_users {
        return Err(NetError::UnknownLink { beam: serving, user });
    }
    let site = &scn.sites[m.beams[serving].site];
    let p = dbm_to_mw(per_re_power_dbm(scn.sim.ue_tx_power_dbm, site.n_prb));
    let n = dbm_to_mw(noise_per_re_dbm(scn.sim.noise_figure_db));
    Ok(sinr_db_linear(p * m.coeff(serving, user).norm_sqr(), 0.0, n))
}

/// F4: serving beam, RSRP and SINR for every user.
pub fn link_states(scn: &Scenario, m: &ChannelMatrix, exec: Exec) -> Result<Vec<LinkState>, NetError> {
    let rsrp = rsrp_matrix(scn, m);
    let n = m.n_users;
    exec.map_range(n, |u| {
        let serving = select_serving(scn, &m.beams, &rsrp, n, u)?;
        let (site_id, beam_id) = beam_key(scn, m.beams[serving]);
        Ok(LinkState {
            user: u,
            serving,
            site_id,
            beam_id,
            rsrp_dbm: rsrp[serving * n + u].clamp(RSRP_REPORT_RANGE.0, RSRP_REPORT_RANGE.1),
            sinr_db: compute_sinr(scn, m, serving, u)?,
            ul_sinr_db: compute_ul_sinr(scn, m, serving, u)?,
        })
    })
    .into_iter()
    .collect()
}
