//! Per-grid-cell best-server map for plotting. Uses large-scale terms only.

use std::io::Write;

use super::{dbm_to_mw, noise_per_re_dbm, per_re_power_dbm, rsrp_dbm, sinr_db_linear, NetError};
use crate::exec::Exec;
use crate::radio::RadioModel;
use crate::scenario::{cell_center, BeamId, CellToken, Scenario, SiteId};

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub cell: CellToken,
    pub best_rsrp_dbm: f64,
    pub best_sinr_db: f64,
    pub serving: (SiteId, BeamId),
}

pub fn coverage_map(scn: &Scenario, radio: &RadioModel, exec: Exec) -> Result<Vec<CoverageCell>, NetError> {
    let centers = (0..scn.grid.cell_count())
        .map(|t| cell_center(&scn.grid, CellToken(t)))
        .collect::<Result<Vec<_>, _>>()?;
    let (beams, budgets) = radio.budgets(scn, &centers, exec)?;
    let n = centers.len();
    let noise = dbm_to_mw(noise_per_re_dbm(scn.sim.noise_figure_db));
    let active: Vec<usize> = (0..beams.len())
        .filter(|&b| scn.sites[beams[b].site].beams[beams[b].beam].active)
        .collect();
    if active.is_empty() {
        return Err(NetError::NoActiveBeam);
    }
    let out = exec.map_range(n, |u| {
        let mut rx = Vec::with_capacity(active.len());
        for &b in &active {
            let site = &scn.sites[beams[b].site];
            let cl = budgets[b * n + u].coupling_loss_db;
            rx.push(dbm_to_mw(per_re_power_dbm(site.tx_power_dbm, site.n_prb) - cl));
        }
        let mut best_k = 0;
        for k in 1..rx.len() {
            if rx[k] > rx[best_k] {
                best_k = k;
            }
        }
        let best = active[best_k];
        let site = &scn.sites[beams[best].site];
        let total: f64 = rx.iter().sum();
        CoverageCell {
            cell: CellToken(u),
            best_rsrp_dbm: rsrp_dbm(site.tx_power_dbm, site.n_prb, budgets[best * n + u].coupling_loss_db),
            best_sinr_db: sinr_db_linear(rx[best_k], total - rx[best_k], noise),
            serving: (site.site_id, site.beams[beams[best].beam].beam_id),
        }
    });
    Ok(out)
}

pub fn write_coverage_csv<W: Write>(mut w: W, cells: &[CoverageCell]) -> std::io::Result<()> {
    writeln!(w, "cell_token,best_rsrp_dbm,best_sinr_db,serving_beam")?;
    for c in cells {
        writeln!(w, "{},{},{},{}:{}", c.cell.0, c.best_rsrp_dbm, c.best_sinr_db, c.serving.0, c.serving.1)?;
    }
    Ok(())
}
