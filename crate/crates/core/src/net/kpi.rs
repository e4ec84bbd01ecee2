//! Per-tick KPI aggregation and the KPI CSV stream.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::LinkState;
use crate::scenario::{Scenario, SiteId};

pub const KPI_CSV_HEADER: &str = "tick,scope,coverage_pct,avg_rsrp_dbm,avg_sinr_db,dl_mbps,ul_mbps,users";

/// KPIs over one scope. Averages are `None` when nobody is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    pub coverage_pct: f64,
    pub avg_rsrp_dbm: Option<f64>,
    pub avg_sinr_db: Option<f64>,
    pub dl_mbps: f64,
    pub ul_mbps: f64,
    /// Attached users in scope.
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKpi {
    pub site_id: SiteId,
    pub kpi: KpiRow,
}

/// C2 per-tick record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub tick: u64,
    /// Every user in the episode, attached or not.
    pub n_users: usize,
    /// Set when the tick had no users at all.
    pub empty: bool,
    pub grid: KpiRow,
    pub cells: Vec<CellKpi>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn covered(scn: &Scenario, l: &LinkState) -> bool {
    l.rsrp_dbm >= scn.sim.coverage_rsrp_threshold_dbm && l.sinr_db >= scn.sim.coverage_sinr_threshold_db
}

fn row(scn: &Scenario, links: &[&LinkState], population: usize, dl_bps: &[f64], ul_bps: &[f64], rate_users: &[usize]) -> KpiRow {
    if population == 0 {
        return KpiRow {
            coverage_pct: 100.0,
            avg_rsrp_dbm: None,
            avg_sinr_db: None,
            dl_mbps: 0.0,
            ul_mbps: 0.0,
            users: 0,
        };
    }
    let n_cov = links.iter().filter(|l| covered(scn, l)).count();
    KpiRow {
        coverage_pct: 100.0 * n_cov as f64 / population as f64,
        avg_rsrp_dbm: mean(links.iter().map(|l| l.rsrp_dbm)),
        avg_sinr_db: mean(links.iter().map(|l| l.sinr_db)),
        dl_mbps: mean(rate_users.iter().map(|&u| dl_bps[u] / 1e6)).unwrap_or(0.0),
        ul_mbps: mean(rate_users.iter().map(|&u| ul_bps[u] / 1e6)).unwrap_or(0.0),
        users: links.len(),
    }
}

/// Aggregates one tick. The grid scope counts every user (unattached users
/// are uncovered and deliver nothing); a cell scope counts the users it
/// serves.
pub fn aggregate_kpis(scn: &Scenario, tick: u64, links: &[LinkState], n_users: usize, dl_bps: &[f64], ul_bps: &[f64]) -> KpiReport {
    let all: Vec<&LinkState> = links.iter().collect();
    let everyone: Vec<usize> = (0..n_users).collect();
    let grid = row(scn, &all, n_users, dl_bps, ul_bps, &everyone);
    let cells = scn
        .sites
        .iter()
        .map(|s| {
            let mine: Vec<&LinkState> = links.iter().filter(|l| l.site_id == s.site_id).collect();
            let users: Vec<usize> = mine.iter().map(|l| l.user).collect();
            CellKpi {
                site_id: s.site_id,
                kpi: row(scn, &mine, mine.len(), dl_bps, ul_bps, &users),
            }
        })
        .collect();
    KpiReport {
        tick,
        n_users,
        empty: n_users == 0,
        grid,
        cells,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_row<W: Write>(w: &mut W, tick: &str, scope: &str, k: &KpiRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{tick},{scope},{},{},{},{},{},{}",
        k.coverage_pct,
        opt(k.avg_rsrp_dbm),
        opt(k.avg_sinr_db),
        k.dl_mbps,
        k.ul_mbps,
        k.users
    )
}

/// Writes the header and one `grid` row per tick, preceded by one
/// `cell:<id>` row per site when `per_cell` is set. Empty averages are left
/// blank.
pub fn write_kpi_csv<W: Write>(mut w: W, reports: &[KpiReport], per_cell: bool) -> std::io::Result<()> {
    writeln!(w, "{KPI_CSV_HEADER}")?;
    for r in reports {
        let t = r.tick.to_string();
        for c in r.cells.iter().filter(|_| per_cell) {
            write_row(&mut w, &t, &format!("cell:{}", c.site_id), &c.kpi)?;
        }
        write_row(&mut w, &t, "grid", &r.grid)?;
    }
    Ok(())
}

/// Writes a single summary row with tick label `summary`.
pub fn write_summary_row<W: Write>(mut w: W, k: &KpiRow) -> std::io::Result<()> {
    write_row(&mut w, "summary", "grid", k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario_str;

    fn scn() -> Scenario {
        parse_scenario_str(
            r#"
[grid]
origin = [0.0, 0.0]
width_m = 100.0
height_m = 100.0
resolution_m = 10.0
[[site]]
site_id = 4
position = [50.0, 50.0]
antenna_height_m = 25.0
mechanical_azimuth_deg = 0.0
mechanical_downtilt_deg = 4.0
tx_power_dbm = 46.0
carrier_ghz = 3.5
bandwidth_mhz = 20.0
n_prb = 100
[[site.beam]]
beam_id = 0
h_beamwidth_deg = 65.0
v_beamwidth_deg = 12.0
"#,
        )
        .unwrap()
    }

    fn ls(user: usize, rsrp: f64, sinr: f64) -> LinkState {
        LinkState {
            user,
            serving: 0,
            site_id: 4,
            beam_id: 0,
            rsrp_dbm: rsrp,
            sinr_db: sinr,
            ul_sinr_db: sinr,
        }
    }

    #[test]
    fn full_coverage() {
        let s = scn();
        let r = aggregate_kpis(&s, 0, &[ls(0, -70.0, 10.0), ls(1, -90.0, 0.0)], 2, &[0.0; 2], &[0.0; 2]);
        assert_eq!(r.grid.coverage_pct, 100.0);
    }

    #[test]
    fn half_coverage_and_means() {
        let s = scn();
        let r = aggregate_kpis(&s, 3, &[ls(0, -70.0, 10.0), ls(1, -110.0, 10.0)], 2, &[2e6, 4e6], &[1e6, 0.0]);
        assert_eq!(r.grid.coverage_pct, 50.0);
        assert_eq!(r.grid.avg_rsrp_dbm, Some(-90.0));
        assert_eq!(r.grid.dl_mbps, 3.0);
        assert_eq!(r.grid.ul_mbps, 0.5);
        assert_eq!(r.cells[0].kpi, r.grid);
        let r = aggregate_kpis(&s, 3, &[ls(0, -70.0, 10.0), ls(1, -80.0, 10.0)], 2, &[0.0; 2], &[0.0; 2]);
        assert_eq!(r.grid.avg_rsrp_dbm, Some(-75.0));
    }

    #[test]
    fn empty_tick() {
        let r = aggregate_kpis(&scn(), 0, &[], 0, &[], &[]);
        assert!(r.empty);
        assert_eq!(r.grid.coverage_pct, 100.0);
        assert_eq!(r.grid.dl_mbps, 0.0);
    }

    #[test]
    fn unattached_users_are_uncovered() {
        let r = aggregate_kpis(&scn(), 0, &[], 3, &[0.0; 3], &[0.0; 3]);
        assert!(!r.empty);
        assert_eq!(r.grid.coverage_pct, 0.0);
        assert_eq!(r.grid.avg_rsrp_dbm, None);
    }

    #[test]
    fn csv_layout() {
        let s = scn();
        let r = aggregate_kpis(&s, 7, &[ls(0, -70.0, 10.0)], 1, &[1e6], &[0.0]);
        let mut buf = Vec::new();
        write_kpi_csv(&mut buf, &[r], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], KPI_CSV_HEADER);
        assert_eq!(lines[1], "7,cell:4,100,-70,10,1,0,1");
        assert_eq!(lines[2], "7,grid,100,-70,10,1,0,1");
    }
}
