//! Episode driver. Owns the clock and moves data between the user, channel
//! and base-station emulators; every inter-module payload of a tick can be
//! recorded for inspection and replay.
//!
//! Trajectories, sessions and shadow fields depend only on the scenario
//! geometry and the seed, so they live in a [`World`] that can be shared by
//! episodes that differ only in beam configuration.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{build_population, BehaviorError, Population};
use crate::exec::Exec;
use crate::net::{aggregate_kpis, link_states, rate_per_prb, schedule, KpiReport, KpiRow, LinkState, NetError, SchedUser};
use crate::radio::{empirical, LinkBudget, PathLossModel, RadioModel};
use crate::scenario::{BeamId, BeamOverride, BeamRef, Point, Scenario, ScenarioError, SiteId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no beam {beam_id} on site {site_id}")]
    UnknownBeam { site_id: SiteId, beam_id: BeamId },
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("episode already ran all {0} ticks")]
    EpisodeFinished(u64),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Emulator call: a scenario, beam replacements, length and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub overrides: Vec<BeamOverride>,
    pub episode_ticks: u64,
    pub seed: u64,
    /// Keep every tick's interface payloads.
    #[serde(default)]
    pub record: bool,
}

impl SimConfig {
    pub fn new(scenario: Scenario, episode_ticks: u64, seed: u64) -> Self {
        Self {
            scenario,
            overrides: Vec::new(),
            episode_ticks,
            seed,
            record: false,
        }
    }

    pub fn horizon_s(&self) -> f64 {
        self.episode_ticks as f64 * self.scenario.sim.kpi_tick_s
    }
}

/// Copy of `scn` with each override replacing its beam.
pub fn apply_overrides(scn: &Scenario, overrides: &[BeamOverride]) -> Result<Scenario, SimError> {
    let mut out = scn.clone();
    for o in overrides {
        let ctx = format!("override[{}:{}]", o.site_id, o.beam.beam_id);
        o.beam.validate(&ctx).map_err(|e| SimError::InvalidOverride(e.to_string()))?;
        let slot = out.beam_mut(o.site_id, o.beam.beam_id).ok_or(SimError::UnknownBeam {
            site_id: o.site_id,
            beam_id: o.beam.beam_id,
        })?;
        *slot = o.beam.clone();
    }
    Ok(out)
}

/// Seed-dependent, configuration-independent episode inputs.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub radio: RadioModel,
    pub population: Population,
}

impl World {
    pub fn build(scn: &Scenario, seed: u64, horizon_s: f64, exec: Exec) -> Result<Self, SimError> {
        Self::build_with(scn, seed, horizon_s, empirical(), exec)
    }

    pub fn build_with(scn: &Scenario, seed: u64, horizon_s: f64, path_loss: Arc<dyn PathLossModel>, exec: Exec) -> Result<Self, SimError> {
        Ok(Self {
            seed,
            radio: RadioModel::new(scn, seed, path_loss, exec),
            population: build_population(scn, horizon_s, seed, exec)?,
        })
    }
}

/// Everything that crossed a module boundary during one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickPayload {
    pub tick: u64,
    pub t_s: f64,
    /// F3: user positions.
    pub positions: Vec<Point>,
    /// F2: offered `(dl, ul)` load per user, bps.
    pub demand: Vec<(f64, f64)>,
    /// F1: large-scale budgets, beam-major over `beams`.
    pub beams: Vec<BeamRef>,
    pub budgets: Vec<LinkBudget>,
    pub fading: Vec<Complex64>,
    /// F4: attachment, RSRP and SINR.
    pub links: Vec<LinkState>,
    /// Scheduler averages before this tick.
    pub avg_dl_bps: Vec<f64>,
    pub avg_ul_bps: Vec<f64>,
    pub prb_dl: Vec<u32>,
    pub prb_ul: Vec<u32>,
    pub dl_bps: Vec<f64>,
    pub ul_bps: Vec<f64>,
    pub report: KpiReport,
}

struct Cache {
    positions: Vec<Point>,
    beams: Vec<BeamRef>,
    budgets: Vec<LinkBudget>,
}

pub struct Episode {
    pub scenario: Scenario,
    pub world: Arc<World>,
    pub episode_ticks: u64,
    pub record: bool,
    pub exec: Exec,
    tick: u64,
    avg_dl: Vec<f64>,
    avg_ul: Vec<f64>,
    cache: Option<Cache>,
    pub payloads: Vec<TickPayload>,
}

/// Builds the episode state for a C1 call, generating a fresh world.
pub fn apply_config(c1: &SimConfig, exec: Exec) -> Result<Episode, SimError> {
    let scn = apply_overrides(&c1.scenario, &c1.overrides)?;
    let world = Arc::new(World::build(&scn, c1.seed, c1.horizon_s(), exec)?);
    Ok(Episode::new(scn, world, c1.episode_ticks, c1.record, exec))
}

/// PRB allocation and delivered rates for one direction on one beam.
pub fn schedule_beam(scn: &Scenario, members: &[(usize, f64, f64, f64)], site: usize, tick: u64) -> (Vec<u32>, Vec<f64>) {
    let sim = &scn.sim;
    let users: Vec<SchedUser> = members
        .iter()
        .map(|&(u, sinr, demand, avg)| SchedUser {
            user: u,
            rate_per_prb_bps: rate_per_prb(sinr, sim.max_se_bps_hz, sim.overhead),
            demand_bps: demand,
            avg_tput_bps: avg,
        })
        .collect();
    let alloc = schedule(sim.scheduler, &users, scn.sites[site].n_prb, sim.pf_alpha, tick);
    let rates = users
        .iter()
        .zip(&alloc)
        .map(|(u, &p)| {
            if p == 0 {
                0.0
            } else {
                (p as f64 * u.rate_per_prb_bps).min(u.demand_bps)
            }
        })
        .collect();
    (alloc, rates)
}

/// Scheduling for every serving beam. Returns per-user `(prb_dl, prb_ul,
/// dl_bps, ul_bps)`; unattached users get zeros.
#[allow(clippy::too_many_arguments)]
pub fn schedule_all(
    scn: &Scenario,
    beams: &[BeamRef],
    links: &[LinkState],
    demand: &[(f64, f64)],
    avg_dl: &[f64],
    avg_ul: &[f64],
    tick: u64,
    exec: Exec,
) -> (Vec<u32>, Vec<u32>, Vec<f64>, Vec<f64>) {
    let n = demand.len();
    let mut groups: Vec<Vec<&LinkState>> = vec![Vec::new(); beams.len()];
    for l in links {
        groups[l.serving].push(l);
    }
    let served: Vec<usize> = (0..beams.len()).filter(|&b| !groups[b].is_empty()).collect();
    let per_beam = exec.map(&served, |&b| {
        let g = &groups[b];
        let dl: Vec<_> = g.iter().map(|l| (l.user, l.sinr_db, demand[l.user].0, avg_dl[l.user])).collect();
        let ul: Vec<_> = g.iter().map(|l| (l.user, l.ul_sinr_db, demand[l.user].1, avg_ul[l.user])).collect();
        (schedule_beam(scn, &dl, beams[b].site, tick), schedule_beam(scn, &ul, beams[b].site, tick))
    });
    let (mut pd, mut pu, mut rd, mut ru) = (vec![0; n], vec![0; n], vec![0.0; n], vec![0.0; n]);
    for (&b, ((ad, rdl), (au, rul))) in served.iter().zip(per_beam) {
        for (k, l) in groups[b].iter().enumerate() {
            pd[l.user] = ad[k];
            pu[l.user] = au[k];
            rd[l.user] = rdl[k];
            ru[l.user] = rul[k];
        }
    }
    (pd, pu, rd, ru)
}

impl Episode {
    pub fn new(scenario: Scenario, world: Arc<World>, episode_ticks: u64, record: bool, exec: Exec) -> Self {
        let n = world.population.n_users();
        Self {
            scenario,
            world,
            episode_ticks,
            record,
            exec,
            tick: 0,
            avg_dl: vec![0.0; n],
            avg_ul: vec![0.0; n],
            cache: None,
            payloads: Vec::new(),
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn finished(&self) -> bool {
        self.tick >= self.episode_ticks
    }

    pub fn positions(&self) -> Vec<Point> {
        self.world.population.positions_at(self.tick as f64 * self.scenario.sim.kpi_tick_s)
    }

    /// Advances one tick and returns its KPIs.
    pub fn step_tick(&mut self) -> Result<KpiReport, SimError> {
        if self.finished() {
            return Err(SimError::EpisodeFinished(self.episode_ticks));
        }
        let scn = &self.scenario;
        let exec = self.exec;
        let tick = self.tick;
        let t_s = tick as f64 * scn.sim.kpi_tick_s;
        let pop = &self.world.population;

        let positions = pop.positions_at(t_s);
        let demand = pop.demand_at(t_s);
        let (beams, budgets) = match self.cache.take() {
            Some(c) if c.positions == positions => (c.beams, c.budgets),
            _ => self.world.radio.budgets(scn, &positions, exec)?,
        };
        let m = self.world.radio.matrix_from_budgets(scn, beams, budgets, positions.len(), tick, exec);
        let any_active = scn.sites.iter().any(|s| s.beams.iter().any(|b| b.active));
        let links = if any_active && !positions.is_empty() {
            link_states(scn, &m, exec)?
        } else {
            Vec::new()
        };
        let (prb_dl, prb_ul, dl_bps, ul_bps) = schedule_all(scn, &m.beams, &links, &demand, &self.avg_dl, &self.avg_ul, tick, exec);
        let report = aggregate_kpis(scn, tick, &links, positions.len(), &dl_bps, &ul_bps);

        let alpha = scn.sim.pf_alpha;
        let before = self.record.then(|| (self.avg_dl.clone(), self.avg_ul.clone()));
        for (a, r) in self.avg_dl.iter_mut().zip(&dl_bps) {
            *a = (1.0 - alpha) * *a + alpha * r;
        }
        for (a, r) in self.avg_ul.iter_mut().zip(&ul_bps) {
            *a = (1.0 - alpha) * *a + alpha * r;
        }
        if let Some((avg_dl_bps, avg_ul_bps)) = before {
            self.payloads.push(TickPayload {
                tick,
                t_s,
                positions: positions.clone(),
                demand,
                beams: m.beams.clone(),
                budgets: m.budgets.clone(),
                fading: m.fading,
                links,
                avg_dl_bps,
                avg_ul_bps,
                prb_dl,
                prb_ul,
                dl_bps,
                ul_bps,
                report: report.clone(),
            });
        }
        self.cache = Some(Cache {
            positions,
            beams: m.beams,
            budgets: m.budgets,
        });
        self.tick += 1;
        Ok(report)
    }

    /// Runs the remaining ticks.
    pub fn run(mut self) -> Result<(SimResult, Vec<TickPayload>), SimError> {
        let mut reports = Vec::with_capacity((self.episode_ticks - self.tick) as usize);
        while !self.finished() {
            reports.push(self.step_tick()?);
        }
        let final_positions = self.positions_at_end();
        let n = self.world.population.n_users();
        Ok((
            SimResult {
                summary: summarize(&reports, n),
                empty: reports.is_empty(),
                reports,
                final_positions,
                seed: self.world.seed,
            },
            self.payloads,
        ))
    }

    fn positions_at_end(&self) -> Vec<Point> {
        let last = self.tick.saturating_sub(1) as f64 * self.scenario.sim.kpi_tick_s;
        self.world.population.positions_at(last)
    }
}

/// Emulator output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub reports: Vec<KpiReport>,
    /// Grid-scope means over ticks; `users` holds the population size.
    pub summary: KpiRow,
    /// Set when no tick ran.
    pub empty: bool,
    pub final_positions: Vec<Point>,
    pub seed: u64,
}

/// Mean of every grid metric over ticks. Averages that are undefined in a
/// tick are left out of their mean.
pub fn summarize(reports: &[KpiReport], n_users: usize) -> KpiRow {
    fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        (n > 0).then(|| s / n as f64)
    }
    let g = || reports.iter().map(|r| &r.grid);
    KpiRow {
        coverage_pct: mean(g().map(|k| k.coverage_pct)).unwrap_or(0.0),
        avg_rsrp_dbm: mean(g().filter_map(|k| k.avg_rsrp_dbm)),
        avg_sinr_db: mean(g().filter_map(|k| k.avg_sinr_db)),
        dl_mbps: mean(g().map(|k| k.dl_mbps)).unwrap_or(0.0),
        ul_mbps: mean(g().map(|k| k.ul_mbps)).unwrap_or(0.0),
        users: n_users,
    }
}

/// `apply_config` followed by every tick.
pub fn run_episode(c1: &SimConfig, exec: Exec) -> Result<SimResult, SimError> {
    Ok(apply_config(c1, exec)?.run()?.0)
}

/// Runs a configuration against an existing world (common random numbers).
pub fn run_with_world(scn: &Scenario, overrides: &[BeamOverride], world: Arc<World>, ticks: u64, exec: Exec) -> Result<SimResult, SimError> {
    let scn = apply_overrides(scn, overrides)?;
    Ok(Episode::new(scn, world, ticks, false, exec).run()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario_str, BeamConfig};

    const SCN: &str = r#"
[grid]
origin = [0.0, 0.0]
width_m = 600.0
height_m = 600.0
resolution_m = 10.0
[population]
n_users = 6
full_buffer = true
[[site]]
site_id = 1
position = [300.0, 300.0]
antenna_height_m = 25.0
mechanical_azimuth_deg = 0.0
mechanical_downtilt_deg = 0.0
tx_power_dbm = 46.0
carrier_ghz = 3.5
bandwidth_mhz = 20.0
n_prb = 100
[[site.beam]]
beam_id = 0
h_beamwidth_deg = 65.0
v_beamwidth_deg = 12.0
tilt_deg = 4.0
[[site.beam]]
beam_id = 1
h_beamwidth_deg = 65.0
v_beamwidth_deg = 12.0
azimuth_offset_deg = 60.0
"#;

    fn cfg() -> SimConfig {
        SimConfig::new(parse_scenario_str(SCN).unwrap(), 5, 3)
    }

    #[test]
    fn override_locality_and_errors() {
        let c = cfg();
        let mut b = c.scenario.sites[0].beams[0].clone();
        b.tilt_deg = 6.0;
        let s = apply_overrides(&c.scenario, &[BeamOverride { site_id: 1, beam: b.clone() }]).unwrap();
        assert_eq!(s.sites[0].beams[0].tilt_deg, 6.0);
        assert_eq!(s.sites[0].beams[1], c.scenario.sites[0].beams[1]);
        assert_eq!(apply_overrides(&c.scenario, &[]).unwrap(), c.scenario);
        let ghost = BeamOverride {
            site_id: 1,
            beam: BeamConfig::new(99, 65.0, 12.0),
        };
        assert!(matches!(
            apply_overrides(&c.scenario, &[ghost]),
            Err(SimError::UnknownBeam { beam_id: 99, .. })
        ));
        b.tilt_deg = 40.0;
        assert!(matches!(
            apply_overrides(&c.scenario, &[BeamOverride { site_id: 1, beam: b }]),
            Err(SimError::InvalidOverride(_))
        ));
    }

    #[test]
    fn zero_ticks() {
        let mut c = cfg();
        c.episode_ticks = 0;
        let r = run_episode(&c, Exec::Sequential).unwrap();
        assert!(r.empty && r.reports.is_empty());
    }

    #[test]
    fn finished_episode_errors() {
        let mut e = apply_config(&cfg(), Exec::Sequential).unwrap();
        for _ in 0..5 {
            e.step_tick().unwrap();
        }
        assert!(matches!(e.step_tick(), Err(SimError::EpisodeFinished(5))));
    }

    #[test]
    fn all_beams_off_leaves_users_unattached() {
        let mut c = cfg();
        for b in &mut c.scenario.sites[0].beams {
            b.active = false;
        }
        let r = run_episode(&c, Exec::Sequential).unwrap();
        for rep in &r.reports {
            assert_eq!(rep.grid.coverage_pct, 0.0);
            assert_eq!(rep.grid.avg_rsrp_dbm, None);
            assert_eq!(rep.grid.dl_mbps, 0.0);
        }
    }
}
