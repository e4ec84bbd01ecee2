//! Link budgets and the per-tick complex channel matrix.

use std::sync::Arc;

use num_complex::Complex64;

use super::antenna::{antenna_gain, relative_angles};
use super::fading::{small_scale, LinkKey};
use super::pathloss::PathLossModel;
use super::shadow::ShadowField;
use crate::exec::Exec;
use crate::scenario::{cell_index, los_check, BeamRef, Point, Scenario, ScenarioError};

/// Large-scale terms of one beam-user link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance_3d_m: f64,
    pub los: bool,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    pub antenna_gain_dbi: f64,
    /// `path_loss + shadow - antenna_gain`.
    pub coupling_loss_db: f64,
}

/// Per-site static radio state: frozen shadow maps and the path-loss provider.
#[derive(Debug, Clone)]
pub struct RadioModel {
    pub seed: u64,
    pub shadows: Vec<ShadowField>,
    pub path_loss: Arc<dyn PathLossModel>,
}

/// Beam-major matrix over `beams x users`.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    pub beams: Vec<BeamRef>,
    pub n_users: usize,
    pub budgets: Vec<LinkBudget>,
    pub fading: Vec<Complex64>,
    /// `10^(-coupling/20) * h`.
    pub coeff: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn n_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn idx(&self, beam: usize, user: usize) -> usize {
        beam * self.n_users + user
    }

    pub fn budget(&self, beam: usize, user: usize) -> &LinkBudget {
        &self.budgets[self.idx(beam, user)]
    }

    pub fn h(&self, beam: usize, user: usize) -> Complex64 {
        self.fading[self.idx(beam, user)]
    }

    pub fn coeff(&self, beam: usize, user: usize) -> Complex64 {
        self.coeff[self.idx(beam, user)]
    }
}

impl RadioModel {
    pub fn new(scn: &Scenario, seed: u64, path_loss: Arc<dyn PathLossModel>, exec: Exec) -> Self {
        let shadows = scn
            .sites
            .iter()
            .map(|s| ShadowField::generate(&scn.grid, &scn.sim, s.site_id, seed, exec))
            .collect();
        Self { seed, shadows, path_loss }
    }

    /// Large-scale budget of one link. `los` must come from the site-user
    /// terrain check.
    pub fn link_budget(&self, scn: &Scenario, b: BeamRef, user: Point, los: bool) -> Result<LinkBudget, ScenarioError> {
        let site = &scn.sites[b.site];
        let beam = &site.beams[b.beam];
        let ant_alt = scn.grid.terrain_at(site.position) + site.antenna_height_m;
        let ue_alt = scn.grid.terrain_at(user) + scn.sim.ue_height_m;
        let horiz = site.position.dist(user);
        let distance_3d_m = horiz.hypot(ant_alt - ue_alt);
        let angles = relative_angles(site, beam, user, ue_alt, ant_alt);
        let antenna_gain_dbi = antenna_gain(beam, angles);
        let path_loss_db = self.path_loss.path_loss_db(distance_3d_m, site.carrier_ghz, los);
        let shadow_db = self.shadows[b.site].shadow_db(cell_index(&scn.grid, user)?, los);
        Ok(LinkBudget {
            distance_3d_m,
            los,
            path_loss_db,
            shadow_db,
            antenna_gain_dbi,
            coupling_loss_db: path_loss_db + shadow_db - antenna_gain_dbi,
        })
    }

    /// Terrain LOS for every `(site, user)` pair, site-major.
    pub fn los_matrix(&self, scn: &Scenario, users: &[Point], exec: Exec) -> Result<Vec<bool>, ScenarioError> {
        let n = users.len();
        exec.map_range(scn.sites.len() * n, |i| {
            let site = &scn.sites[i / n];
            los_check(&scn.grid, site.position, site.antenna_height_m, users[i % n], scn.sim.ue_height_m)
        })
        .into_iter()
        .collect()
    }

    /// Budgets for all beam-user links, beam-major.
    pub fn budgets(&self, scn: &Scenario, users: &[Point], exec: Exec) -> Result<(Vec<BeamRef>, Vec<LinkBudget>), ScenarioError> {
        let los = self.los_matrix(scn, users, exec)?;
        let beams = scn.beam_refs();
        let n = users.len();
        let budgets = exec
            .map_range(beams.len() * n, |i| {
                let b = beams[i / n];
                let u = i % n;
                self.link_budget(scn, b, users[u], los[b.site * n + u])
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok((beams, budgets))
    }

    /// Channel matrix for one tick. User `u` is keyed by its index.
    pub fn channel_matrix(&self, scn: &Scenario, users: &[Point], tick: u64, exec: Exec) -> Result<ChannelMatrix, ScenarioError> {
        let (beams, budgets) = self.budgets(scn, users, exec)?;
        Ok(self.matrix_from_budgets(scn, beams, budgets, users.len(), tick, exec))
    }

    /// Adds the fading of `tick` to precomputed large-scale budgets.
    pub fn matrix_from_budgets(
        &self,
        scn: &Scenario,
        beams: Vec<BeamRef>,
        budgets: Vec<LinkBudget>,
        n: usize,
        tick: u64,
        exec: Exec,
    ) -> ChannelMatrix {
        let k_db = scn.sim.rician_k_db;
        let fading = exec.map_range(beams.len() * n, |i| {
            let b = beams[i / n];
            let site = &scn.sites[b.site];
            let key = LinkKey {
                site: site.site_id,
                beam: site.beams[b.beam].beam_id,
                user: (i % n) as u64,
            };
            small_scale(self.seed, key, tick, budgets[i].los, k_db)
        });
        let coeff = budgets
            .iter()
            .zip(&fading)
            .map(|(lb, h)| h * 10f64.powf(-lb.coupling_loss_db / 20.0))
            .collect();
        ChannelMatrix {
            beams,
            n_users: n,
            budgets,
            fading,
            coeff,
        }
    }
}
