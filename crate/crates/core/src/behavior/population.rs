//! Simulated users for an episode: 1 Hz tracks and service sessions,
//! generated up front from the scenario's population settings.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::postprocess::{postprocess_trajectories, PostConfig, UserTrack};
use super::traffic::{default_clusters, generate_traffic, PreferenceVector, ServiceSession, TrafficConfig};
use super::{BehaviorError, TrajectorySequence, TrajectoryStep};
use crate::exec::Exec;
use crate::rng::{self, SimRng};
use crate::scenario::{cell_index, GeoGrid, Hotspot, MobilityKind, PopulationConfig, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub tracks: Vec<UserTrack>,
    /// Sessions of user `i` in start order.
    pub sessions: Vec<Vec<ServiceSession>>,
}

impl Population {
    pub fn n_users(&self) -> usize {
        self.tracks.len()
    }

    pub fn positions_at(&self, t: f64) -> Vec<crate::scenario::Point> {
        self.tracks.iter().map(|tr| tr.position_at(t)).collect()
    }

    /// Summed `(dl, ul)` demand of the sessions active at `t`; `(0, 0)` when
    /// the user is idle.
    pub fn demand_at(&self, t: f64) -> Vec<(f64, f64)> {
        self.sessions
            .iter()
            .map(|ss| {
                ss.iter()
                    .filter(|s| s.active_at(t))
                    .fold((0.0, 0.0), |(d, u), s| (d + s.demand_bps, u + s.demand_bps_ul))
            })
            .collect()
    }
}

fn sample_point(grid: &GeoGrid, hotspots: &[Hotspot], r: &mut SimRng) -> crate::scenario::Point {
    if hotspots.is_empty() {
        return crate::scenario::Point::new(
            grid.origin.x + r.random::<f64>() * grid.width_m,
            grid.origin.y + r.random::<f64>() * grid.height_m,
        );
    }
    let total: f64 = hotspots.iter().map(|h| h.weight).sum();
    let mut u = r.random::<f64>() * total;
    let mut pick = hotspots.iter().rposition(|h| h.weight > 0.0).expect("a positive weight");
    for (i, h) in hotspots.iter().enumerate() {
        if h.weight > 0.0 && u < h.weight {
            pick = i;
            break;
        }
        u -= h.weight;
    }
    let h = &hotspots[pick];
    let rad = h.radius_m * r.random::<f64>().sqrt();
    let ang = r.random::<f64>() * std::f64::consts::TAU;
    grid.clamp(crate::scenario::Point::new(h.center.x + rad * ang.cos(), h.center.y + rad * ang.sin()))
}

fn visits(
    grid: &GeoGrid,
    pop: &PopulationConfig,
    horizon_s: f64,
    r: &mut SimRng,
    mut next: impl FnMut(&mut SimRng, usize) -> crate::scenario::Point,
) -> Result<Vec<TrajectoryStep>, BehaviorError> {
    let stay = Exp::new(1.0 / pop.mean_stay_s).map_err(|e| BehaviorError::Invalid(e.to_string()))?;
    let mut t = 0.0;
    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut i = 0;
    while t <= horizon_s {
        let cell = cell_index(grid, next(r, i))?;
        let s = stay.sample(r).max(1.0);
        match steps.last_mut() {
            Some(last) if last.token == cell => last.stay_s += s,
            _ => steps.push(TrajectoryStep::new(cell, t, s)),
        }
        t += s;
        i += 1;
    }
    Ok(steps)
}

/// Tracks cover at least `[0, horizon_s]`; sessions start in `[0, horizon_s)`.
pub fn build_population(scn: &Scenario, horizon_s: f64, seed: u64, exec: Exec) -> Result<Population, BehaviorError> {
    let pop = &scn.population;
    let grid = &scn.grid;
    let n = pop.n_users;
    let mut static_tracks = Vec::new();
    let mut seqs = Vec::new();
    for u in 0..n {
        let mut r = rng::stream(seed, "population", &[u as u64]);
        match pop.mobility {
            MobilityKind::Static => static_tracks.push(UserTrack {
                user_id: u as u64,
                start_s: 0.0,
                points: vec![sample_point(grid, &pop.hotspots, &mut r)],
            }),
            MobilityKind::Walk => {
                let steps = visits(grid, pop, horizon_s, &mut r, |r, _| sample_point(grid, &pop.hotspots, r))?;
                seqs.push(TrajectorySequence { user_id: u as u64, steps });
            }
            MobilityKind::Commute => {
                let home = sample_point(grid, &pop.hotspots, &mut r);
                let work = sample_point(grid, &pop.hotspots, &mut r);
                let steps = visits(grid, pop, horizon_s, &mut r, |_, i| if i % 2 == 0 { home } else { work })?;
                seqs.push(TrajectorySequence { user_id: u as u64, steps });
            }
        }
    }
    let tracks = if seqs.is_empty() {
        static_tracks
    } else {
        let cfg = PostConfig {
            walk_speed_mps: pop.walk_speed_mps,
            ..PostConfig::default()
        };
        postprocess_trajectories(&seqs, grid, scn.roads.as_ref(), &cfg, exec)?
    };

    let sessions = if pop.full_buffer {
        (0..n)
            .map(|u| {
                vec![ServiceSession {
                    user_id: u as u64,
                    app_index: 0,
                    action_cluster: 0,
                    start_s: 0.0,
                    duration_s: f64::INFINITY,
                    demand_bps: f64::INFINITY,
                    demand_bps_ul: f64::INFINITY,
                }]
            })
            .collect()
    } else {
        let prefs: Vec<PreferenceVector> = (0..n)
            .map(|u| PreferenceVector {
                user_id: u as u64,
                app_probs: vec![1.0],
            })
            .collect();
        let cfg = TrafficConfig {
            horizon_s,
            session_rate_per_s: pop.session_rate_per_s,
            seed: rng::derive(seed, &[rng::label("traffic")]),
            ..TrafficConfig::default()
        };
        let flat = generate_traffic(&default_clusters(pop), &prefs, &cfg, exec)?;
        let mut per = vec![Vec::new(); n];
        for s in flat {
            per[s.user_id as usize].push(s);
        }
        per
    };
    Ok(Population { tracks, sessions })
}
