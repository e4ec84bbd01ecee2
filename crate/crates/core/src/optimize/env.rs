use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{apply_action, beam_features, compute_reward, kpi_features, state_len, ActionSpec, Clamp, OptError, DENSITY_BINS};
use crate::exec::Exec;
use crate::net::KpiRow;
use crate::orchestrator::{Episode, World};
use crate::radio::{empirical, PathLossModel};
use crate::scenario::{BeamConfig, BeamOverride, RewardWeights, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Ticks simulated per evaluation.
    pub window_ticks: u64,
    /// Steps before the episode is done.
    pub max_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            window_ticks: 60,
            max_steps: 60,
        }
    }
}

/// Window-mean KPIs of one configuration and its reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reward: f64,
    pub kpis: KpiRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvInfo {
    pub kpis: KpiRow,
    pub clamps: Vec<Clamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvTransition {
    pub state: Vec<f64>,
    pub action: ActionSpec,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub info: EnvInfo,
}

struct Ready {
    weights: RewardWeights,
    world: Arc<World>,
    baseline: KpiRow,
    density: Vec<f64>,
    configs: Vec<BeamConfig>,
    last: KpiRow,
    steps: usize,
}

/// One sequential environment instance.
pub struct Env {
    scenario: Scenario,
    cfg: EnvConfig,
    exec: Exec,
    path_loss: Arc<dyn PathLossModel>,
    ready: Option<Ready>,
}

impl Env {
    pub fn new(scenario: Scenario, cfg: EnvConfig, exec: Exec) -> Self {
        Self {
            scenario,
            cfg,
            exec,
            path_loss: empirical(),
            ready: None,
        }
    }

    pub fn with_path_loss(mut self, pl: Arc<dyn PathLossModel>) -> Self {
        self.path_loss = pl;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_beams(&self) -> usize {
        self.scenario.n_beams()
    }

    pub fn state_len(&self) -> usize {
        state_len(self.n_beams())
    }

    /// The scenario's own beams, in beam order.
    pub fn default_configs(&self) -> Vec<BeamConfig> {
        self.scenario
            .beam_refs()
            .iter()
            .map(|r| self.scenario.sites[r.site].beams[r.beam].clone())
            .collect()
    }

    fn ready(&self) -> Result<&Ready, OptError> {
        self.ready.as_ref().ok_or(OptError::NotReset)
    }

    /// Configurations after the last step.
    pub fn configs(&self) -> Result<&[BeamConfig], OptError> {
        Ok(&self.ready()?.configs)
    }

    pub fn baseline(&self) -> Result<&KpiRow, OptError> {
        Ok(&self.ready()?.baseline)
    }

    pub fn weights(&self) -> Result<RewardWeights, OptError> {
        Ok(self.ready()?.weights)
    }

    pub fn steps(&self) -> usize {
        self.ready.as_ref().map_or(0, |r| r.steps)
    }

    pub fn done(&self) -> bool {
        self.steps() >= self.cfg.max_steps
    }

    /// Override list that turns the scenario into `configs`.
    pub fn overrides(&self, configs: &[BeamConfig]) -> Vec<BeamOverride> {
        self.scenario
            .beam_refs()
            .iter()
            .zip(configs)
            .map(|(r, b)| BeamOverride {
                site_id: self.scenario.sites[r.site].site_id,
                beam: b.clone(),
            })
            .collect()
    }

    fn scenario_with(&self, configs: &[BeamConfig]) -> Scenario {
        let mut s = self.scenario.clone();
        for (r, b) in self.scenario.beam_refs().iter().zip(configs) {
            s.sites[r.site].beams[r.beam] = b.clone();
        }
        s
    }

    fn window(&self, world: &Arc<World>, configs: &[BeamConfig], exec: Exec) -> Result<KpiRow, OptError> {
        let ep = Episode::new(self.scenario_with(configs), world.clone(), self.cfg.window_ticks, false, exec);
        Ok(ep.run()?.0.summary)
    }

    /// Builds the world for `seed`, simulates the default beams and returns
    /// the initial state.
    pub fn reset(&mut self, weights: RewardWeights, seed: u64) -> Result<Vec<f64>, OptError> {
        let weights = weights.normalized()?;
        let horizon = self.cfg.window_ticks as f64 * self.scenario.sim.kpi_tick_s;
        let world = Arc::new(World::build_with(&self.scenario, seed, horizon, self.path_loss.clone(), self.exec)?);
        let configs = self.default_configs();
        let baseline = self.window(&world, &configs, self.exec)?;
        let density = density(&self.scenario, &world.population.positions_at(0.0));
        self.ready = Some(Ready {
            weights,
            world,
            last: baseline.clone(),
            baseline,
            density,
            configs,
            steps: 0,
        });
        self.state()
    }

    /// State for the current configuration and last window.
    pub fn state(&self) -> Result<Vec<f64>, OptError> {
        let r = self.ready()?;
        Ok(self.state_for(&r.configs, &r.last, &r.density))
    }

    fn state_for(&self, configs: &[BeamConfig], kpis: &KpiRow, density: &[f64]) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.state_len());
        for b in configs {
            s.extend(beam_features(b));
        }
        s.extend_from_slice(density);
        s.extend(kpi_features(kpis));
        s
    }

    /// Scores a full configuration set without changing the episode. Safe
    /// to call from several threads.
    pub fn evaluate(&self, configs: &[BeamConfig]) -> Result<Evaluation, OptError> {
        self.evaluate_with(configs, self.exec)
    }

    pub fn evaluate_with(&self, configs: &[BeamConfig], exec: Exec) -> Result<Evaluation, OptError> {
        let r = self.ready()?;
        let kpis = self.window(&r.world, configs, exec)?;
        Ok(Evaluation {
            reward: compute_reward(&kpis, &r.baseline, &r.weights),
            kpis,
        })
    }

    /// Applies `action` to the current beams and simulates the window.
    pub fn step(&mut self, action: &ActionSpec) -> Result<EnvTransition, OptError> {
        if self.ready.is_none() {
            return Err(OptError::NotReset);
        }
        if self.done() {
            return Err(OptError::EpisodeDone);
        }
        let state = self.state()?;
        let (configs, clamps) = apply_action(self.configs()?, action)?;
        let eval = self.evaluate(&configs)?;
        let r = self.ready.as_mut().expect("checked above");
        r.configs = configs;
        r.last = eval.kpis.clone();
        r.steps += 1;
        let next_state = self.state()?;
        Ok(EnvTransition {
            state,
            action: action.clone(),
            reward: eval.reward,
            next_state,
            done: self.done(),
            info: EnvInfo { kpis: eval.kpis, clamps },
        })
    }
}

/// Fraction of users in each cell of a coarse grid, row-major.
fn density(scn: &Scenario, positions: &[crate::scenario::Point]) -> Vec<f64> {
    let mut h = vec![0.0; DENSITY_BINS * DENSITY_BINS];
    if positions.is_empty() {
        return h;
    }
    let g = &scn.grid;
    let bin = |v: f64, o: f64, len: f64| (((v - o) / len * DENSITY_BINS as f64).floor() as isize).clamp(0, DENSITY_BINS as isize - 1) as usize;
    for p in positions {
        h[bin(p.y, g.origin.y, g.height_m) * DENSITY_BINS + bin(p.x, g.origin.x, g.width_m)] += 1.0;
    }
    let n = positions.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}
