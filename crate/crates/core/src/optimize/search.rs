use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{apply_action, ActionSpec, Env, Evaluation, OptError, MAX_DELTA_DEG};
use crate::exec::Exec;
use crate::net::KpiRow;
use crate::rng::{self, SimRng};
use crate::scenario::{BeamConfig, AZIMUTH_OFFSET_RANGE, H_BEAMWIDTHS, TILT_RANGE, V_BEAMWIDTHS};

pub const PROGRESS_CSV_HEADER: &str = "eval_idx,reward,coverage_pct,avg_rsrp_dbm,avg_sinr_db,dl_mbps,ul_mbps";

/// One environment evaluation made by an optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRow {
    pub eval_idx: usize,
    pub reward: f64,
    pub kpis: KpiRow,
}

pub fn write_progress_csv<W: Write>(mut w: W, rows: &[ProgressRow]) -> std::io::Result<()> {
    writeln!(w, "{PROGRESS_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let k = &r.kpis;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.eval_idx,
            r.reward,
            k.coverage_pct,
            opt(k.avg_rsrp_dbm),
            opt(k.avg_sinr_db),
            k.dl_mbps,
            k.ul_mbps
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_configs: Vec<BeamConfig>,
    pub best_reward: f64,
    /// Baseline KPIs when no candidate beat the default beams.
    pub best_kpis: KpiRow,
    /// Accepted single-parameter actions in order; empty for cross-entropy.
    pub actions: Vec<ActionSpec>,
    pub progress: Vec<ProgressRow>,
    /// Best reward seen after each evaluation.
    pub best_trace: Vec<f64>,
    /// Iterations whose rewards were all equal, leaving the sampling
    /// distribution unchanged.
    pub degenerate_iters: usize,
}

impl SearchResult {
    fn start(env: &Env) -> Result<Self, OptError> {
        Ok(Self {
            best_configs: env.configs()?.to_vec(),
            best_reward: 0.0,
            best_kpis: env.baseline()?.clone(),
            actions: Vec::new(),
            progress: Vec::new(),
            best_trace: Vec::new(),
            degenerate_iters: 0,
        })
    }

    /// Records an evaluation; returns whether it is a new best.
    fn record(&mut self, configs: &[BeamConfig], e: Evaluation) -> bool {
        let better = e.reward > self.best_reward;
        if better {
            self.best_reward = e.reward;
            self.best_configs = configs.to_vec();
            self.best_kpis = e.kpis.clone();
        }
        self.progress.push(ProgressRow {
            eval_idx: self.progress.len(),
            reward: e.reward,
            kpis: e.kpis,
        });
        self.best_trace.push(self.best_reward);
        better
    }
}

/// Single-parameter moves from `cur` for beam `b`, as actions.
fn moves(cur: &[BeamConfig], b: usize) -> Vec<ActionSpec> {
    let base = ActionSpec::noop(cur);
    let a = base.beams[b];
    let mut out = Vec::new();
    let mut push = |f: &dyn Fn(&mut super::BeamAction)| {
        let mut m = base.clone();
        f(&mut m.beams[b]);
        out.push(m);
    };
    if a.h_index > 0 {
        push(&|x| x.h_index -= 1);
    }
    if a.h_index + 1 < H_BEAMWIDTHS.len() {
        push(&|x| x.h_index += 1);
    }
    if a.v_index > 0 {
        push(&|x| x.v_index -= 1);
    }
    if a.v_index + 1 < V_BEAMWIDTHS.len() {
        push(&|x| x.v_index += 1);
    }
    for d in [-MAX_DELTA_DEG, MAX_DELTA_DEG] {
        push(&|x| x.azimuth_delta = d);
        push(&|x| x.tilt_delta = d);
    }
    push(&|x| x.active = !x.active);
    out
}

/// Greedy coordinate search from the environment's current beams. Each
/// sweep tries every single-beam single-parameter move in a seeded random
/// order and keeps the strictly improving ones; the search stops when the
/// budget is spent or a sweep finds nothing.
pub fn hill_climb(env: &Env, budget: usize, seed: u64) -> Result<SearchResult, OptError> {
    if budget == 0 {
        return Err(OptError::InvalidParams("budget must be at least 1".into()));
    }
    let mut res = SearchResult::start(env)?;
    let mut cur = res.best_configs.clone();
    let mut r = rng::stream(seed, "hill-climb", &[]);
    let mut sweep_improved = true;
    while sweep_improved && res.progress.len() < budget {
        sweep_improved = false;
        let mut order: Vec<(usize, usize)> = (0..cur.len()).flat_map(|b| (0..moves(&cur, b).len()).map(move |k| (b, k))).collect();
        order.shuffle(&mut r);
        for (b, k) in order {
            if res.progress.len() >= budget {
                break;
            }
            // earlier acceptances in this sweep may have changed the move set
            let Some(action) = moves(&cur, b).into_iter().nth(k) else { continue };
            let (next, _) = apply_action(&cur, &action)?;
            if next == cur {
                continue;
            }
            let e = env.evaluate(&next)?;
            if res.record(&next, e) {
                cur = next;
                res.actions.push(action);
                sweep_improved = true;
            }
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub iters: usize,
    pub seed: u64,
    /// Initial spread of azimuth and tilt, degrees.
    pub init_sd_deg: f64,
    /// Weight kept on the previous distribution at refit.
    pub smoothing: f64,
}

impl CemConfig {
    /// Population and iteration count that use at most `budget` evaluations.
    pub fn for_budget(budget: usize, seed: u64) -> Self {
        let population = 20.min(budget).max(4);
        Self {
            population,
            iters: (budget / population).max(1) - 1,
            seed,
            ..Self::default()
        }
    }

    pub fn evaluations(&self) -> usize {
        self.population * (self.iters + 1)
    }
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 20,
            elite_frac: 0.2,
            iters: 9,
            seed: 0,
            init_sd_deg: 20.0,
            smoothing: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
struct BeamDist {
    h: Vec<f64>,
    v: Vec<f64>,
    az: (f64, f64),
    tilt: (f64, f64),
    p_active: f64,
}

const MIN_SD_DEG: f64 = 1.0;
const P_ACTIVE_BOUNDS: (f64, f64) = (0.05, 0.95);

fn peaked(n: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.5 / (n - 1) as f64; n];
    p[at] = 0.5;
    p
}

fn categorical(p: &[f64], r: &mut SimRng) -> usize {
    let mut u = r.random::<f64>();
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.len() - 1
}

fn gauss(m: (f64, f64), range: (f64, f64), r: &mut SimRng) -> f64 {
    let x = Normal::new(m.0, m.1).expect("positive sd").sample(r);
    x.round().clamp(range.0, range.1)
}

impl BeamDist {
    fn around(b: &BeamConfig, sd: f64) -> Self {
        Self {
            h: peaked(H_BEAMWIDTHS.len(), b.h_index().unwrap_or(0)),
            v: peaked(V_BEAMWIDTHS.len(), b.v_index().unwrap_or(0)),
            az: (b.azimuth_offset_deg, sd),
            tilt: (b.tilt_deg, sd / 4.0),
            p_active: P_ACTIVE_BOUNDS.1,
        }
    }

    fn sample(&self, template: &BeamConfig, r: &mut SimRng) -> BeamConfig {
        let mut b = template.clone();
        b.h_beamwidth_deg = H_BEAMWIDTHS[categorical(&self.h, r)];
        b.v_beamwidth_deg = V_BEAMWIDTHS[categorical(&self.v, r)];
        b.azimuth_offset_deg = gauss(self.az, AZIMUTH_OFFSET_RANGE, r);
        b.tilt_deg = gauss(self.tilt, TILT_RANGE, r);
        b.active = r.random_bool(self.p_active);
        b
    }

    fn refit(&mut self, elites: &[&BeamConfig], keep: f64) {
        let n = elites.len() as f64;
        let mut h = vec![0.0; H_BEAMWIDTHS.len()];
        let mut v = vec![0.0; V_BEAMWIDTHS.len()];
        for e in elites {
            h[e.h_index().unwrap_or(0)] += 1.0 / n;
            v[e.v_index().unwrap_or(0)] += 1.0 / n;
        }
        let mix = |old: &mut Vec<f64>, new: Vec<f64>| old.iter_mut().zip(new).for_each(|(o, n)| *o = keep * *o + (1.0 - keep) * n);
        mix(&mut self.h, h);
        mix(&mut self.v, v);
        let fit = |old: (f64, f64), xs: Vec<f64>| {
            let m = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
            (keep * old.0 + (1.0 - keep) * m, (keep * old.1 + (1.0 - keep) * sd).max(MIN_SD_DEG))
        };
        self.az = fit(self.az, elites.iter().map(|e| e.azimuth_offset_deg).collect());
        self.tilt = fit(self.tilt, elites.iter().map(|e| e.tilt_deg).collect());
        let act = elites.iter().filter(|e| e.active).count() as f64 / n;
        self.p_active = (keep * self.p_active + (1.0 - keep) * act).clamp(P_ACTIVE_BOUNDS.0, P_ACTIVE_BOUNDS.1);
    }
}

/// Cross-entropy search over full configuration sets. Candidates of an
/// iteration are evaluated in parallel and recorded in candidate order.
pub fn cross_entropy(env: &Env, cfg: &CemConfig, exec: Exec) -> Result<SearchResult, OptError> {
    if cfg.population < 4 {
        return Err(OptError::InvalidParams(format!("population {} < 4", cfg.population)));
    }
    if !(cfg.elite_frac > 0.0 && cfg.elite_frac <= 0.5) {
        return Err(OptError::InvalidParams(format!("elite_frac {} outside (0, 0.5]", cfg.elite_frac)));
    }
    if !(cfg.init_sd_deg > 0.0 && (0.0..1.0).contains(&cfg.smoothing)) {
        return Err(OptError::InvalidParams("init_sd_deg must be positive and smoothing in [0, 1)".into()));
    }
    let mut res = SearchResult::start(env)?;
    let template = res.best_configs.clone();
    let mut dists: Vec<BeamDist> = template.iter().map(|b| BeamDist::around(b, cfg.init_sd_deg)).collect();
    let n_elite = ((cfg.population as f64 * cfg.elite_frac).round() as usize).max(1);
    for it in 0..=cfg.iters {
        let cands: Vec<Vec<BeamConfig>> = (0..cfg.population)
            .map(|i| {
                let mut r = rng::stream(cfg.seed, "cem", &[it as u64, i as u64]);
                dists.iter().zip(&template).map(|(d, t)| d.sample(t, &mut r)).collect()
            })
            .collect();
        let evals = exec.map(&cands, |c| env.evaluate_with(c, Exec::Sequential));
        let mut rewards = Vec::with_capacity(cands.len());
        for (c, e) in cands.iter().zip(evals) {
            let e = e?;
            rewards.push(e.reward);
            res.record(c, e);
        }
        if rewards.iter().all(|&x| x == rewards[0]) {
            res.degenerate_iters += 1;
            continue;
        }
        let mut idx: Vec<usize> = (0..cands.len()).collect();
        idx.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
        for (bi, d) in dists.iter_mut().enumerate() {
            let elites: Vec<&BeamConfig> = idx[..n_elite].iter().map(|&i| &cands[i][bi]).collect();
            d.refit(&elites, cfg.smoothing);
        }
    }
    Ok(res)
}
