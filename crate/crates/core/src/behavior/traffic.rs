//! Per-user app preferences and online service-session generation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::cluster::{app_labels, ActionCluster, AppActionClusters, AppClusters, MIN_RATE_BPS};
use super::{BehaviorError, PacketRecord};
use crate::exec::Exec;
use crate::rng::{self, SimRng};
use crate::scenario::PopulationConfig;

/// Share of each app in a user's bytes. Apps follow sorted label order.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVector {
    pub user_id: u64,
    pub app_probs: Vec<f64>,
}

/// One generated service session; demands are in bits per second.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSession {
    pub user_id: u64,
    pub app_index: usize,
    pub action_cluster: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub demand_bps: f64,
    pub demand_bps_ul: f64,
}

impl ServiceSession {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub horizon_s: f64,
    pub session_rate_per_s: f64,
    /// Spread of demand and duration in log space.
    pub log_sigma: f64,
    pub seed: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            horizon_s: 3600.0,
            session_rate_per_s: 1.0 / 300.0,
            log_sigma: 0.25,
            seed: 0,
        }
    }
}

pub fn build_preference_vectors(packets: &[PacketRecord]) -> Result<Vec<PreferenceVector>, BehaviorError> {
    if packets.is_empty() {
        return Err(BehaviorError::EmptyInput);
    }
    let labels = app_labels(packets)?;
    let mut bytes: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for p in packets {
        let label = p.app_label.as_ref().expect("labels checked above");
        let a = labels.binary_search(label).expect("label is in the universe");
        bytes.entry(p.user_id).or_insert_with(|| vec![0.0; labels.len()])[a] += p.packet_len_bytes as f64;
    }
    Ok(bytes
        .into_iter()
        .map(|(user_id, b)| {
            let total: f64 = b.iter().sum();
            PreferenceVector {
                user_id,
                app_probs: b.iter().map(|x| x / total).collect(),
            }
        })
        .collect())
}

fn sample_index(r: &mut SimRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if u < *w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

fn lognormal(r: &mut SimRng, median: f64, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(r);
    median * (sigma * z).exp()
}

/// Sessions of every user over `[0, horizon_s)`, sorted by user then start.
/// Each user draws from its own stream.
pub fn generate_traffic(
    clusters: &AppActionClusters,
    prefs: &[PreferenceVector],
    cfg: &TrafficConfig,
    exec: Exec,
) -> Result<Vec<ServiceSession>, BehaviorError> {
    if !(cfg.horizon_s >= 0.0 && cfg.session_rate_per_s >= 0.0 && cfg.log_sigma >= 0.0) {
        return Err(BehaviorError::Invalid("traffic horizon, rate and sigma must be non-negative".into()));
    }
    for p in prefs {
        if p.app_probs.len() != clusters.n_apps() {
            return Err(BehaviorError::MismatchedApps {
                expected: clusters.n_apps(),
                got: p.app_probs.len(),
            });
        }
        if p.app_probs.iter().any(|x| x.is_nan() || *x < 0.0) || p.app_probs.iter().sum::<f64>() <= 0.0 {
            return Err(BehaviorError::Invalid(format!("user {} has an invalid preference vector", p.user_id)));
        }
    }
    if cfg.horizon_s == 0.0 || cfg.session_rate_per_s == 0.0 {
        return Ok(Vec::new());
    }
    let gap = Exp::new(cfg.session_rate_per_s).map_err(|e| BehaviorError::Invalid(e.to_string()))?;
    let per_user = exec.map(prefs, |p| {
        let mut r = rng::stream(cfg.seed, "traffic", &[p.user_id]);
        let mut out = Vec::new();
        let mut t: f64 = gap.sample(&mut r);
        while t < cfg.horizon_s {
            let app = sample_index(&mut r, &p.app_probs);
            let cs = &clusters.apps[app].clusters;
            let weights: Vec<f64> = cs.iter().map(|c| c.weight).collect();
            let k = sample_index(&mut r, &weights);
            let c = &cs[k];
            out.push(ServiceSession {
                user_id: p.user_id,
                app_index: app,
                action_cluster: k,
                start_s: t,
                duration_s: lognormal(&mut r, c.mean_duration_s, cfg.log_sigma),
                demand_bps: lognormal(&mut r, c.dl_bps, cfg.log_sigma).max(MIN_RATE_BPS),
                demand_bps_ul: lognormal(&mut r, c.ul_bps, cfg.log_sigma).max(MIN_RATE_BPS),
            });
            t += gap.sample(&mut r);
        }
        out
    });
    Ok(per_user.into_iter().flatten().collect())
}

/// Single-app, single-cluster model built from population defaults; used
/// when no packet corpus is supplied.
pub fn default_clusters(pop: &PopulationConfig) -> AppActionClusters {
    AppActionClusters {
        apps: vec![AppClusters {
            label: "default".into(),
            clusters: vec![ActionCluster {
                center: [0.0, 0.0],
                weight: 1.0,
                dl_bps: pop.dl_demand_bps,
                ul_bps: pop.ul_demand_bps,
                mean_duration_s: pop.session_duration_s,
            }],
        }],
    }
}
