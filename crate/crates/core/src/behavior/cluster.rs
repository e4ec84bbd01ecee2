//! Per-app clustering of traffic sessions into action categories.
//!
//! Packets of one (user, app) pair are split into sessions at idle gaps.
//! Each session becomes a point `(mean packet length, mean ln inter-arrival)`;
//! points are z-scored and clustered with k-means++, choosing k by the best
//! mean silhouette. Reported centers are member means in raw feature space.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::Rng;

use super::{BehaviorError, Direction, PacketRecord};
use crate::rng::{self, SimRng};

/// Idle time that closes a session.
pub const SESSION_GAP_S: f64 = 60.0;
/// Floor on inter-arrival times before taking the log.
const MIN_INTER_ARRIVAL_S: f64 = 1e-6;
const RESTARTS: usize = 8;
const MAX_ITERS: usize = 100;
/// Demand rates never fall below this.
pub const MIN_RATE_BPS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = d2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[[f64; 2]], k: usize, r: &mut SimRng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[r.random_range(0..points.len())]];
    let mut dist: Vec<f64> = points.iter().map(|p| d2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            r.random_range(0..points.len())
        };
        let c = points[idx];
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(d2(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(points: &[[f64; 2]], mut centers: Vec<[f64; 2]>) -> KMeans {
    let k = centers.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let j = nearest(p, &centers).0;
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        let mut sum = vec![[0.0; 2]; k];
        let mut cnt = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            sum[*l][0] += p[0];
            sum[*l][1] += p[1];
            cnt[*l] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centers[j] = [sum[j][0] / cnt[j] as f64, sum[j][1] / cnt[j] as f64];
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = labels.iter().zip(points).map(|(l, p)| d2(p, &centers[*l])).sum();
    KMeans { centers, labels, inertia }
}

/// k-means++ with restarts; keeps the run of lowest inertia.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<KMeans, BehaviorError> {
    if k == 0 {
        return Err(BehaviorError::Invalid("k must be positive".into()));
    }
    if points.len() < k {
        return Err(BehaviorError::TooFewPoints { need: k, got: points.len() });
    }
    let mut best: Option<KMeans> = None;
    for restart in 0..RESTARTS {
        let mut r = rng::stream(seed, "kmeans", &[k as u64, restart as u64]);
        let run = lloyd(points, seed_plus_plus(points, k, &mut r));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette coefficient; points in singleton clusters score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let mut size = vec![0usize; k];
    for &l in labels {
        size[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = labels[i];
        if size[li] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d2(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[li] / (size[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

fn standardize(points: &[[f64; 2]]) -> (Vec<[f64; 2]>, bool) {
    let n = points.len() as f64;
    let mut out = points.to_vec();
    let mut degenerate = true;
    for d in 0..2 {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 * mean.abs().max(1.0) {
            degenerate = false;
            for p in &mut out {
                p[d] = (p[d] - mean) / sd;
            }
        } else {
            for p in &mut out {
                p[d] = 0.0;
            }
        }
    }
    (out, degenerate)
}

/// Chooses k over `k_range` by silhouette on z-scored points. Ties go to the
/// smaller k; identical points give `k_min` coincident centers.
pub fn select_k(points: &[[f64; 2]], k_range: RangeInclusive<usize>, seed: u64) -> Result<KMeans, BehaviorError> {
    let (k_min, k_max) = (*k_range.start(), *k_range.end());
    if k_min == 0 || k_max < k_min {
        return Err(BehaviorError::Invalid(format!("bad k range {k_min}..={k_max}")));
    }
    if points.len() < k_min {
        return Err(BehaviorError::TooFewPoints {
            need: k_min,
            got: points.len(),
        });
    }
    let (z, degenerate) = standardize(points);
    let raw_means = |labels: &[usize], k: usize| {
        let mut sum = vec![[0.0; 2]; k];
        let mut cnt = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            sum[*l][0] += p[0];
            sum[*l][1] += p[1];
            cnt[*l] += 1;
        }
        (0..k)
            .map(|j| {
                if cnt[j] > 0 {
                    [sum[j][0] / cnt[j] as f64, sum[j][1] / cnt[j] as f64]
                } else {
                    points[0]
                }
            })
            .collect::<Vec<_>>()
    };
    if degenerate {
        let labels = vec![0; points.len()];
        return Ok(KMeans {
            centers: vec![points[0]; k_min],
            labels,
            inertia: 0.0,
        });
    }
    let mut best: Option<(f64, KMeans)> = None;
    for k in k_min..=k_max.min(points.len()) {
        let km = kmeans(&z, k, seed)?;
        let s = if k == 1 { 0.0 } else { silhouette(&z, &km.labels, k) };
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, km));
        }
    }
    let (_, mut km) = best.expect("non-empty k range");
    km.centers = raw_means(&km.labels, km.centers.len());
    km.inertia = km.labels.iter().zip(points).map(|(l, p)| d2(p, &km.centers[*l])).sum();
    Ok(km)
}

/// One action category inside an app.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCluster {
    /// `[mean packet length (bytes), mean ln inter-arrival (ln s)]`.
    pub center: [f64; 2],
    pub weight: f64,
    pub dl_bps: f64,
    pub ul_bps: f64,
    pub mean_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppClusters {
    pub label: String,
    pub clusters: Vec<ActionCluster>,
}

impl AppClusters {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppActionClusters {
    pub apps: Vec<AppClusters>,
}

impl AppActionClusters {
    pub fn n_apps(&self) -> usize {
        self.apps.len()
    }
}

/// Session statistics used for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user_id: u64,
    pub app: usize,
    pub feature: [f64; 2],
    pub duration_s: f64,
    pub dl_bytes: f64,
    pub ul_bytes: f64,
}

/// Sorted distinct app labels. Every packet must carry one.
pub fn app_labels(packets: &[PacketRecord]) -> Result<Vec<String>, BehaviorError> {
    let mut labels = std::collections::BTreeSet::new();
    for (i, p) in packets.iter().enumerate() {
        match &p.app_label {
            Some(l) => {
                labels.insert(l.clone());
            }
            None => {
                return Err(BehaviorError::BadRow {
                    line: i + 1,
                    reason: "packet has no app label".into(),
                })
            }
        }
    }
    Ok(labels.into_iter().collect())
}

/// Splits packets into sessions. Sessions with fewer than two packets have no
/// duration or inter-arrival and are skipped.
pub fn sessions(packets: &[PacketRecord], labels: &[String]) -> Result<Vec<Session>, BehaviorError> {
    let mut groups: BTreeMap<(u64, usize), Vec<&PacketRecord>> = BTreeMap::new();
    for (i, p) in packets.iter().enumerate() {
        let label = p.app_label.as_ref().ok_or(BehaviorError::BadRow {
            line: i + 1,
            reason: "packet has no app label".into(),
        })?;
        let app = labels
            .binary_search(label)
            .map_err(|_| BehaviorError::Invalid(format!("unknown app label {label}")))?;
        groups.entry((p.user_id, app)).or_default().push(p);
    }
    let mut out = Vec::new();
    for ((user_id, app), mut ps) in groups {
        ps.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
        let mut start = 0;
        for i in 1..=ps.len() {
            if i == ps.len() || ps[i].timestamp_s - ps[i - 1].timestamp_s > SESSION_GAP_S {
                let s = &ps[start..i];
                start = i;
                if s.len() < 2 {
                    continue;
                }
                let mean_len = s.iter().map(|p| p.packet_len_bytes as f64).sum::<f64>() / s.len() as f64;
                let mean_ln_ia = s
                    .windows(2)
                    .map(|w| (w[1].timestamp_s - w[0].timestamp_s).max(MIN_INTER_ARRIVAL_S).ln())
                    .sum::<f64>()
                    / (s.len() - 1) as f64;
                let bytes = |d: Direction| s.iter().filter(|p| p.direction == d).map(|p| p.packet_len_bytes as f64).sum::<f64>();
                out.push(Session {
                    user_id,
                    app,
                    feature: [mean_len, mean_ln_ia],
                    duration_s: (s[s.len() - 1].timestamp_s - s[0].timestamp_s).max(MIN_INTER_ARRIVAL_S),
                    dl_bytes: bytes(Direction::Dl),
                    ul_bytes: bytes(Direction::Ul),
                });
            }
        }
    }
    Ok(out)
}

/// Clusters the sessions of every app. `n_apps` must match the number of
/// distinct labels.
pub fn cluster_app_actions(
    packets: &[PacketRecord],
    n_apps: usize,
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<AppActionClusters, BehaviorError> {
    if packets.is_empty() {
        return Err(BehaviorError::EmptyInput);
    }
    let labels = app_labels(packets)?;
    if labels.len() != n_apps {
        return Err(BehaviorError::MismatchedApps {
            expected: n_apps,
            got: labels.len(),
        });
    }
    let all = sessions(packets, &labels)?;
    let mut apps = Vec::with_capacity(n_apps);
    for (a, label) in labels.iter().enumerate() {
        let ss: Vec<&Session> = all.iter().filter(|s| s.app == a).collect();
        let pts: Vec<[f64; 2]> = ss.iter().map(|s| s.feature).collect();
        let km = select_k(&pts, k_range.clone(), rng::derive(seed, &[rng::label("app"), a as u64]))?;
        let k = km.centers.len();
        let n = ss.len() as f64;
        let coincident = k > 1 && km.centers.iter().all(|c| *c == km.centers[0]);
        let mut clusters = Vec::with_capacity(k);
        for j in 0..k {
            let members: Vec<&&Session> = ss.iter().zip(&km.labels).filter(|(_, l)| **l == j).map(|(s, _)| s).collect();
            // empty clusters only arise for identical points; use the app mean
            let pool: Vec<&Session> = if members.is_empty() {
                ss.clone()
            } else {
                members.iter().map(|s| **s).collect()
            };
            let m = pool.len() as f64;
            let rate = |f: fn(&Session) -> f64| (pool.iter().map(|s| 8.0 * f(s) / s.duration_s).sum::<f64>() / m).max(MIN_RATE_BPS);
            clusters.push(ActionCluster {
                center: km.centers[j],
                weight: if coincident { 1.0 / k as f64 } else { members.len() as f64 / n },
                dl_bps: rate(|s| s.dl_bytes),
                ul_bps: rate(|s| s.ul_bytes),
                mean_duration_s: pool.iter().map(|s| s.duration_s).sum::<f64>() / m,
            });
        }
        normalize_weights(&mut clusters);
        apps.push(AppClusters {
            label: label.clone(),
            clusters,
        });
    }
    Ok(AppActionClusters { apps })
}

fn normalize_weights(cs: &mut [ActionCluster]) {
    let total: f64 = cs.iter().map(|c| c.weight).sum();
    for c in cs.iter_mut() {
        c.weight /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_groups_recover_means() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push([i as f64 * 0.1, 0.0]);
            pts.push([100.0 + i as f64 * 0.1, 50.0]);
        }
        let km = select_k(&pts, 2..=2, 1).unwrap();
        let mut cs = km.centers.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((cs[0][0] - 0.45).abs() < 1e-9 && cs[0][1].abs() < 1e-9);
        assert!((cs[1][0] - 100.45).abs() < 1e-9 && (cs[1][1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn identical_points_give_k_min() {
        let pts = vec![[3.0, 4.0]; 12];
        let km = select_k(&pts, 2..=8, 1).unwrap();
        assert_eq!(km.centers.len(), 2);
        assert!(km.centers.iter().all(|c| *c == [3.0, 4.0]));
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            select_k(&[[0.0, 0.0]], 2..=8, 1),
            Err(BehaviorError::TooFewPoints { need: 2, got: 1 })
        ));
    }

    #[test]
    fn silhouette_perfect_split() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]];
        assert!((silhouette(&pts, &[0, 0, 1, 1], 2) - 1.0).abs() < 1e-12);
    }
}
