//! PRB scheduling within one beam and the per-user rate map.

use crate::scenario::SchedulerKind;

pub const PRB_BANDWIDTH_HZ: f64 = 180e3;

/// One user competing for PRBs on a beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedUser {
    pub user: usize,
    /// Rate one PRB would carry for this user this tick, bps.
    pub rate_per_prb_bps: f64,
    /// Offered load; zero means no active session.
    pub demand_bps: f64,
    /// Smoothed past throughput, bps.
    pub avg_tput_bps: f64,
}

pub fn rate_per_prb(sinr_db: f64, max_se: f64, overhead: f64) -> f64 {
    let se = (1.0 + 10f64.powf(sinr_db / 10.0)).log2().min(max_se);
    PRB_BANDWIDTH_HZ * se * (1.0 - overhead)
}

/// Delivered rate for an allocation, capped by demand.
pub fn user_throughput(prbs: u32, sinr_db: f64, max_se: f64, overhead: f64, demand_bps: f64) -> f64 {
    if prbs == 0 {
        return 0.0;
    }
    (prbs as f64 * rate_per_prb(sinr_db, max_se, overhead)).min(demand_bps)
}

// keeps the first proportional-fair metric finite for users without history
const PF_FLOOR_BPS: f64 = 1.0;

/// PRB counts per entry of `users`. The sum never exceeds `n_prb`; users
/// with zero demand, zero rate, or already-met demand get nothing more.
pub fn schedule(kind: SchedulerKind, users: &[SchedUser], n_prb: u32, alpha: f64, tick: u64) -> Vec<u32> {
    let mut alloc = vec![0u32; users.len()];
    let hungry = |i: usize, alloc: &[u32]| {
        let u = &users[i];
        u.demand_bps > 0.0 && u.rate_per_prb_bps > 0.0 && (alloc[i] as f64) * u.rate_per_prb_bps < u.demand_bps
    };
    match kind {
        SchedulerKind::Pf => {
            for _ in 0..n_prb {
                let mut best: Option<(usize, f64)> = None;
                for i in 0..users.len() {
                    if !hungry(i, &alloc) {
                        continue;
                    }
                    let u = &users[i];
                    let so_far = alloc[i] as f64 * u.rate_per_prb_bps;
                    let denom = ((1.0 - alpha) * u.avg_tput_bps + alpha * so_far).max(PF_FLOOR_BPS);
                    let metric = u.rate_per_prb_bps / denom;
                    let better = match best {
                        None => true,
                        Some((j, bm)) => metric > bm || (metric == bm && u.rate_per_prb_bps > users[j].rate_per_prb_bps),
                    };
                    if better {
                        best = Some((i, metric));
                    }
                }
                match best {
                    Some((i, _)) => alloc[i] += 1,
                    None => break,
                }
            }
        }
        SchedulerKind::Rr => {
            let n = users.len();
            if n == 0 {
                return alloc;
            }
            let mut next = (tick as usize) % n;
            for _ in 0..n_prb {
                let Some(k) = (0..n).map(|o| (next + o) % n).find(|&i| hungry(i, &alloc)) else {
                    break;
                };
                alloc[k] += 1;
                next = (k + 1) % n;
            }
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn su(user: usize, sinr_db: f64, demand: f64) -> SchedUser {
        SchedUser {
            user,
            rate_per_prb_bps: rate_per_prb(sinr_db, 7.8, 0.14),
            demand_bps: demand,
            avg_tput_bps: 0.0,
        }
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(user_throughput(0, 20.0, 7.8, 0.14, 1e9), 0.0);
        let sinr = 10.0 * 9.0909f64.log10();
        let r = user_throughput(100, sinr, 7.8, 0.14, f64::INFINITY);
        assert!((r / 1e6 - 51.63).abs() < 0.05, "{r}");
        let cap = user_throughput(100, 200.0, 7.8, 0.14, f64::INFINITY);
        assert!((cap - 100.0 * 180e3 * 7.8 * 0.86).abs() < 1e-6);
        assert_eq!(user_throughput(100, 20.0, 7.8, 0.14, 5e6), 5e6);
    }

    #[test]
    fn single_user_takes_all() {
        for kind in [SchedulerKind::Pf, SchedulerKind::Rr] {
            assert_eq!(schedule(kind, &[su(0, 10.0, 1e12)], 100, 0.1, 0), vec![100]);
        }
    }

    #[test]
    fn symmetric_users_split() {
        let a = schedule(SchedulerKind::Pf, &[su(0, 10.0, 1e12), su(1, 10.0, 1e12)], 101, 0.1, 0);
        assert!(a[0].abs_diff(a[1]) <= 1, "{a:?}");
        assert_eq!(a[0] + a[1], 101);
    }

    #[test]
    fn idle_users_get_nothing() {
        let a = schedule(SchedulerKind::Pf, &[su(0, 10.0, 0.0), su(1, 3.0, 1e12)], 50, 0.1, 0);
        assert_eq!(a, vec![0, 50]);
    }

    #[test]
    fn demand_cap_frees_prbs() {
        let small = su(0, 10.0, 1e6);
        let a = schedule(SchedulerKind::Pf, &[small, su(1, 10.0, 1e12)], 100, 0.1, 0);
        let need = (1e6 / small.rate_per_prb_bps).ceil() as u32;
        assert_eq!(a[0], need);
        assert_eq!(a[1], 100 - need);
    }

    #[test]
    fn pf_not_worse_than_rr_asymmetric() {
        let users = [su(0, 0.0, 1e12), su(1, 20.0, 1e12)];
        for n_prb in [25, 50, 51, 100] {
            let total = |a: &[u32]| a.iter().zip(&users).map(|(&p, u)| p as f64 * u.rate_per_prb_bps).sum::<f64>();
            let pf = schedule(SchedulerKind::Pf, &users, n_prb, 0.1, 0);
            let rr = schedule(SchedulerKind::Rr, &users, n_prb, 0.1, 0);
            assert!(total(&pf) >= total(&rr), "{pf:?} vs {rr:?}");
        }
    }
}
